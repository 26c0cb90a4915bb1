from .. import ops
from .block import Block, Conv2d

class PlainConvBlock(Block):
    """
    U-net baseline block: two 3x3 convolutions, each followed by ReLU.
    Computes no attention maps.
    """
    def __init__(self, cfg, prefix, rng):
        super().__init__(cfg, prefix)
        self.conv1 = self.add_module("conv1", Conv2d(self._name("conv1"),
            cfg.in_channels, cfg.mid_channels, 3, rng))
        self.conv2 = self.add_module("conv2", Conv2d(self._name("conv2"),
            cfg.mid_channels, cfg.out_channels, 3, rng))

    def forward(self, x):
        x = self._check_input(x)
        out = ops.relu(self.conv2(ops.relu(self.conv1(x))))
        return out, None
