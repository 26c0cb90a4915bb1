# Base classes shared by the HAAM block variants.

from abc import ABC, abstractmethod
from collections import OrderedDict
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .. import ops
from ..tensor import Parameter
from ..errors import ConfigError, MissingAttentionError, ShapeError

VARIANTS = ("full", "channel_only", "spatial_only", "small_receptive_field",
        "plain_conv")

# (kernel, dilation) of the 3x3, 5x5 and dilated branches
_BRANCH_KERNELS = {
    "full" : ((3, 1), (5, 1), (3, 3)),
    "small_receptive_field" : ((3, 1), (3, 1), (3, 2)),
}

class Module:
    """
    A container of named Parameters and child Modules.
    """
    def __init__(self, prefix):
        self.prefix = prefix
        self._parameters = OrderedDict()
        self._children = OrderedDict()

    def _name(self, name):
        return "{}.{}".format(self.prefix, name) if self.prefix else name

    def add_parameter(self, name, data):
        param = Parameter(self._name(name), data)
        self._parameters[name] = param
        return param

    def add_module(self, name, module):
        self._children[name] = module
        return module

    def modules(self):
        """
        Yields this module and all descendants, depth first.
        """
        yield self
        for child in self._children.values():
            yield from child.modules()

    def parameters(self):
        """
        List of all Parameters in construction order.
        """
        params = []
        for module in self.modules():
            params.extend(module._parameters.values())
        return params

    def named_parameters(self):
        return OrderedDict((p.name, p) for p in self.parameters())

    def num_parameters(self):
        return sum(p.size for p in self.parameters())

    def zero_grad(self):
        for p in self.parameters():
            p.zero_grad()

    def zero_attention_gates(self):
        """
        Zero the final layer of every attention gate, so all attention maps
        equal sigmoid(0) = 0.5.
        """
        for module in self.modules():
            if hasattr(module, "zero_gate"):
                module.zero_gate()

class Conv2d(Module):
    """
    Convolution layer with "same" zero padding, Kaiming-uniform fan-in
    weights and zero bias.
    """
    def __init__(self, prefix, in_channels, out_channels, kernel_size, rng,
            dilation=1):
        super().__init__(prefix)
        if (dilation * (kernel_size - 1)) % 2:
            raise ConfigError("Kernel extent must be odd for same padding")
        self.kernel_size = kernel_size
        self.dilation = dilation
        self.padding = dilation * (kernel_size - 1) // 2
        fan_in = in_channels * kernel_size * kernel_size
        bound = np.sqrt(6.0 / fan_in)
        self.weight = self.add_parameter("weight", rng.uniform(-bound, bound,
            (out_channels, in_channels, kernel_size, kernel_size)))
        self.bias = self.add_parameter("bias", np.zeros((1, out_channels, 1, 1)))

    def __call__(self, x):
        return ops.conv2d(x, self.weight, self.bias, stride=1,
                padding=self.padding, dilation=self.dilation)

    def zero(self):
        self.weight.assign(np.zeros(self.weight.shape))
        self.bias.assign(np.zeros(self.bias.shape))

@dataclass(frozen=True)
class HaamConfig:
    """
    Architectural hyperparameters of one block.

    Parameters
    ----------
    in_channels : int

    out_channels : int

    mid_channels : int
        Width of the three branches. Defaults to out_channels.

    reduction_ratio : int
        Bottleneck ratio of the channel attention gate. Default 4.

    variant : str
        One of "full", "channel_only", "spatial_only",
        "small_receptive_field", "plain_conv".
    """
    in_channels: int
    out_channels: int
    mid_channels: Optional[int] = None
    reduction_ratio: int = 4
    variant: str = "full"

    def __post_init__(self):
        if self.mid_channels is None:
            object.__setattr__(self, "mid_channels", self.out_channels)
        if self.variant not in VARIANTS:
            raise ConfigError("Unknown variant '{}', expected one of {}".format(
                self.variant, ", ".join(VARIANTS)))
        for name in ("in_channels", "out_channels", "mid_channels", "reduction_ratio"):
            if int(getattr(self, name)) < 1:
                raise ConfigError("{} must be positive".format(name))
        if self.has_channel_attention and self.mid_channels // self.reduction_ratio < 1:
            raise ConfigError("mid_channels ({}) / reduction_ratio ({}) must be >= 1".format(
                self.mid_channels, self.reduction_ratio))

    @property
    def has_channel_attention(self):
        return self.variant in ("full", "small_receptive_field", "channel_only")

    @property
    def has_spatial_attention(self):
        return self.variant in ("full", "small_receptive_field", "spatial_only")

    @property
    def branch_kernels(self):
        """
        (kernel, dilation) pairs of the 3x3, 5x5 and dilated branches.
        """
        return _BRANCH_KERNELS.get(self.variant, _BRANCH_KERNELS["full"])

    @property
    def bottleneck_channels(self):
        return self.mid_channels // self.reduction_ratio

class AttentionMaps:
    """
    The attention gates computed by one forward pass of a block.

    Only alpha and beta are stored; their complements are always
    recomputed as 1 - alpha and 1 - beta.
    """
    def __init__(self, alpha=None, beta=None, features=None):
        """
        Parameters
        ----------
        alpha : GraphNode of shape (n, mid_channels, 1, 1) or None
            Channel attention map

        beta : GraphNode of shape (n, 1, h, w) or None
            Spatial attention map

        features : dict of str -> GraphNode
            Intermediate feature maps, kept for inspection
        """
        self._alpha = alpha
        self._beta = beta
        self.features = features or {}

    @property
    def has_alpha(self):
        return self._alpha is not None

    @property
    def has_beta(self):
        return self._beta is not None

    @property
    def alpha(self):
        if self._alpha is None:
            raise MissingAttentionError("This block variant has no channel attention")
        return self._alpha.data

    @property
    def beta(self):
        if self._beta is None:
            raise MissingAttentionError("This block variant has no spatial attention")
        return self._beta.data

    @property
    def alpha_complement(self):
        return 1 - self.alpha

    @property
    def beta_complement(self):
        return 1 - self.beta

class Block(Module, ABC):
    """
    A stage building block mapping (n, in_channels, h, w) to
    (n, out_channels, h, w).
    """
    def __init__(self, cfg, prefix):
        super().__init__(prefix)
        self.cfg = cfg

    @abstractmethod
    def forward(self, x):
        """
        Parameters
        ----------
        x : GraphNode of shape (n, in_channels, h, w)

        Returns
        -------
        out : GraphNode of shape (n, out_channels, h, w)

        maps : AttentionMaps or None
            None for blocks without attention.
        """
        raise NotImplementedError

    def __call__(self, x):
        return self.forward(x)

    def _check_input(self, x):
        x = ops.as_node(x)
        if x.shape[1] != self.cfg.in_channels:
            raise ShapeError("{} input does not match config".format(self.prefix or "block"),
                    "channels", self.cfg.in_channels, x.shape[1])
        return x
