# The AAU-net encoder-decoder and its ablation variants.

import hashlib
import json
import logging
from collections import namedtuple
from dataclasses import dataclass, asdict
from typing import Tuple

import numpy as np

from ConfigSpace import ConfigurationSpace
from ConfigSpace.hyperparameters import (UniformIntegerHyperparameter,
        CategoricalHyperparameter)

from . import ops
from .tensor import Tensor, GraphNode, no_grad
from .blocks import VARIANTS, Module, Conv2d, HaamConfig, build_variant
from .errors import ConfigError, ShapeError, MissingAttentionError

logger = logging.getLogger(__name__)

StageAttention = namedtuple("StageAttention", "name alpha beta")
"""
Attention maps of one HAAM, as returned by `AAUNet.attention_dump`.

.. py:attribute:: name
    Hierarchical block name, e.g. "enc1.haam2"

.. py:attribute:: alpha
    numpy array (n, mid, 1, 1), or None if the variant has no channel attention

.. py:attribute:: beta
    numpy array (n, 1, h, w), or None if the variant has no spatial attention
"""

@dataclass(frozen=True)
class ModelConfig:
    """
    Architectural hyperparameters of the whole network.

    Parameters
    ----------
    depth : int
        Number of down-sampling (and up-sampling) steps. Default 4.

    base_width : int
        Channel count of the first stage; level l has base_width * 2^l.

    in_channels : int
        Image channels, 1 for grayscale.

    variant : str
        Block variant used by every stage, see `aaunet.blocks.VARIANTS`.

    input_size : (int, int)
        Resolution images are resized to when a dataset is loaded for this
        model. Divisible by 2^depth. The network itself is fully
        convolutional: forward and predict accept any (h, w) divisible by
        2^depth, not only input_size.

    reduction_ratio : int
        Channel attention bottleneck ratio.
    """
    depth: int = 4
    base_width: int = 16
    in_channels: int = 1
    variant: str = "full"
    input_size: Tuple[int, int] = (256, 256)
    reduction_ratio: int = 4

    def __post_init__(self):
        object.__setattr__(self, "input_size", tuple(int(s) for s in self.input_size))
        if self.variant not in VARIANTS:
            raise ConfigError("Unknown variant '{}', expected one of {}".format(
                self.variant, ", ".join(VARIANTS)))
        object.__setattr__(self, "variant", str(self.variant))
        for name in ("depth", "base_width", "in_channels", "reduction_ratio"):
            object.__setattr__(self, name, int(getattr(self, name)))
            if getattr(self, name) < 1:
                raise ConfigError("{} must be positive".format(name))
        if len(self.input_size) != 2:
            raise ConfigError("input_size must be (height, width)")
        factor = 2 ** self.depth
        for extent in self.input_size:
            if extent < factor or extent % factor:
                raise ConfigError("input_size {} must be divisible by 2^depth = {}".format(
                    self.input_size, factor))
        # base_width / reduction_ratio >= 1
        HaamConfig(self.in_channels, self.base_width, reduction_ratio=self.reduction_ratio,
                variant=self.variant)

    def width(self, level):
        """
        Channel count of the stage at `level` (0 = first encoder stage,
        depth = bottleneck).
        """
        return self.base_width * 2 ** level

    def to_dict(self):
        d = asdict(self)
        d["input_size"] = list(self.input_size)
        return d

    @classmethod
    def from_dict(cls, d):
        try:
            return cls(**d)
        except TypeError as e:
            raise ConfigError("Invalid model config: {}".format(e))

    def to_json(self):
        return json.dumps(self.to_dict(), sort_keys=True)

    @classmethod
    def from_json(cls, text):
        return cls.from_dict(json.loads(text))

class Stage(Module):
    """
    Blocks applied in sequence at one resolution: two HAAMs, or a single
    plain block (itself two convolutions) for the U-net baseline.
    """
    def __init__(self, prefix, in_channels, out_channels, cfg, rng):
        super().__init__(prefix)
        self.blocks = []
        if cfg.variant == "plain_conv":
            names = ["conv"]
        else:
            names = ["haam1", "haam2"]
        channels = in_channels
        for name in names:
            block_cfg = HaamConfig(channels, out_channels,
                    reduction_ratio=cfg.reduction_ratio, variant=cfg.variant)
            block = build_variant(block_cfg, prefix=self._name(name), rng=rng)
            self.blocks.append(self.add_module(name, block))
            channels = out_channels

    def __call__(self, x, maps_out=None):
        for block in self.blocks:
            x, maps = block(x)
            if maps_out is not None and maps is not None:
                maps_out.append((block.prefix, maps))
        return x

class AAUNet(Module):
    """
    U-shaped encoder-decoder whose stages are HAAM blocks.

    The encoder has `depth` stages, each followed by 2x2 max pooling; the
    bottleneck runs at width base_width * 2^depth; every decoder stage
    upsamples, concatenates the matching encoder output and applies its
    blocks. A 1x1 convolution with sigmoid produces the lesion probability.
    """
    def __init__(self, cfg, seed=0):
        """
        Parameters
        ----------
        cfg : ModelConfig

        seed : int
            Seed of the weight initialization.
        """
        super().__init__("")
        self.cfg = cfg
        self.seed = seed
        rng = np.random.default_rng(seed)
        self.encoders = []
        channels = cfg.in_channels
        for level in range(cfg.depth):
            name = "enc{}".format(level + 1)
            stage = Stage(name, channels, cfg.width(level), cfg, rng)
            self.encoders.append(self.add_module(name, stage))
            channels = cfg.width(level)
        self.bottleneck = self.add_module("bottleneck", Stage("bottleneck", channels,
            cfg.width(cfg.depth), cfg, rng))
        self.decoders = []
        for level in reversed(range(cfg.depth)):
            name = "dec{}".format(level + 1)
            in_channels = cfg.width(level + 1) + cfg.width(level)
            stage = Stage(name, in_channels, cfg.width(level), cfg, rng)
            self.decoders.append(self.add_module(name, stage))
        self.head = self.add_module("head", Conv2d("head", cfg.width(0), 1, 1, rng))
        logger.debug("Built %s AAU-net with %d parameters", cfg.variant,
                self.num_parameters())

    @property
    def dtype(self):
        return self.head.weight.dtype

    def _check_input(self, x):
        if isinstance(x, GraphNode):
            data = x.data
        elif isinstance(x, Tensor):
            data = x.data
        else:
            data = np.asarray(x)
        if data.ndim != 4:
            raise ShapeError("Model input must be (n, c, h, w)", "rank", 4, data.ndim)
        if data.shape[1] != self.cfg.in_channels:
            raise ShapeError("Model input does not match config", "channels",
                    self.cfg.in_channels, data.shape[1])
        factor = 2 ** self.cfg.depth
        for dim, extent in (("height", data.shape[2]), ("width", data.shape[3])):
            if extent % factor:
                raise ShapeError("Model input extents must be divisible by {}".format(factor),
                        dim, "multiple of {}".format(factor), extent)
        if isinstance(x, GraphNode) and data.dtype == self.dtype:
            return x
        return GraphNode(Tensor(data, dtype=self.dtype))

    def _run(self, x, maps_out=None):
        x = self._check_input(x)
        skips = []
        for stage in self.encoders:
            x = stage(x, maps_out)
            skips.append(x)
            x = ops.max_pool_2x2(x)
        x = self.bottleneck(x, maps_out)
        for stage, skip in zip(self.decoders, reversed(skips)):
            x = ops.concat_channels(ops.upsample_nearest_2x(x), skip)
            x = stage(x, maps_out)
        return ops.sigmoid(self.head(x))

    def forward(self, x):
        """
        Differentiable forward pass.

        Parameters
        ----------
        x : GraphNode, Tensor or array of shape (n, in_channels, h, w)
            h and w must be divisible by 2^depth; they need not equal
            cfg.input_size.

        Returns
        -------
        GraphNode of shape (n, 1, h, w) with values in (0, 1)
        """
        return self._run(x)

    __call__ = forward

    def predict(self, x):
        """
        Inference without building the autodiff graph.

        Returns
        -------
        Tensor of shape (n, 1, h, w)
        """
        with no_grad():
            return self._run(x).value

    def attention_dump(self, x):
        """
        Run inference and collect the attention maps of every HAAM, in
        forward order (encoder, bottleneck, decoder).

        Returns
        -------
        list of StageAttention
        """
        if self.cfg.variant == "plain_conv":
            raise MissingAttentionError("plain_conv blocks compute no attention maps")
        collected = []
        with no_grad():
            self._run(x, collected)
        dump = []
        for name, maps in collected:
            alpha = maps.alpha if maps.has_alpha else None
            beta = maps.beta if maps.has_beta else None
            dump.append(StageAttention(name, alpha, beta))
        return dump

    def cast(self, dtype):
        """
        Convert every parameter to `dtype` (float32 or float64).
        """
        for p in self.parameters():
            p.cast(dtype)
        return self

    def checksum(self):
        """
        SHA-256 over parameter names and values.
        """
        h = hashlib.sha256()
        for name, p in self.named_parameters().items():
            h.update(name.encode())
            h.update(np.ascontiguousarray(p.value).tobytes())
        return h.hexdigest()

def build_model(cfg, seed=0):
    """
    Construct an AAU-net (or ablation variant) with weights initialized
    deterministically from `seed`.
    """
    names = set()
    model = AAUNet(cfg, seed)
    for p in model.parameters():
        if p.name in names:
            raise ConfigError("Duplicate parameter name {}".format(p.name))
        names.add(p.name)
    return model

class AAUNetFactory:
    """
    Creates AAU-net models from ConfigSpace configurations.

    Hyperparameters:

    - *depth* (Type: int, Low: 1, High: 5, Default: 4): Number of
      down-sampling steps
    - *base_width* (Type: int, Low: 4, High: 64, Default: 16): Channels of
      the first stage
    - *reduction_ratio* (Type: int, Low: 1, High: 8, Default: 4): Channel
      attention bottleneck ratio
    - *variant* (Type: str, Choices: full, channel_only, spatial_only,
      small_receptive_field, plain_conv, Default: full): Block variant
    """
    def __init__(self, **kwargs):
        """
        Parameters
        ----------
        kwargs
            Fixed ModelConfig fields not in the configuration space, such as
            in_channels and input_size.
        """
        self.kwargs = kwargs
        self.name = "AAUNet"

    def get_configuration_space(self):
        cs = ConfigurationSpace()
        cs.add(UniformIntegerHyperparameter(name="depth",
            lower=1, upper=5, default_value=4))
        cs.add(UniformIntegerHyperparameter(name="base_width",
            lower=4, upper=64, default_value=16))
        cs.add(UniformIntegerHyperparameter(name="reduction_ratio",
            lower=1, upper=8, default_value=4))
        cs.add(CategoricalHyperparameter(name="variant",
            choices=list(VARIANTS), default_value="full"))
        return cs

    def __call__(self, cfg, seed=0):
        """
        Parameters
        ----------
        cfg : Configuration
            Configuration from `get_configuration_space()`

        seed : int

        Returns
        -------
        AAUNet
        """
        model_args = dict(cfg)
        model_args.update(self.kwargs)
        return build_model(ModelConfig(**model_args), seed)
