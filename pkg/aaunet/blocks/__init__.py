import numpy as np

from ..errors import ConfigError
from .block import (VARIANTS, Module, Conv2d, Block, HaamConfig, AttentionMaps)
from .haam import (HaamBlock, ChannelOnlyBlock, SpatialOnlyBlock, ChannelAttention,
        SpatialAttention, channel_attention, spatial_attention,
        ChannelAttentionResult, SpatialAttentionResult)
from .plain import PlainConvBlock

_BLOCK_CLASSES = {
    "full" : HaamBlock,
    "small_receptive_field" : HaamBlock,
    "channel_only" : ChannelOnlyBlock,
    "spatial_only" : SpatialOnlyBlock,
    "plain_conv" : PlainConvBlock,
}

def build_variant(cfg, prefix="", rng=None, seed=None):
    """
    Construct the block implementing `cfg.variant`.

    Parameters
    ----------
    cfg : HaamConfig

    prefix : str
        Name prefix of the block's parameters, e.g. "enc1.haam1"

    rng : numpy.random.Generator
        Optional: source of initial weights. Created from `seed` if omitted.

    seed : int
        Optional: seed used when `rng` is not given.

    Returns
    -------
    Block
    """
    if not isinstance(cfg, HaamConfig):
        raise ConfigError("build_variant expects a HaamConfig")
    try:
        cls = _BLOCK_CLASSES[cfg.variant]
    except KeyError:
        raise ConfigError("Unknown variant '{}'".format(cfg.variant))
    if rng is None:
        rng = np.random.default_rng(seed)
    return cls(cfg, prefix, rng)
