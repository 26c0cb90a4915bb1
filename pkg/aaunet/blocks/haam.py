# Hybrid adaptive attention module and its ablation variants.

from collections import namedtuple

import numpy as np

from .. import ops
from ..errors import ShapeError
from .block import Block, Module, Conv2d, AttentionMaps

ChannelAttentionResult = namedtuple("ChannelAttentionResult", "alpha f_c_s f_c_d")
"""
Output of `channel_attention`.

.. py:attribute:: alpha
    Channel attention map of shape (n, mid, 1, 1)

.. py:attribute:: f_c_s
    (1 - alpha) calibrated 5x5 branch

.. py:attribute:: f_c_d
    alpha calibrated dilated branch
"""

SpatialAttentionResult = namedtuple("SpatialAttentionResult", "beta f_out features")
"""
Output of `spatial_attention`.

.. py:attribute:: beta
    Spatial attention map of shape (n, 1, h, w)

.. py:attribute:: f_out
    Output feature map of the block

.. py:attribute:: features
    dict with the projected ("s1", "c_s1") and calibrated
    ("c_s1_cal", "s1_cal") feature maps
"""

def channel_attention(f5, fd, squeeze, excite):
    """
    Channel self-attention with complementary gates.

    The two branches are summed, globally average pooled and passed through
    a 1x1 convolution bottleneck with ReLU. The sigmoid of the result is
    alpha; alpha gates the dilated branch and 1 - alpha gates the 5x5 branch.

    Parameters
    ----------
    f5 : GraphNode of shape (n, mid, h, w)
        5x5 branch features

    fd : GraphNode of shape (n, mid, h, w)
        Dilated branch features

    squeeze : Conv2d
        1x1 convolution mid -> mid / reduction_ratio

    excite : Conv2d
        1x1 convolution mid / reduction_ratio -> mid

    Returns
    -------
    ChannelAttentionResult
    """
    f5, fd = ops.as_node(f5), ops.as_node(fd)
    if f5.shape != fd.shape:
        raise ShapeError("channel_attention branches disagree", "shape",
                f5.shape, fd.shape)
    fused = ops.add(f5, fd)
    pooled = ops.global_average_pool(fused)
    logits = excite(ops.relu(squeeze(pooled)))
    alpha = ops.sigmoid(logits)
    f_c_d = ops.broadcast_mul(alpha, fd)
    f_c_s = ops.broadcast_mul(ops.one_minus(alpha), f5)
    return ChannelAttentionResult(alpha, f_c_s, f_c_d)

def spatial_attention(f3, fused, local_proj, fused_proj, gate, out_proj):
    """
    Spatial self-attention with complementary gates.

    Parameters
    ----------
    f3 : GraphNode of shape (n, mid, h, w)
        3x3 branch features

    fused : GraphNode of shape (n, 2 mid, h, w)
        Concatenation of the channel-calibrated branches

    local_proj : Conv2d
        1x1 convolution mid -> mid applied to f3

    fused_proj : Conv2d
        1x1 convolution 2 mid -> mid applied to fused

    gate : Conv2d
        1x1 convolution mid -> 1 producing the pre-sigmoid map

    out_proj : Conv2d
        1x1 convolution 2 mid -> out_channels

    Returns
    -------
    SpatialAttentionResult
    """
    f3, fused = ops.as_node(f3), ops.as_node(fused)
    mid = f3.shape[1]
    if fused.shape[1] != 2 * mid:
        raise ShapeError("spatial_attention fused input must have twice the branch width",
                "channels", 2 * mid, fused.shape[1])
    s1 = local_proj(f3)
    c_s1 = fused_proj(fused)
    beta = ops.sigmoid(gate(ops.relu(ops.add(s1, c_s1))))
    c_s1_cal = ops.broadcast_mul(beta, c_s1)
    s1_cal = ops.broadcast_mul(ops.one_minus(beta), s1)
    f_out = out_proj(ops.concat_channels(c_s1_cal, s1_cal))
    features = {"s1" : s1, "c_s1" : c_s1, "c_s1_cal" : c_s1_cal, "s1_cal" : s1_cal}
    return SpatialAttentionResult(beta, f_out, features)

class ChannelAttention(Module):
    def __init__(self, prefix, mid_channels, bottleneck_channels, rng):
        super().__init__(prefix)
        self.squeeze = self.add_module("squeeze", Conv2d(self._name("squeeze"),
            mid_channels, bottleneck_channels, 1, rng))
        # Pooled input is non-negative; non-negative weights leave no dead
        # bottleneck unit at init.
        self.squeeze.weight.assign(np.abs(self.squeeze.weight.value))
        self.excite = self.add_module("excite", Conv2d(self._name("excite"),
            bottleneck_channels, mid_channels, 1, rng))

    def __call__(self, f5, fd):
        return channel_attention(f5, fd, self.squeeze, self.excite)

    def zero_gate(self):
        self.excite.zero()

class SpatialAttention(Module):
    def __init__(self, prefix, mid_channels, out_channels, rng):
        super().__init__(prefix)
        self.local_proj = self.add_module("local_proj", Conv2d(self._name("local_proj"),
            mid_channels, mid_channels, 1, rng))
        self.fused_proj = self.add_module("fused_proj", Conv2d(self._name("fused_proj"),
            2 * mid_channels, mid_channels, 1, rng))
        self.gate = self.add_module("gate", Conv2d(self._name("gate"),
            mid_channels, 1, 1, rng))
        self.out_proj = self.add_module("out_proj", Conv2d(self._name("out_proj"),
            2 * mid_channels, out_channels, 1, rng))

    def __call__(self, f3, fused):
        return spatial_attention(f3, fused, self.local_proj, self.fused_proj,
                self.gate, self.out_proj)

    def zero_gate(self):
        self.gate.zero()

class _BranchMixin:
    def _add_branches(self, rng, names=("conv3", "conv5", "convd")):
        cfg = self.cfg
        for name, (kernel, dilation) in zip(("conv3", "conv5", "convd"), cfg.branch_kernels):
            if name not in names:
                continue
            conv = Conv2d(self._name(name), cfg.in_channels, cfg.mid_channels,
                    kernel, rng, dilation=dilation)
            setattr(self, name, self.add_module(name, conv))

class HaamBlock(_BranchMixin, Block):
    """
    Hybrid adaptive attention module.

    Three parallel branches (3x3, 5x5 and 3x3 with dilation 3, each followed by
    ReLU) feed a channel attention gate choosing between the 5x5 and dilated
    branches, then a spatial attention gate choosing between the 3x3 branch
    and the channel-calibrated features.

    With ``variant="small_receptive_field"`` the second branch (still named
    conv5) uses a 3x3 kernel and the dilated branch a dilation of 2.
    """
    def __init__(self, cfg, prefix, rng):
        super().__init__(cfg, prefix)
        self._add_branches(rng)
        self.channel = self.add_module("channel", ChannelAttention(self._name("channel"),
            cfg.mid_channels, cfg.bottleneck_channels, rng))
        self.spatial = self.add_module("spatial", SpatialAttention(self._name("spatial"),
            cfg.mid_channels, cfg.out_channels, rng))

    def forward(self, x):
        x = self._check_input(x)
        f3 = ops.relu(self.conv3(x))
        f5 = ops.relu(self.conv5(x))
        fd = ops.relu(self.convd(x))
        ch = self.channel(f5, fd)
        fused = ops.concat_channels(ch.f_c_s, ch.f_c_d)
        sp = self.spatial(f3, fused)
        features = {"f3" : f3, "f5" : f5, "fd" : fd, "f_c_s" : ch.f_c_s,
                "f_c_d" : ch.f_c_d}
        features.update(sp.features)
        return sp.f_out, AttentionMaps(alpha=ch.alpha, beta=sp.beta, features=features)

class ChannelOnlyBlock(_BranchMixin, Block):
    """
    Ablation block: the 5x5 and dilated branches with channel attention,
    reduced by a 1x1 convolution over the concatenated calibrated features.
    """
    def __init__(self, cfg, prefix, rng):
        super().__init__(cfg, prefix)
        self._add_branches(rng, names=("conv5", "convd"))
        self.channel = self.add_module("channel", ChannelAttention(self._name("channel"),
            cfg.mid_channels, cfg.bottleneck_channels, rng))
        self.out_proj = self.add_module("out_proj", Conv2d(self._name("out_proj"),
            2 * cfg.mid_channels, cfg.out_channels, 1, rng))

    def forward(self, x):
        x = self._check_input(x)
        f5 = ops.relu(self.conv5(x))
        fd = ops.relu(self.convd(x))
        ch = self.channel(f5, fd)
        out = self.out_proj(ops.concat_channels(ch.f_c_s, ch.f_c_d))
        features = {"f5" : f5, "fd" : fd, "f_c_s" : ch.f_c_s, "f_c_d" : ch.f_c_d}
        return out, AttentionMaps(alpha=ch.alpha, features=features)

class SpatialOnlyBlock(_BranchMixin, Block):
    """
    Ablation block: spatial attention between the 3x3 branch and the raw
    (ungated) 5x5 and dilated branches.
    """
    def __init__(self, cfg, prefix, rng):
        super().__init__(cfg, prefix)
        self._add_branches(rng)
        self.spatial = self.add_module("spatial", SpatialAttention(self._name("spatial"),
            cfg.mid_channels, cfg.out_channels, rng))

    def forward(self, x):
        x = self._check_input(x)
        f3 = ops.relu(self.conv3(x))
        f5 = ops.relu(self.conv5(x))
        fd = ops.relu(self.convd(x))
        sp = self.spatial(f3, ops.concat_channels(f5, fd))
        features = {"f3" : f3, "f5" : f5, "fd" : fd}
        features.update(sp.features)
        return sp.f_out, AttentionMaps(beta=sp.beta, features=features)
