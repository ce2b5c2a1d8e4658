"""Convolutional frontend and dual-axis feature gating.

A small ResNet over the (freq, time) plane pools frequency down to a few
bands, then two sequential squeeze-style gates reweight the map: the temporal
gate averages over frequency and learns per-(channel, frame) weights through
1x5 -> 1x3 strip convolutions; the frequency gate averages over time and uses
5x1 -> 3x1. Both end in a sigmoid so gates are bounded in (0, 1). The gated
map is flattened per frame and projected to the sequence width.
"""

from __future__ import annotations

import numpy as np

from .numerics import Module, Tensor, conv1d, conv2d, linear_init, param, relu, sigmoid
from .numerics.module import Linear
from .numerics.tensor import ShapeError, mean, reshape, standardize, transpose

FREQ_POOL = 4


class ChannelNorm2d(Module):
    """Per-channel standardization over the (H, W) plane, affine."""

    def __init__(self, channels):
        super().__init__()
        self.gamma = param(np.ones((channels, 1, 1)))
        self.beta = param(np.zeros((channels, 1, 1)))

    def forward(self, x):
        return standardize(x, axes=(1, 2)) * self.gamma + self.beta


class ResidualStage(Module):
    """conv3x3 -> norm -> relu -> conv3x3 -> norm, plus a 1x1-projected skip."""

    def __init__(self, rng, c_in, c_out):
        super().__init__()
        self.w1 = linear_init(rng.child("w1"), c_in * 9, (c_out, c_in, 3, 3))
        self.b1 = param(np.zeros(c_out))
        self.n1 = ChannelNorm2d(c_out)
        self.w2 = linear_init(rng.child("w2"), c_out * 9, (c_out, c_out, 3, 3))
        self.b2 = param(np.zeros(c_out))
        self.n2 = ChannelNorm2d(c_out)
        self.wskip = linear_init(rng.child("skip"), c_in, (c_out, c_in, 1, 1))
        self.bskip = param(np.zeros(c_out))

    def forward(self, x):
        y = relu(self.n1(conv2d(x, self.w1, self.b1)))
        y = self.n2(conv2d(y, self.w2, self.b2))
        return relu(y + conv2d(x, self.wskip, self.bskip))


def freq_pool(x, factor=FREQ_POOL):
    """Average-pool the frequency axis of a (C, F, T) map by `factor`."""
    c, f, t = x.shape
    if f % factor:
        raise ShapeError(f"freq_pool: {f} frequency bins not divisible by {factor}")
    return mean(reshape(x, (c, f // factor, factor, t)), axis=2)


class ResNetFrontend(Module):
    """Three residual stages with x4 frequency pooling after each.

    Input (C_in, F, T) feature planes; output (C', T, F') maps with
    F' = F / 64. The default channel plan is 4 -> 32 -> 64 -> 128.
    """

    def __init__(self, rng, c_in=4, channels=(32, 64, 128)):
        super().__init__()
        stages = []
        prev = c_in
        for i, c in enumerate(channels):
            stages.append(ResidualStage(rng.child(f"stage{i}"), prev, c))
            prev = c
        self.stages = stages
        self.out_channels = prev

    def forward(self, feat):
        x = feat if isinstance(feat, Tensor) else Tensor(feat)
        for stage in self.stages:
            x = freq_pool(stage(x))
        return transpose(x, (0, 2, 1))  # (C', T, F')


class FaGate(Module):
    """Strip-conv gate over one axis: k5 bottleneck -> relu -> k3 -> sigmoid."""

    def __init__(self, rng, channels, reduction=4):
        super().__init__()
        hidden = max(1, channels // reduction)
        self.w1 = linear_init(rng.child("w1"), channels * 5, (hidden, channels, 5))
        self.b1 = param(np.zeros(hidden))
        self.w2 = linear_init(rng.child("w2"), hidden * 3, (channels, hidden, 3))
        self.b2 = param(np.zeros(channels))

    def forward(self, z):
        h = relu(conv1d(z, self.w1, self.b1, padding="same"))
        return sigmoid(conv1d(h, self.w2, self.b2, padding="same"))


class FaBlock(Module):
    """Sequential temporal-then-frequency gating of a (C, T, F) map."""

    def __init__(self, rng, channels, reduction=4):
        super().__init__()
        self.temporal_gate = FaGate(rng.child("temporal"), channels, reduction)
        self.frequency_gate = FaGate(rng.child("frequency"), channels, reduction)

    def temporal_attention(self, x):
        z_t = mean(x, axis=2)  # (C, T)
        w_t = self.temporal_gate(z_t)
        return x * reshape(w_t, (*w_t.shape, 1))

    def frequency_attention(self, x):
        z_f = mean(x, axis=1)  # (C, F)
        w_f = self.frequency_gate(z_f)
        return x * reshape(w_f, (w_f.shape[0], 1, w_f.shape[1]))

    def forward(self, x):
        return self.frequency_attention(self.temporal_attention(x))


def fa_gate_param_count(channels, reduction=4):
    """Closed-form parameter count of the two gates (four strip convs)."""
    hidden = max(1, channels // reduction)
    one_gate = (channels * hidden * 5 + hidden) + (hidden * channels * 3 + channels)
    return 2 * one_gate


class ToSequence(Module):
    """Flatten (C, T, F) per frame and project to the model width."""

    def __init__(self, rng, channels, freq_bins, width):
        super().__init__()
        self.proj = Linear(rng.child("proj"), channels * freq_bins, width)

    def forward(self, x):
        c, t, f = x.shape
        flat = reshape(transpose(x, (1, 0, 2)), (t, c * f))
        return self.proj(flat)
