"""Lightweight Conformer components: feedforward pair, attention, shift conv.

The expansion FFN is the usual D -> 4D -> D sandwich; the squeeze FFN
compresses D -> D/2 -> D instead, cutting its parameter count to ~1/8 of the
expansion variant. The convolution module optionally displaces half the
channels in four groups (+k, -k, +k//2, -k//2 frames) before a small
depthwise kernel, widening the receptive field at zero parameter cost.

All pre-norms are parameter-free (the following linear absorbs any affine);
every block returns its branch value and the caller applies the residual.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .numerics import Module, conv1d, dropout, layer_norm, param, sigmoid, silu, softmax
from .numerics.module import Linear, linear_init
from .numerics.tensor import ShapeError, matmul, narrow, reshape, time_shift, transpose


@dataclass(frozen=True)
class ShiftSpec:
    """Shift schedule for the conv module: 4 groups over half the channels."""

    kernel: int
    enabled: bool = True

    @property
    def offsets(self):
        k = self.kernel
        return (k, -k, k // 2, -k // 2)


class FeedForwardExpand(Module):
    """norm -> D -> 4D -> swish -> dropout -> D. Count: 8D^2 + 5D."""

    def __init__(self, rng, width, p_drop=0.1, factor=4):
        super().__init__()
        self.lin1 = Linear(rng.child("lin1"), width, factor * width)
        self.lin2 = Linear(rng.child("lin2"), factor * width, width)
        self._p_drop = p_drop
        self._rng = rng.child("dropout")

    def forward(self, x):
        h = silu(self.lin1(layer_norm(x)))
        h = dropout(h, self._p_drop, self._rng, self.training)
        return self.lin2(h)


class FeedForwardSqueeze(Module):
    """norm -> D -> D/2 -> swish -> D. Count: D^2 + 3D/2."""

    def __init__(self, rng, width):
        super().__init__()
        if width % 2:
            raise ShapeError(f"squeeze FFN needs even width, got {width}")
        self.lin1 = Linear(rng.child("lin1"), width, width // 2)
        self.lin2 = Linear(rng.child("lin2"), width // 2, width)

    def forward(self, x):
        return self.lin2(silu(self.lin1(layer_norm(x))))


def ffn_expand_param_count(width, factor=4):
    return 2 * factor * width * width + (factor + 1) * width


def ffn_squeeze_param_count(width):
    return width * width + 3 * width // 2


class MultiHeadSelfAttention(Module):
    """Pre-norm scaled dot-product attention over the frame axis."""

    def __init__(self, rng, width, heads):
        super().__init__()
        if width % heads:
            raise ShapeError(f"width {width} not divisible by {heads} heads")
        self.heads = heads
        self.wq = Linear(rng.child("q"), width, width)
        self.wk = Linear(rng.child("k"), width, width)
        self.wv = Linear(rng.child("v"), width, width)
        self.wo = Linear(rng.child("o"), width, width)

    def attention_weights(self, x):
        """(H, L, L) softmax rows; exposed for tests."""
        ln, d = x.shape
        h = self.heads
        xn = layer_norm(x)
        q = transpose(reshape(self.wq(xn), (ln, h, d // h)), (1, 0, 2))
        k = transpose(reshape(self.wk(xn), (ln, h, d // h)), (1, 0, 2))
        scores = matmul(q, transpose(k, (0, 2, 1))) * (1.0 / np.sqrt(d // h))
        return softmax(scores, axis=-1)

    def forward(self, x):
        ln, d = x.shape
        h = self.heads
        xn = layer_norm(x)
        q = transpose(reshape(self.wq(xn), (ln, h, d // h)), (1, 0, 2))
        k = transpose(reshape(self.wk(xn), (ln, h, d // h)), (1, 0, 2))
        v = transpose(reshape(self.wv(xn), (ln, h, d // h)), (1, 0, 2))
        scores = matmul(q, transpose(k, (0, 2, 1))) * (1.0 / np.sqrt(d // h))
        ctx = matmul(softmax(scores, axis=-1), v)  # (H, L, dh)
        return self.wo(reshape(transpose(ctx, (1, 0, 2)), (ln, d)))


class ChannelAffineNorm(Module):
    """Per-frame standardization over channels with learned scale/offset."""

    def __init__(self, width):
        super().__init__()
        self.gamma = param(np.ones(width))
        self.beta = param(np.zeros(width))

    def forward(self, x):
        return layer_norm(x) * self.gamma + self.beta


class ConvModule(Module):
    """norm -> pointwise 2D + GLU -> [time shift] -> depthwise k -> norm ->
    swish -> pointwise D -> dropout. Residual applied by the caller."""

    def __init__(self, rng, width, spec: ShiftSpec, p_drop=0.1):
        super().__init__()
        if width % 8:
            raise ShapeError(f"conv module needs width divisible by 8, got {width}")
        self.spec = spec
        self.pw1 = Linear(rng.child("pw1"), width, 2 * width)
        self.dw_w = linear_init(rng.child("dw"), spec.kernel, (width, 1, spec.kernel))
        self.dw_b = param(np.zeros(width))
        self.norm = ChannelAffineNorm(width)
        self.pw2 = Linear(rng.child("pw2"), width, width)
        self._p_drop = p_drop
        self._rng = rng.child("dropout")

    def forward(self, x):
        ln, d = x.shape
        h = self.pw1(layer_norm(x))
        a = narrow(h, (slice(None), slice(0, d)))
        b = narrow(h, (slice(None), slice(d, 2 * d)))
        h = a * sigmoid(b)  # GLU
        if self.spec.enabled:
            h = time_shift(h, self.spec.offsets)
        h = transpose(conv1d(transpose(h), self.dw_w, self.dw_b, padding="same",
                             groups=d))
        h = silu(self.norm(h))
        h = self.pw2(h)
        return dropout(h, self._p_drop, self._rng, self.training)
