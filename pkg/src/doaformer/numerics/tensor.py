"""Minimal float64 tensor engine with reverse-mode differentiation.

Every value is a numpy float64 array wrapped in a Tensor. Forward ops record
a Node (inputs + vjp closure) when any input requires a gradient; backward()
walks the recorded graph once in reverse topological order and accumulates
gradients into the .grad buffer of every tensor on the path.

Ops are coarse-grained (conv2d, softmax, layer norm, ... are single nodes
with hand-derived vjps) so graphs stay small; each vjp is validated against
central finite differences in the test suite.
"""

from __future__ import annotations

import numpy as np


class ShapeError(ValueError):
    """Input shapes invalid for an op. Message names the op and both shapes."""


_GRAD_ENABLED = True


class no_grad:
    """Context manager that disables graph recording (inference mode)."""

    def __enter__(self):
        global _GRAD_ENABLED
        self._prev = _GRAD_ENABLED
        _GRAD_ENABLED = False
        return self

    def __exit__(self, *exc):
        global _GRAD_ENABLED
        _GRAD_ENABLED = self._prev
        return False


class Node:
    """Record of the producing operation, for backward traversal."""

    __slots__ = ("op", "inputs", "vjp")

    def __init__(self, op, inputs, vjp):
        self.op = op
        self.inputs = inputs
        self.vjp = vjp  # grad_out -> tuple of grads aligned with inputs (None allowed)


class Tensor:
    __slots__ = ("data", "grad", "node", "requires_grad")

    def __init__(self, data, requires_grad=False):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad = None
        self.node = None
        self.requires_grad = bool(requires_grad)

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    @property
    def size(self):
        return self.data.size

    def item(self):
        return float(self.data.reshape(()))

    def zero_grad(self):
        self.grad = None

    def detach(self):
        return Tensor(self.data)

    def backward(self, seed=None):
        """Accumulate gradients of self (seeded by `seed`, default ones)."""
        if seed is None:
            seed = np.ones_like(self.data)
        else:
            seed = np.broadcast_to(np.asarray(seed, dtype=np.float64), self.data.shape)
        topo = []
        visited = set()
        stack = [(self, False)]
        while stack:
            t, processed = stack.pop()
            if processed:
                topo.append(t)
                continue
            if id(t) in visited:
                continue
            visited.add(id(t))
            stack.append((t, True))
            if t.node is not None:
                for parent in t.node.inputs:
                    if id(parent) not in visited:
                        stack.append((parent, False))
        buf = {id(self): np.array(seed, dtype=np.float64)}
        for t in reversed(topo):
            g = buf.pop(id(t), None)
            if g is None:
                continue
            t.grad = g if t.grad is None else t.grad + g
            if t.node is None:
                continue
            gins = t.node.vjp(g)
            for parent, gp in zip(t.node.inputs, gins):
                if gp is None:
                    continue
                acc = buf.get(id(parent))
                buf[id(parent)] = gp if acc is None else acc + gp

    # -- operator sugar -------------------------------------------------
    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(other, self)

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(other, self)

    def __truediv__(self, other):
        return div(self, other)

    def __rtruediv__(self, other):
        return div(other, self)

    def __matmul__(self, other):
        return matmul(self, other)

    def __neg__(self):
        return neg(self)

    def __getitem__(self, key):
        return narrow(self, key)

    def sum(self, axis=None, keepdims=False):
        return sum_(self, axis, keepdims)

    def mean(self, axis=None, keepdims=False):
        return mean(self, axis, keepdims)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)

    def transpose(self, *axes):
        if len(axes) == 1 and isinstance(axes[0], (tuple, list)):
            axes = tuple(axes[0])
        return transpose(self, axes or None)

    @property
    def T(self):
        return transpose(self, None)

    def __repr__(self):
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad})"


def as_tensor(x):
    return x if isinstance(x, Tensor) else Tensor(x)


def _make(op, out_data, inputs, vjp):
    out = Tensor(out_data)
    if _GRAD_ENABLED and any(t.requires_grad or t.node is not None for t in inputs):
        out.requires_grad = True
        out.node = Node(op, inputs, vjp)
    return out


def apply_op(op, inputs, out_data, vjp):
    """Create a graph node for a custom op (used by the scan kernel)."""
    return _make(op, out_data, tuple(inputs), vjp)


def _unbroadcast(g, shape):
    """Reduce gradient g back to `shape` after numpy broadcasting."""
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for ax, dim in enumerate(shape):
        if dim == 1 and g.shape[ax] != 1:
            g = g.sum(axis=ax, keepdims=True)
    return g.reshape(shape)


# -- elementwise binary ------------------------------------------------


def add(a, b):
    a, b = as_tensor(a), as_tensor(b)
    try:
        out = a.data + b.data
    except ValueError:
        raise ShapeError(f"add: shapes {a.shape} and {b.shape} not broadcastable")
    return _make("add", out, (a, b), lambda g: (_unbroadcast(g, a.shape), _unbroadcast(g, b.shape)))


def sub(a, b):
    a, b = as_tensor(a), as_tensor(b)
    try:
        out = a.data - b.data
    except ValueError:
        raise ShapeError(f"sub: shapes {a.shape} and {b.shape} not broadcastable")
    return _make("sub", out, (a, b), lambda g: (_unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)))


def mul(a, b):
    a, b = as_tensor(a), as_tensor(b)
    try:
        out = a.data * b.data
    except ValueError:
        raise ShapeError(f"mul: shapes {a.shape} and {b.shape} not broadcastable")
    ad, bd = a.data, b.data
    return _make(
        "mul", out, (a, b),
        lambda g: (_unbroadcast(g * bd, a.shape), _unbroadcast(g * ad, b.shape)),
    )


def div(a, b):
    a, b = as_tensor(a), as_tensor(b)
    try:
        out = a.data / b.data
    except ValueError:
        raise ShapeError(f"div: shapes {a.shape} and {b.shape} not broadcastable")
    ad, bd = a.data, b.data
    return _make(
        "div", out, (a, b),
        lambda g: (
            _unbroadcast(g / bd, a.shape),
            _unbroadcast(-g * ad / (bd * bd), b.shape),
        ),
    )


def neg(a):
    a = as_tensor(a)
    return _make("neg", -a.data, (a,), lambda g: (-g,))


def matmul(a, b):
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim < 2 or b.ndim < 2:
        raise ShapeError(f"matmul: needs >=2-d operands, got {a.shape} and {b.shape}")
    if a.shape[-1] != b.shape[-2]:
        raise ShapeError(f"matmul: inner dims disagree for shapes {a.shape} and {b.shape}")
    out = a.data @ b.data
    ad, bd = a.data, b.data

    def vjp(g):
        ga = g @ np.swapaxes(bd, -1, -2)
        gb = np.swapaxes(ad, -1, -2) @ g
        return _unbroadcast(ga, a.shape), _unbroadcast(gb, b.shape)

    return _make("matmul", out, (a, b), vjp)


# -- elementwise unary -------------------------------------------------


def exp(a):
    a = as_tensor(a)
    out = np.exp(a.data)
    return _make("exp", out, (a,), lambda g: (g * out,))


def expm1(a):
    a = as_tensor(a)
    out = np.expm1(a.data)
    ad = a.data
    return _make("expm1", out, (a,), lambda g: (g * np.exp(ad),))


def log(a):
    a = as_tensor(a)
    ad = a.data
    return _make("log", np.log(ad), (a,), lambda g: (g / ad,))


def sqrt(a):
    a = as_tensor(a)
    out = np.sqrt(a.data)
    return _make("sqrt", out, (a,), lambda g: (g * 0.5 / out,))


def tanh(a):
    a = as_tensor(a)
    out = np.tanh(a.data)
    return _make("tanh", out, (a,), lambda g: (g * (1.0 - out * out),))


def sigmoid(a):
    a = as_tensor(a)
    out = _sigmoid(a.data)
    return _make("sigmoid", out, (a,), lambda g: (g * out * (1.0 - out),))


def _sigmoid(x):
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    e = np.exp(x[~pos])
    out[~pos] = e / (1.0 + e)
    return out


def silu(a):
    """x * sigmoid(x); the Swish activation."""
    a = as_tensor(a)
    s = _sigmoid(a.data)
    out = a.data * s
    ad = a.data
    return _make("silu", out, (a,), lambda g: (g * (s + ad * s * (1.0 - s)),))


swish = silu


def relu(a):
    a = as_tensor(a)
    out = np.maximum(a.data, 0.0)
    mask = a.data > 0
    return _make("relu", out, (a,), lambda g: (g * mask,))


def softplus(a):
    a = as_tensor(a)
    ad = a.data
    out = np.logaddexp(0.0, ad)
    return _make("softplus", out, (a,), lambda g: (g * _sigmoid(ad),))


_PHI1_CUT = 1e-6


def _phi1_val(x):
    """expm1(x)/x with a Taylor fallback near 0 (phi1(0) = 1)."""
    out = np.empty_like(x)
    small = np.abs(x) < _PHI1_CUT
    xs = x[small]
    out[small] = 1.0 + xs / 2.0 + xs * xs / 6.0 + xs * xs * xs / 24.0
    xl = x[~small]
    out[~small] = np.expm1(xl) / xl
    return out


def _phi1_deriv(x):
    """d/dx [expm1(x)/x] = (exp(x)(x-1)+1)/x^2, series near 0."""
    out = np.empty_like(x)
    small = np.abs(x) < _PHI1_CUT
    xs = x[small]
    out[small] = 0.5 + xs / 3.0 + xs * xs / 8.0
    xl = x[~small]
    out[~small] = (np.exp(xl) * (xl - 1.0) + 1.0) / (xl * xl)
    return out


def phi1(a):
    """First ZOH integrator factor expm1(x)/x, series-guarded near zero."""
    a = as_tensor(a)
    ad = a.data
    return _make("phi1", _phi1_val(ad), (a,), lambda g: (g * _phi1_deriv(ad),))


# -- shape ops ---------------------------------------------------------


def reshape(a, shape):
    a = as_tensor(a)
    old = a.shape
    try:
        out = a.data.reshape(shape)
    except ValueError:
        raise ShapeError(f"reshape: cannot view shape {old} as {shape}")
    return _make("reshape", out, (a,), lambda g: (g.reshape(old),))


def transpose(a, axes=None):
    a = as_tensor(a)
    out = np.transpose(a.data, axes)
    if axes is None:
        inv = None
    else:
        inv = np.argsort(axes)
    return _make("transpose", out, (a,), lambda g: (np.transpose(g, inv),))


def flip(a, axis):
    a = as_tensor(a)
    return _make("flip", np.flip(a.data, axis), (a,), lambda g: (np.flip(g, axis),))


def concat(tensors, axis=0):
    ts = [as_tensor(t) for t in tensors]
    base = list(ts[0].shape)
    for t in ts[1:]:
        other = list(t.shape)
        if len(other) != len(base) or any(
            i != axis and other[i] != base[i] for i in range(len(base))
        ):
            raise ShapeError(f"concat: shapes {ts[0].shape} and {t.shape} disagree off axis {axis}")
    out = np.concatenate([t.data for t in ts], axis=axis)
    sizes = [t.shape[axis] for t in ts]
    splits = np.cumsum(sizes)[:-1]

    def vjp(g):
        return tuple(np.split(g, splits, axis=axis))

    return _make("concat", out, tuple(ts), vjp)


def narrow(a, key):
    """Basic slicing; gradient scatters back into the sliced region."""
    a = as_tensor(a)
    out = a.data[key]
    shape = a.shape

    def vjp(g):
        full = np.zeros(shape, dtype=np.float64)
        full[key] += g
        return (full,)

    return _make("slice", out.copy(), (a,), vjp)


# -- reductions --------------------------------------------------------


def sum_(a, axis=None, keepdims=False):
    a = as_tensor(a)
    out = a.data.sum(axis=axis, keepdims=keepdims)
    shape = a.shape

    def vjp(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, shape).copy(),)

    return _make("sum", out, (a,), vjp)


def mean(a, axis=None, keepdims=False):
    a = as_tensor(a)
    out = a.data.mean(axis=axis, keepdims=keepdims)
    shape = a.shape
    n = a.data.size / max(out.size, 1)

    def vjp(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, shape) / n,)

    return _make("mean", out, (a,), vjp)


# -- normalization and softmax -----------------------------------------


def softmax(a, axis=-1):
    a = as_tensor(a)
    shifted = a.data - a.data.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    out = e / e.sum(axis=axis, keepdims=True)

    def vjp(g):
        dot = (g * out).sum(axis=axis, keepdims=True)
        return (out * (g - dot),)

    return _make("softmax", out, (a,), vjp)


def standardize(a, axes, eps=1e-5):
    """(x - mean) / sqrt(var + eps) over `axes`; the norm primitive."""
    a = as_tensor(a)
    ad = a.data
    mu = ad.mean(axis=axes, keepdims=True)
    var = ad.var(axis=axes, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    out = (ad - mu) * inv
    n = 1
    for ax in (axes if isinstance(axes, tuple) else (axes,)):
        n *= ad.shape[ax]

    def vjp(g):
        gm = g.mean(axis=axes, keepdims=True)
        gy = (g * out).mean(axis=axes, keepdims=True)
        return (inv * (g - gm - out * gy),)

    return _make("layer-norm", out, (a,), vjp)


def layer_norm(a, eps=1e-5):
    """Parameter-free layer norm over the last axis."""
    return standardize(a, axes=-1, eps=eps)


# -- dropout -----------------------------------------------------------


def dropout(a, p, rng, training):
    a = as_tensor(a)
    if not training or p <= 0.0:
        return a
    keep = (rng.uniform(size=a.shape) >= p) / (1.0 - p)
    return _make("dropout", a.data * keep, (a,), lambda g: (g * keep,))


# -- convolutions ------------------------------------------------------


def _pad_amounts(k, padding):
    if padding == "same":
        left = (k - 1) // 2
        return left, k - 1 - left
    if padding == "causal":
        return k - 1, 0
    if padding == "valid":
        return 0, 0
    raise ValueError(f"unknown padding {padding!r}")


def conv1d(x, w, b=None, padding="same", groups=1):
    """1-d convolution over the last axis.

    x: (C_in, T); w: (C_out, C_in // groups, k); b: (C_out,) or None.
    groups=1 mixes channels, groups=C_in is depthwise. Cross-correlation
    convention (no kernel flip), stride 1.
    """
    x, w = as_tensor(x), as_tensor(w)
    if x.ndim != 2 or w.ndim != 3:
        raise ShapeError(f"conv1d: expected x (C,T) and w (O,I,k), got {x.shape} and {w.shape}")
    cin, t = x.shape
    cout, cin_g, k = w.shape
    if cin_g * groups != cin or cout % groups:
        raise ShapeError(f"conv1d: shapes {x.shape} and {w.shape} invalid for groups={groups}")
    lp, rp = _pad_amounts(k, padding)
    t_out = t + lp + rp - (k - 1)
    xp = np.zeros((cin, t + lp + rp), dtype=np.float64)
    xp[:, lp : lp + t] = x.data
    out = np.zeros((cout, t_out), dtype=np.float64)
    wd = w.data
    if groups == 1:
        for j in range(k):
            out += wd[:, :, j] @ xp[:, j : j + t_out]
    elif groups == cin and cout == cin:
        for j in range(k):
            out += wd[:, 0, j : j + 1] * xp[:, j : j + t_out]
    else:
        og, ig = cout // groups, cin // groups
        for gi in range(groups):
            for j in range(k):
                out[gi * og : (gi + 1) * og] += (
                    wd[gi * og : (gi + 1) * og, :, j] @ xp[gi * ig : (gi + 1) * ig, j : j + t_out]
                )
    inputs = [x, w]
    if b is not None:
        b = as_tensor(b)
        if b.shape != (cout,):
            raise ShapeError(f"conv1d: bias shape {b.shape} does not match out channels ({cout},)")
        out += b.data[:, None]
        inputs.append(b)

    def vjp(g):
        gxp = np.zeros_like(xp)
        gw = np.zeros_like(wd)
        if groups == 1:
            for j in range(k):
                gw[:, :, j] = g @ xp[:, j : j + t_out].T
                gxp[:, j : j + t_out] += wd[:, :, j].T @ g
        elif groups == cin and cout == cin:
            for j in range(k):
                gw[:, 0, j] = (g * xp[:, j : j + t_out]).sum(axis=1)
                gxp[:, j : j + t_out] += wd[:, 0, j : j + 1] * g
        else:
            og, ig = cout // groups, cin // groups
            for gi in range(groups):
                gs = g[gi * og : (gi + 1) * og]
                for j in range(k):
                    gw[gi * og : (gi + 1) * og, :, j] = gs @ xp[gi * ig : (gi + 1) * ig, j : j + t_out].T
                    gxp[gi * ig : (gi + 1) * ig, j : j + t_out] += (
                        wd[gi * og : (gi + 1) * og, :, j].T @ gs
                    )
        gx = gxp[:, lp : lp + t]
        if b is not None:
            return gx, gw, g.sum(axis=1)
        return gx, gw

    return _make("conv1d", out, tuple(inputs), vjp)


def conv2d(x, w, b=None, padding="same"):
    """2-d convolution, stride 1.

    x: (C_in, H, W); w: (C_out, C_in, kh, kw); b: (C_out,) or None.
    """
    x, w = as_tensor(x), as_tensor(w)
    if x.ndim != 3 or w.ndim != 4:
        raise ShapeError(f"conv2d: expected x (C,H,W) and w (O,I,kh,kw), got {x.shape} and {w.shape}")
    cin, h, wd_ = x.shape
    cout, cin_w, kh, kw = w.shape
    if cin_w != cin:
        raise ShapeError(f"conv2d: channel dims disagree for shapes {x.shape} and {w.shape}")
    tp, bp = _pad_amounts(kh, padding)
    lp, rp = _pad_amounts(kw, padding)
    h_out = h + tp + bp - (kh - 1)
    w_out = wd_ + lp + rp - (kw - 1)
    xp = np.zeros((cin, h + tp + bp, wd_ + lp + rp), dtype=np.float64)
    xp[:, tp : tp + h, lp : lp + wd_] = x.data
    out = np.zeros((cout, h_out * w_out), dtype=np.float64)
    wdat = w.data
    for i in range(kh):
        for j in range(kw):
            patch = xp[:, i : i + h_out, j : j + w_out].reshape(cin, -1)
            out += wdat[:, :, i, j] @ patch
    out = out.reshape(cout, h_out, w_out)
    inputs = [x, w]
    if b is not None:
        b = as_tensor(b)
        if b.shape != (cout,):
            raise ShapeError(f"conv2d: bias shape {b.shape} does not match out channels ({cout},)")
        out += b.data[:, None, None]
        inputs.append(b)

    def vjp(g):
        gm = g.reshape(cout, -1)
        gxp = np.zeros_like(xp)
        gw = np.zeros_like(wdat)
        for i in range(kh):
            for j in range(kw):
                patch = xp[:, i : i + h_out, j : j + w_out].reshape(cin, -1)
                gw[:, :, i, j] = gm @ patch.T
                gxp[:, i : i + h_out, j : j + w_out] += (wdat[:, :, i, j].T @ gm).reshape(
                    cin, h_out, w_out
                )
        gx = gxp[:, tp : tp + h, lp : lp + wd_]
        if b is not None:
            return gx, gw, gm.sum(axis=1)
        return gx, gw

    return _make("conv2d", out, tuple(inputs), vjp)


# -- time shift --------------------------------------------------------


def time_shift(x, offsets):
    """Shift channel groups along the frame axis, zero-filling vacated frames.

    x: (L, D) with D divisible by 2*len(offsets). The first D/2 channels pass
    through; the rest splits into len(offsets) equal groups, group i displaced
    by offsets[i] frames (positive = delay). Zero learned parameters.
    """
    x = as_tensor(x)
    if x.ndim != 2:
        raise ShapeError(f"time_shift: expected (L, D), got {x.shape}")
    ln, d = x.shape
    ngroups = len(offsets)
    if d % (2 * ngroups):
        raise ShapeError(f"time_shift: width {d} not divisible by {2 * ngroups} (shape {x.shape})")
    gsz = d // (2 * ngroups)

    def shift_apply(src, offs):
        dst = np.zeros_like(src)
        dst[:, : d // 2] = src[:, : d // 2]
        for i, off in enumerate(offs):
            lo = d // 2 + i * gsz
            sl = (slice(off, None), slice(lo, lo + gsz)) if off >= 0 else (
                slice(None, off),
                slice(lo, lo + gsz),
            )
            src_sl = (slice(None, ln - off), slice(lo, lo + gsz)) if off >= 0 else (
                slice(-off, None),
                slice(lo, lo + gsz),
            )
            if abs(off) < ln:
                dst[sl] = src[src_sl]
        return dst

    out = shift_apply(x.data, offsets)
    inv = [-o for o in offsets]
    return _make("time_shift", out, (x,), lambda g: (shift_apply(g, inv),))
