"""Selective-SSM scan: kernel selection and the autodiff-facing op.

The recurrence h_t = abar_t * h_{t-1} + bbar_t * x_t, y_t = <c_t, h_t> is the
one hot loop in the package. Three kernels compute it:

  * naive   - per-step numpy loop (reference oracle)
  * blocked - sqrt(L)-blocked associative scan, vectorized numpy
  * compiled - Cython extension, used when importable

The production path prefers the compiled kernel and falls back to the blocked
one; DOAFORMER_PURE=1 forces the fallback so both paths can be tested and
benchmarked against each other.
"""

from __future__ import annotations

import os

import numpy as np

from . import _scan_py
from .tensor import ShapeError, Tensor, apply_op, as_tensor

try:
    from . import _scan_cy
except ImportError:
    _scan_cy = None

HAVE_COMPILED = _scan_cy is not None


def _use_compiled():
    return HAVE_COMPILED and os.environ.get("DOAFORMER_PURE", "") != "1"


def active_kernel() -> str:
    return "compiled" if _use_compiled() else "blocked"


def _check_shapes(abar, bbar, c, x):
    if abar.ndim != 3 or bbar.shape != abar.shape:
        raise ShapeError(f"ssm_scan: abar {abar.shape} and bbar {bbar.shape} must match (L,D,N)")
    ln, d, n = abar.shape
    if c.shape != (ln, n):
        raise ShapeError(f"ssm_scan: c shape {c.shape} incompatible with abar {abar.shape}")
    if x.shape != (ln, d):
        raise ShapeError(f"ssm_scan: x shape {x.shape} incompatible with abar {abar.shape}")


def scan_naive(abar, bbar, c, x):
    """Reference sequential recurrence; returns y (L, D)."""
    _check_shapes(abar, bbar, c, x)
    y, _ = _scan_py.scan_forward_py(abar, bbar, c, x, blocked=False)
    return y


def scan_blocked(abar, bbar, c, x):
    """Blocked associative scan; returns y (L, D)."""
    _check_shapes(abar, bbar, c, x)
    y, _ = _scan_py.scan_forward_py(abar, bbar, c, x, blocked=True)
    return y


def scan_compiled(abar, bbar, c, x):
    """Cython kernel; raises if the extension is unavailable."""
    if _scan_cy is None:
        raise RuntimeError("compiled scan extension not built")
    _check_shapes(abar, bbar, c, x)
    y, _ = _scan_cy.scan_forward(
        np.ascontiguousarray(abar), np.ascontiguousarray(bbar),
        np.ascontiguousarray(c), np.ascontiguousarray(x),
    )
    return y


def ssm_scan(abar, bbar, c, x) -> Tensor:
    """Differentiable scan op: y_t = <c_t, h_t>, h_t = abar_t h_{t-1} + bbar_t x_t.

    abar, bbar: (L, D, N); c: (L, N); x: (L, D) -> y: (L, D).
    """
    abar, bbar, c, x = as_tensor(abar), as_tensor(bbar), as_tensor(c), as_tensor(x)
    _check_shapes(abar.data, bbar.data, c.data, x.data)
    ad, bd, cd, xd = abar.data, bbar.data, c.data, x.data
    if _use_compiled():
        y, h = _scan_cy.scan_forward(
            np.ascontiguousarray(ad), np.ascontiguousarray(bd),
            np.ascontiguousarray(cd), np.ascontiguousarray(xd),
        )

        def vjp(gy):
            return _scan_cy.scan_backward(
                np.ascontiguousarray(ad), np.ascontiguousarray(bd),
                np.ascontiguousarray(cd), np.ascontiguousarray(xd),
                h, np.ascontiguousarray(gy),
            )

    else:
        y, h = _scan_py.scan_forward_py(ad, bd, cd, xd, blocked=True)

        def vjp(gy):
            return _scan_py.scan_backward_py(ad, bd, cd, xd, h, gy)

    return apply_op("ssm_scan", (abar, bbar, c, x), y, vjp)
