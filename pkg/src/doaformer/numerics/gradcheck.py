"""Central finite-difference validation of recorded-graph gradients."""

from __future__ import annotations

import numpy as np

from .tensor import Tensor


def finite_difference_check(f, x, h=1e-5):
    """Max relative error between analytic and central-difference gradients.

    f must map a Tensor to a scalar Tensor and be deterministic. Error per
    coordinate is |analytic - central| / max(|analytic|, |central|, 1e-12);
    the max over coordinates is returned.
    """
    if h <= 0:
        raise ValueError("h must be positive")
    x0 = np.asarray(x.data if isinstance(x, Tensor) else x, dtype=np.float64)
    probe = Tensor(x0.copy(), requires_grad=True)
    y = f(probe)
    if y.data.size != 1:
        raise ValueError(f"f must be scalar-valued, got shape {y.data.shape}")
    if not np.isfinite(y.data).all():
        raise ValueError("f produced a non-finite value")
    y.backward()
    analytic = probe.grad if probe.grad is not None else np.zeros_like(x0)
    if not np.isfinite(analytic).all():
        raise ValueError("analytic gradient is non-finite")

    numeric = np.empty_like(x0)
    flat = numeric.reshape(-1)
    base = x0.reshape(-1)
    for i in range(base.size):
        bump = base.copy()
        bump[i] = base[i] + h
        fp = f(Tensor(bump.reshape(x0.shape))).item()
        bump[i] = base[i] - h
        fm = f(Tensor(bump.reshape(x0.shape))).item()
        flat[i] = (fp - fm) / (2.0 * h)
    if not np.isfinite(numeric).all():
        raise ValueError("central-difference gradient is non-finite")

    denom = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), 1e-12)
    return float(np.max(np.abs(analytic - numeric) / denom))
