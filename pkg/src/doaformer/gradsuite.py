"""Finite-difference audit of every differentiable op and block.

Ops are checked at 1e-5 over repeated seeded trials; composite blocks at
1e-4 on small shapes. Shared by the `gradcheck` CLI subcommand and the
acceptance tests.
"""

from __future__ import annotations

import numpy as np

from . import seconformer
from .bimamba import MambaPlus
from .fa_block import FaBlock
from .numerics import Rng, Tensor, finite_difference_check
from .numerics import tensor as tn
from .seconformer import ConvModule, FeedForwardExpand, FeedForwardSqueeze, MultiHeadSelfAttention, ShiftSpec
from .stateformer import DyTanh, StateformerConfig, StateformerLayer
from .training import pit_mse_loss

OP_TOL = 1e-5
BLOCK_TOL = 1e-4
OP_TRIALS = 20


def _weighted(f, w):
    """Wrap a tensor-valued op into a scalar via a fixed random cotangent."""
    return lambda x: tn.sum_(f(x) * Tensor(w))


def _op_cases(rng: np.random.Generator):
    """One (name, f, x) triple per op-kind; fresh random data per call."""
    x23 = rng.normal(size=(2, 3))
    x34 = rng.normal(size=(3, 4))
    cases = []
    w23 = rng.normal(size=(2, 3))
    w24 = rng.normal(size=(2, 4))
    cases.append(("matmul", _weighted(lambda x: tn.matmul(x, Tensor(x34)), w24), x23))
    add_rhs = Tensor(rng.normal(size=(1, 3)))
    cases.append(("add", _weighted(lambda x: tn.add(x, add_rhs), w23), x23))
    mul_rhs = Tensor(rng.normal(size=(2, 3)))
    cases.append(("mul", _weighted(lambda x: tn.mul(x, mul_rhs), w23), x23))
    wc = rng.normal(size=(3, 8))
    conv_w = Tensor(rng.normal(size=(3, 2, 3)) * 0.5)
    conv_b = Tensor(rng.normal(size=3))
    cases.append(("conv1d", _weighted(lambda x: tn.conv1d(x, conv_w, conv_b), wc), rng.normal(size=(2, 8))))
    conv2w = Tensor(rng.normal(size=(2, 2, 3, 3)) * 0.5)
    conv2b = Tensor(rng.normal(size=2))
    w2c = rng.normal(size=(2, 4, 5))
    cases.append(("conv2d", _weighted(lambda x: tn.conv2d(x, conv2w, conv2b), w2c), rng.normal(size=(2, 4, 5))))
    cases.append(("softmax", _weighted(lambda x: tn.softmax(x, axis=-1), w23), x23))
    cases.append(("sigmoid", _weighted(tn.sigmoid, w23), x23))
    cases.append(("tanh", _weighted(tn.tanh, w23), x23))
    cases.append(("silu", _weighted(tn.silu, w23), x23))
    cases.append(("swish", _weighted(tn.swish, w23), x23))
    cases.append(("mean-reduce", _weighted(lambda x: tn.mean(x, axis=1), rng.normal(size=(2,))), x23))
    cases.append(("exp", _weighted(tn.exp, w23), x23 * 0.5))
    cases.append(("expm1", _weighted(tn.expm1, w23), x23 * 0.5))
    cat_other = Tensor(rng.normal(size=(2, 3)))
    cases.append((
        "concat",
        _weighted(lambda x: tn.concat([x, cat_other], axis=0), rng.normal(size=(4, 3))),
        x23,
    ))
    cases.append(("slice", _weighted(lambda x: tn.narrow(x, (slice(0, 2), slice(1, 3))), rng.normal(size=(2, 2))), x23))
    cases.append(("transpose", _weighted(lambda x: tn.transpose(x), rng.normal(size=(3, 2))), x23))
    cases.append(("layer-norm", _weighted(tn.layer_norm, w23), x23))
    cases.append(("time_shift", _weighted(lambda x: tn.time_shift(x, (2, -2, 1, -1)), rng.normal(size=(6, 8))), rng.normal(size=(6, 8))))
    cases.append(("phi1", _weighted(tn.phi1, w23), x23 * 0.5))
    cases.append(("softplus", _weighted(tn.softplus, w23), x23))
    return cases


def run_op_checks(seed=0, trials=OP_TRIALS):
    """[(name, max_rel_err)] across `trials` seeded draws per op."""
    worst = {}
    for trial in range(trials):
        rng = np.random.default_rng(seed + trial)
        for name, f, x in _op_cases(rng):
            err = finite_difference_check(f, Tensor(x))
            worst[name] = max(worst.get(name, 0.0), err)
    return sorted(worst.items())


def _block_cases(seed=0):
    rng = Rng(seed)
    d, ln = 16, 8
    nprng = np.random.default_rng(seed)
    cases = []

    fa = FaBlock(rng.child("fa"), channels=6, reduction=2)
    wmap = nprng.normal(size=(6, 5, 4))
    cases.append(("fa_temporal_gate", _weighted(fa.temporal_attention, nprng.normal(size=(6, 5, 4))), wmap))
    cases.append(("fa_frequency_gate", _weighted(fa.frequency_attention, nprng.normal(size=(6, 5, 4))), wmap))

    w_seq = nprng.normal(size=(ln, d))
    ffn_e = FeedForwardExpand(rng.child("ffn_e"), d, p_drop=0.0)
    cases.append(("ffn_expand", _weighted(ffn_e, nprng.normal(size=(ln, d))), w_seq))
    ffn_s = FeedForwardSqueeze(rng.child("ffn_s"), d)
    cases.append(("ffn_squeeze", _weighted(ffn_s, nprng.normal(size=(ln, d))), w_seq))
    mhsa = MultiHeadSelfAttention(rng.child("mhsa"), d, heads=2)
    cases.append(("mhsa", _weighted(mhsa, nprng.normal(size=(ln, d))), w_seq))
    conv = ConvModule(rng.child("conv"), d, ShiftSpec(kernel=3, enabled=True), p_drop=0.0)
    cases.append(("conv_module_shifted", _weighted(conv, nprng.normal(size=(ln, d))), w_seq))
    mamba = MambaPlus(rng.child("mamba"), width=4, expand=2, state=4)
    cases.append(("mamba_plus", _weighted(mamba, nprng.normal(size=(6, 4))), nprng.normal(size=(6, 4))))
    dy = DyTanh(d)
    cases.append(("dytanh", _weighted(dy, nprng.normal(size=(ln, d))), w_seq))

    layer_cfg = StateformerConfig(width=d, layers=1, heads=2, conv_kernel=3,
                                  dropout=0.0, ssm_state=4, ssm_expand=2,
                                  frontend_channels=(4,), max_len=ln)
    layer = StateformerLayer(rng.child("layer"), layer_cfg)
    cases.append(("stateformer_layer", _weighted(layer, nprng.normal(size=(ln, d))), w_seq))

    target = nprng.normal(size=(5, 2, 3))
    target /= np.linalg.norm(target, axis=2, keepdims=True)
    mask = np.ones((5, 2), dtype=bool)
    mask[3, 1] = False

    def pit_fn(x):
        pred = tn.reshape(x, (5, 2, 3))
        loss, _ = pit_mse_loss(pred, target, mask)
        return loss

    cases.append(("pit_mse_loss", pit_fn, nprng.normal(size=(5 * 2 * 3,))))
    return cases


def run_block_checks(seed=0):
    """[(name, max_rel_err)] for the composite blocks."""
    return [(name, finite_difference_check(f, Tensor(x))) for name, f, x in _block_cases(seed)]


def run_all(seed=0, log=print):
    """Full audit; returns True when every check is under its tolerance."""
    ok = True
    for name, err in run_op_checks(seed):
        good = err < OP_TOL
        ok &= good
        log(f"op    {name:18s} max_rel_err {err:.3e}  {'ok' if good else 'FAIL'}")
    for name, err in run_block_checks(seed):
        good = err < BLOCK_TOL
        ok &= good
        log(f"block {name:18s} max_rel_err {err:.3e}  {'ok' if good else 'FAIL'}")
    return ok
