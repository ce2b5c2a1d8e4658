"""Pure-numpy kernels for the diagonal first-order recurrence.

The recurrence is h_t = a_t * h_{t-1} + b_t (elementwise over (D, N) state
slots, h_{-1} = 0). Two routes:

  * affine_scan_naive: plain per-step loop; the reference oracle.
  * affine_scan_blocked: sqrt(L)-blocked associative scan; O(L) work with
    O(sqrt(L)) numpy dispatches, the fast path when the compiled kernel is
    unavailable.
"""

from __future__ import annotations

import numpy as np


def affine_scan_naive(a, b):
    """h_t = a_t * h_{t-1} + b_t, looped. a, b: (L, ...) -> h: (L, ...)."""
    h = np.empty_like(b)
    state = np.zeros_like(b[0])
    for t in range(b.shape[0]):
        state = a[t] * state + b[t]
        h[t] = state
    return h


def affine_scan_blocked(a, b):
    """Same recurrence via block-local prefixes plus a carry pass.

    Work is O(L) (one local-prefix sweep, one carry sweep, one broadcast);
    Python-level loop length is ~2*sqrt(L) instead of L.
    """
    ln = a.shape[0]
    if ln == 0:
        return np.empty_like(b)
    k = max(1, int(round(np.sqrt(ln))))
    g = -(-ln // k)  # ceil
    pad = g * k - ln
    tail = a.shape[1:]
    ap = np.concatenate([a, np.ones((pad, *tail))]) if pad else a.copy()
    bp = np.concatenate([b, np.zeros((pad, *tail))]) if pad else b.copy()
    ap = ap.reshape(g, k, *tail)
    bp = bp.reshape(g, k, *tail)
    # local prefix composition within each block (b before a: b uses raw a_t)
    for t in range(1, k):
        bp[:, t] += ap[:, t] * bp[:, t - 1]
        ap[:, t] *= ap[:, t - 1]
    # sequential carry over block summaries
    carry = np.zeros((g, *tail))
    state = carry[0]
    for i in range(1, g):
        state = ap[i - 1, -1] * state + bp[i - 1, -1]
        carry[i] = state
    h = ap * carry[:, None] + bp
    return h.reshape(g * k, *tail)[:ln]


def _gh_from_outputs(abar, c, gy):
    """Adjoint state: gh_t = c_t (x) gy_t + a_{t+1} * gh_{t+1}, reversed scan."""
    ln = abar.shape[0]
    inject = gy[:, :, None] * c[:, None, :]  # (L, D, N)
    a_rev = np.empty_like(abar)
    a_rev[0] = 1.0
    a_rev[1:] = abar[::-1][:-1]
    gh_rev = affine_scan_blocked(a_rev, inject[::-1])
    return gh_rev[::-1]


def scan_forward_py(abar, bbar, c, x, blocked=True):
    """Returns (y, h) for y_t = <c_t, h_t> per channel."""
    binp = bbar * x[:, :, None]
    scan = affine_scan_blocked if blocked else affine_scan_naive
    h = scan(abar, binp)
    y = np.einsum("ln,ldn->ld", c, h)
    return y, h


def scan_backward_py(abar, bbar, c, x, h, gy):
    """Gradients of the scan w.r.t. (abar, bbar, c, x) given d(loss)/dy."""
    gh = _gh_from_outputs(abar, c, gy)
    hprev = np.empty_like(h)
    hprev[0] = 0.0
    hprev[1:] = h[:-1]
    ga = gh * hprev
    gb = gh * x[:, :, None]
    gx = np.einsum("ldn,ldn->ld", gh, bbar)
    gc = np.einsum("ld,ldn->ln", gy, h)
    return ga, gb, gc, gx
