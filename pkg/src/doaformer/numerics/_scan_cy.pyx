# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled sequential kernels for the diagonal first-order recurrence.

Loops run with the time step outermost so every array is streamed
contiguously; the (D, N) state carry lives in a small scratch buffer.
"""

import numpy as np

cimport numpy as cnp

cnp.import_array()


def scan_forward(double[:, :, ::1] abar, double[:, :, ::1] bbar,
                 double[:, ::1] c, double[:, ::1] x):
    """h_t = abar_t * h_{t-1} + bbar_t * x_t; y_t[d] = sum_n c_t[n] h_t[d,n]."""
    cdef Py_ssize_t L = abar.shape[0], D = abar.shape[1], N = abar.shape[2]
    h_arr = np.empty((L, D, N), dtype=np.float64)
    y_arr = np.empty((L, D), dtype=np.float64)
    cdef double[:, :, ::1] h = h_arr
    cdef double[:, ::1] y = y_arr
    cdef Py_ssize_t t, d, n
    cdef double xv, acc, val, hp
    for t in range(L):
        for d in range(D):
            xv = x[t, d]
            acc = 0.0
            for n in range(N):
                hp = h[t - 1, d, n] if t > 0 else 0.0
                val = abar[t, d, n] * hp + bbar[t, d, n] * xv
                h[t, d, n] = val
                acc += c[t, n] * val
            y[t, d] = acc
    return y_arr, h_arr


def scan_backward(double[:, :, ::1] abar, double[:, :, ::1] bbar,
                  double[:, ::1] c, double[:, ::1] x,
                  double[:, :, ::1] h, double[:, ::1] gy):
    """Adjoint pass; returns (ga, gb, gc, gx)."""
    cdef Py_ssize_t L = abar.shape[0], D = abar.shape[1], N = abar.shape[2]
    ga_arr = np.empty((L, D, N), dtype=np.float64)
    gb_arr = np.empty((L, D, N), dtype=np.float64)
    gc_arr = np.zeros((L, N), dtype=np.float64)
    gx_arr = np.empty((L, D), dtype=np.float64)
    carry_arr = np.zeros((D, N), dtype=np.float64)
    cdef double[:, :, ::1] ga = ga_arr
    cdef double[:, :, ::1] gb = gb_arr
    cdef double[:, ::1] gc = gc_arr
    cdef double[:, ::1] gx = gx_arr
    cdef double[:, ::1] carry = carry_arr
    cdef Py_ssize_t t, d, n
    cdef double gh, gyv, xv, gx_acc, hp
    for t in range(L - 1, -1, -1):
        for d in range(D):
            gyv = gy[t, d]
            xv = x[t, d]
            gx_acc = 0.0
            for n in range(N):
                if t + 1 < L:
                    gh = abar[t + 1, d, n] * carry[d, n]
                else:
                    gh = 0.0
                gh += c[t, n] * gyv
                carry[d, n] = gh
                hp = h[t - 1, d, n] if t > 0 else 0.0
                ga[t, d, n] = gh * hp
                gb[t, d, n] = gh * xv
                gx_acc += gh * bbar[t, d, n]
                gc[t, n] += gyv * h[t, d, n]
            gx[t, d] = gx_acc
    return ga_arr, gb_arr, gc_arr, gx_arr
