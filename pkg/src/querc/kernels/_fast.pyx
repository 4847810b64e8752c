# cython: language_level=3
"""Compiled twins of querc.kernels.pure; see that module for the contracts.

Recurrent matvecs go through BLAS dgemv on the transposed (Fortran) view of
the row-major weight buffers; gate math is plain C loops.
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport exp, log1p, tanh
from scipy.linalg.cython_blas cimport dgemv

cnp.import_array()

ctypedef cnp.int64_t i64
ctypedef cnp.float64_t f64


cdef inline double _sigmoid(double x) noexcept nogil:
    cdef double z
    if x >= 0.0:
        return 1.0 / (1.0 + exp(-x))
    z = exp(x)
    return z / (1.0 + z)


cdef inline double _log_sigmoid(double x) noexcept nogil:
    if x >= 0.0:
        return -log1p(exp(-x))
    return x - log1p(exp(x))


def doc2vec_train_document(f64[:, ::1] token_in, f64[:, ::1] token_out,
                           f64[::1] dvec, i64[::1] ids,
                           i64[:, ::1] negatives, f64[::1] alphas,
                           int window, bint update_tokens):
    cdef Py_ssize_t T = ids.shape[0]
    cdef Py_ssize_t d = dvec.shape[0]
    cdef Py_ssize_t k = negatives.shape[1]
    cdef f64[::1] h = np.empty(d)
    cdef f64[::1] e = np.empty(d)
    cdef i64[::1] kept = np.empty(k + 1, dtype=np.int64)
    cdef f64[::1] gvals = np.empty(k + 1)
    cdef double loss = 0.0
    cdef double n_in, u, g, alpha, inv
    cdef Py_ssize_t t, lo, hi, j, m, n_ctx, n_kept
    cdef i64 target, wid

    with nogil:
        for t in range(T):
            lo = t - window
            if lo < 0:
                lo = 0
            hi = t + window + 1
            if hi > T:
                hi = T
            n_ctx = (hi - lo) - 1
            n_in = <double>(n_ctx + 1)
            target = ids[t]
            alpha = alphas[t]

            # h = (sum of context vectors + doc vector) / (n_ctx + 1)
            for m in range(d):
                h[m] = dvec[m]
                e[m] = 0.0
            for j in range(lo, hi):
                if j == t:
                    continue
                wid = ids[j]
                for m in range(d):
                    h[m] += token_in[wid, m]
            for m in range(d):
                h[m] /= n_in

            # score the target and the kept negatives against the current
            # rows first; updates are applied after, so duplicate draws see
            # pre-update rows exactly like the batched reference does
            kept[0] = target
            n_kept = 1
            for j in range(k):
                wid = negatives[t, j]
                if wid != target:
                    kept[n_kept] = wid
                    n_kept += 1
            for j in range(n_kept):
                wid = kept[j]
                u = 0.0
                for m in range(d):
                    u += token_out[wid, m] * h[m]
                if j == 0:
                    loss -= _log_sigmoid(u)
                    g = (_sigmoid(u) - 1.0) * alpha
                else:
                    loss -= _log_sigmoid(-u)
                    g = _sigmoid(u) * alpha
                gvals[j] = g
                for m in range(d):
                    e[m] += g * token_out[wid, m]

            inv = 1.0 / n_in
            if update_tokens:
                for j in range(n_kept):
                    wid = kept[j]
                    g = gvals[j]
                    for m in range(d):
                        token_out[wid, m] -= g * h[m]
                for j in range(lo, hi):
                    if j == t:
                        continue
                    wid = ids[j]
                    for m in range(d):
                        token_in[wid, m] -= e[m] * inv
            for m in range(d):
                dvec[m] -= e[m] * inv
    return loss


def lstm_forward(f64[:, ::1] apre, f64[:, ::1] wh, f64[::1] h0, f64[::1] c0):
    cdef Py_ssize_t T = apre.shape[0]
    cdef Py_ssize_t four_h = apre.shape[1]
    cdef Py_ssize_t H = four_h // 4
    hs_arr = np.empty((T, H))
    cs_arr = np.empty((T, H))
    gates_arr = np.empty((T, four_h))
    tc_arr = np.empty((T, H))
    a_arr = np.empty(four_h)
    cdef f64[:, ::1] hs = hs_arr
    cdef f64[:, ::1] cs = cs_arr
    cdef f64[:, ::1] gates = gates_arr
    cdef f64[:, ::1] tc = tc_arr
    cdef f64[::1] a = a_arr
    cdef f64[::1] hprev = np.array(h0, dtype=np.float64, copy=True)
    cdef f64[::1] cprev = np.array(c0, dtype=np.float64, copy=True)
    cdef Py_ssize_t t, m
    cdef double iv, fv, ov, gv, cv
    cdef int bm = <int>four_h, bn = <int>H, inc = 1
    cdef double one = 1.0
    cdef char trans = b'N'

    with nogil:
        for t in range(T):
            for m in range(four_h):
                a[m] = apre[t, m]
            # a += wh.T(row-major) @ hprev via the Fortran view of wh
            dgemv(&trans, &bm, &bn, &one, &wh[0, 0], &bm, &hprev[0], &inc, &one, &a[0], &inc)
            for m in range(H):
                iv = _sigmoid(a[m])
                fv = _sigmoid(a[H + m])
                ov = _sigmoid(a[2 * H + m])
                gv = tanh(a[3 * H + m])
                cv = fv * cprev[m] + iv * gv
                gates[t, m] = iv
                gates[t, H + m] = fv
                gates[t, 2 * H + m] = ov
                gates[t, 3 * H + m] = gv
                cs[t, m] = cv
                tc[t, m] = tanh(cv)
                hs[t, m] = ov * tc[t, m]
            for m in range(H):
                hprev[m] = hs[t, m]
                cprev[m] = cs[t, m]
    return hs_arr, cs_arr, gates_arr, tc_arr


def lstm_backward(f64[:, ::1] wh, f64[:, ::1] gates, f64[:, ::1] cs,
                  f64[:, ::1] tc, f64[::1] c0, f64[:, ::1] dh_out,
                  f64[::1] dh_last, f64[::1] dc_last):
    cdef Py_ssize_t T = gates.shape[0]
    cdef Py_ssize_t four_h = gates.shape[1]
    cdef Py_ssize_t H = four_h // 4
    da_arr = np.empty((T, four_h))
    cdef f64[:, ::1] da = da_arr
    cdef f64[::1] dh_next = np.array(dh_last, dtype=np.float64, copy=True)
    cdef f64[::1] dc_next = np.array(dc_last, dtype=np.float64, copy=True)
    cdef Py_ssize_t t, m
    cdef double iv, fv, ov, gv, tcv, dh, dc, cprev
    cdef int bm = <int>four_h, bn = <int>H, inc = 1
    cdef double one = 1.0, zero = 0.0
    cdef char transt = b'T'

    with nogil:
        for t in range(T - 1, -1, -1):
            for m in range(H):
                iv = gates[t, m]
                fv = gates[t, H + m]
                ov = gates[t, 2 * H + m]
                gv = gates[t, 3 * H + m]
                tcv = tc[t, m]
                dh = dh_out[t, m] + dh_next[m]
                dc = dc_next[m] + dh * ov * (1.0 - tcv * tcv)
                cprev = cs[t - 1, m] if t > 0 else c0[m]
                da[t, m] = (dc * gv) * iv * (1.0 - iv)
                da[t, H + m] = (dc * cprev) * fv * (1.0 - fv)
                da[t, 2 * H + m] = (dh * tcv) * ov * (1.0 - ov)
                da[t, 3 * H + m] = (dc * iv) * (1.0 - gv * gv)
                dc_next[m] = dc * fv
            # dh_next = wh(row-major) @ da[t] via transposed Fortran view
            dgemv(&transt, &bm, &bn, &one, &wh[0, 0], &bm, &da[t, 0], &inc, &zero, &dh_next[0], &inc)
    return da_arr, np.asarray(dh_next), np.asarray(dc_next)
