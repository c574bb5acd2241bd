# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled kernels: trellis encoding, BCJR erasure set-propagation and the
batched stationary solve behind the exact transfer functions.

State sets are bitmasks over at most 64 states.  Messages are int8 with
0/1 for known bits and -1 for an erasure.
"""

import numpy as np
cimport numpy as cnp
from libc.stdint cimport uint64_t, int8_t, int64_t
from libc.stdlib cimport malloc, free
from libc.math cimport fabs

cnp.import_array()

from sctc.errors import InconsistentObservation


def encode_parity(const int64_t[:, ::1] next_state, const int8_t[:, ::1] parity,
                  const int8_t[::1] u, long state):
    cdef Py_ssize_t n = u.shape[0], k
    cdef long s = state
    out = np.empty(n, dtype=np.int8)
    cdef int8_t[::1] p = out
    cdef int b
    for k in range(n):
        b = u[k]
        p[k] = parity[s, b]
        s = next_state[s, b]
    return out, int(s)


def bcjr_erasure(const int64_t[:, ::1] next_state, const int8_t[:, ::1] parity,
                 const int8_t[::1] sys_obs, const int8_t[::1] par_obs,
                 uint64_t start_mask, uint64_t end_mask):
    cdef Py_ssize_t n = sys_obs.shape[0], k
    cdef int ns = next_state.shape[0], s, u, so, po, p
    cdef uint64_t one = 1, fm, bm, acc, hit
    if par_obs.shape[0] != n:
        raise ValueError("observation lengths differ")
    if ns > 64:
        raise ValueError("at most 64 states supported")

    fwd_arr = np.empty(n + 1, dtype=np.uint64)
    bwd_arr = np.empty(n + 1, dtype=np.uint64)
    cdef uint64_t[::1] fwd = fwd_arr
    cdef uint64_t[::1] bwd = bwd_arr

    fwd[0] = start_mask
    for k in range(n):
        fm = fwd[k]
        so = sys_obs[k]
        po = par_obs[k]
        acc = 0
        for s in range(ns):
            if not (fm >> s) & one:
                continue
            for u in range(2):
                if so >= 0 and so != u:
                    continue
                if po >= 0 and po != parity[s, u]:
                    continue
                acc |= one << next_state[s, u]
        if acc == 0:
            raise InconsistentObservation(f"empty forward state set at step {k}")
        fwd[k + 1] = acc

    bwd[n] = end_mask
    for k in range(n - 1, -1, -1):
        bm = bwd[k + 1]
        so = sys_obs[k]
        po = par_obs[k]
        acc = 0
        for s in range(ns):
            for u in range(2):
                if so >= 0 and so != u:
                    continue
                if po >= 0 and po != parity[s, u]:
                    continue
                if (bm >> next_state[s, u]) & one:
                    acc |= one << s
                    break
        if acc == 0:
            raise InconsistentObservation(f"empty backward state set at step {k}")
        bwd[k] = acc

    ext_sys_arr = np.empty(n, dtype=np.int8)
    ext_par_arr = np.empty(n, dtype=np.int8)
    cdef int8_t[::1] es = ext_sys_arr
    cdef int8_t[::1] ep = ext_par_arr
    cdef int seen_u, seen_p
    for k in range(n):
        fm = fwd[k]
        bm = bwd[k + 1]
        so = sys_obs[k]
        po = par_obs[k]
        seen_u = 0
        seen_p = 0
        for s in range(ns):
            if not (fm >> s) & one:
                continue
            for u in range(2):
                if not (bm >> next_state[s, u]) & one:
                    continue
                p = parity[s, u]
                if po < 0 or po == p:
                    seen_u |= 1 << u
                if so < 0 or so == u:
                    seen_p |= 1 << p
        if seen_u == 0 or seen_p == 0:
            raise InconsistentObservation(f"no surviving transition at step {k}")
        es[k] = -1 if seen_u == 3 else (seen_u >> 1)
        ep[k] = -1 if seen_p == 3 else (seen_p >> 1)
    return ext_sys_arr, ext_par_arr


cdef int _stationary(const int64_t[:, ::1] moves, int n, double w0, double w1,
                     double w2, double w3, double *a, double *x) noexcept nogil:
    """Solve pi (I - P) = 0, sum(pi) = 1 by Gaussian elimination.

    ``a`` is n*n scratch, ``x`` receives pi.  Returns 0 on a singular system.
    """
    cdef int i, j, k, piv
    cdef double v, best, f
    cdef double w[4]
    w[0] = w0; w[1] = w1; w[2] = w2; w[3] = w3
    # a[i, j] = (I - P)[j, i]; pattern o moves node j to moves[o, j]
    for i in range(n * n):
        a[i] = 0.0
    for i in range(n):
        a[i * n + i] = 1.0
        x[i] = 0.0
    for k in range(4):
        for j in range(n):
            a[moves[k, j] * n + j] -= w[k]
    for j in range(n):
        a[(n - 1) * n + j] = 1.0
    x[n - 1] = 1.0
    for k in range(n):
        piv = k
        best = fabs(a[k * n + k])
        for i in range(k + 1, n):
            if fabs(a[i * n + k]) > best:
                best = fabs(a[i * n + k])
                piv = i
        if best < 1e-300:
            return 0
        if piv != k:
            for j in range(n):
                v = a[k * n + j]; a[k * n + j] = a[piv * n + j]; a[piv * n + j] = v
            v = x[k]; x[k] = x[piv]; x[piv] = v
        for i in range(k + 1, n):
            f = a[i * n + k] / a[k * n + k]
            if f != 0.0:
                for j in range(k, n):
                    a[i * n + j] -= f * a[k * n + j]
                x[i] -= f * x[k]
    for k in range(n - 1, -1, -1):
        v = x[k]
        for j in range(k + 1, n):
            v -= a[k * n + j] * x[j]
        x[k] = v / a[k * n + k]
    return 1


def transfer_batch(const int64_t[:, ::1] fwd_moves, const int64_t[:, ::1] bwd_moves,
                   const double[:, :, ::1] e_sys, const double[:, :, ::1] e_par,
                   const double[::1] ps, const double[::1] pp):
    """Extrinsic erasure probabilities for interior points 0 < ps, pp < 1.

    Returns ``(ext_sys, ext_par, ok)``; ``ok[i] == 0`` flags a singular
    solve that the caller must redo another way.
    """
    cdef Py_ssize_t npts = ps.shape[0], t
    cdef int nf = e_sys.shape[0], nb = e_sys.shape[1], i, j
    cdef double s, p, ks, kp, acc_sk, acc_se, acc_pk, acc_pe, jf
    out_s = np.zeros(npts)
    out_p = np.zeros(npts)
    ok_arr = np.ones(npts, dtype=np.int8)
    cdef double[::1] os_ = out_s
    cdef double[::1] op_ = out_p
    cdef int8_t[::1] ok = ok_arr
    cdef int nmax = nf if nf > nb else nb
    cdef double *a = <double *> malloc(nmax * nmax * sizeof(double))
    cdef double *xf = <double *> malloc(nf * sizeof(double))
    cdef double *xb = <double *> malloc(nb * sizeof(double))
    if a == NULL or xf == NULL or xb == NULL:
        free(a); free(xf); free(xb)
        raise MemoryError()
    try:
        with nogil:
            for t in range(npts):
                s = ps[t]
                p = pp[t]
                ks = 1.0 - s
                kp = 1.0 - p
                if not _stationary(fwd_moves, nf, ks * kp, ks * p, s * kp, s * p, a, xf):
                    ok[t] = 0
                    continue
                if not _stationary(bwd_moves, nb, ks * kp, ks * p, s * kp, s * p, a, xb):
                    ok[t] = 0
                    continue
                acc_sk = 0.0; acc_se = 0.0; acc_pk = 0.0; acc_pe = 0.0
                for i in range(nf):
                    for j in range(nb):
                        jf = xf[i] * xb[j]
                        acc_sk += jf * e_sys[i, j, 1]
                        acc_se += jf * e_sys[i, j, 0]
                        acc_pk += jf * e_par[i, j, 1]
                        acc_pe += jf * e_par[i, j, 0]
                os_[t] = kp * acc_sk + p * acc_se
                op_[t] = ks * acc_pk + s * acc_pe
    finally:
        free(a); free(xf); free(xb)
    return out_s, out_p, ok_arr
