# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled kernels: LSTM cell step, Levenshtein, Zhang-Shasha TED.

Mirrors mvg._core.pure; keep the two in sync.
"""

import numpy as np
cimport numpy as cnp
from libc.math cimport tanh as ctanh, exp as cexp

cnp.import_array()

BACKEND = "compiled"


cdef inline double _sig(double x) nogil:
    cdef double e
    if x >= 0.0:
        return 1.0 / (1.0 + cexp(-x))
    e = cexp(x)
    return e / (1.0 + e)


def lstm_cell_forward(double[:, ::1] pre, double[:, ::1] c_prev):
    """One LSTM cell step from gate pre-activations [i, f, g, o]."""
    cdef Py_ssize_t B = pre.shape[0]
    cdef Py_ssize_t H = c_prev.shape[1]
    h_arr = np.empty((B, H), dtype=np.float64)
    c_arr = np.empty((B, H), dtype=np.float64)
    g_arr = np.empty((B, 4 * H), dtype=np.float64)
    cdef double[:, ::1] h = h_arr
    cdef double[:, ::1] c = c_arr
    cdef double[:, ::1] gates = g_arr
    cdef Py_ssize_t b, k
    cdef double gi, gf, gg, go, cc
    with nogil:
        for b in range(B):
            for k in range(H):
                gi = _sig(pre[b, k])
                gf = _sig(pre[b, H + k])
                gg = ctanh(pre[b, 2 * H + k])
                go = _sig(pre[b, 3 * H + k])
                cc = gf * c_prev[b, k] + gi * gg
                gates[b, k] = gi
                gates[b, H + k] = gf
                gates[b, 2 * H + k] = gg
                gates[b, 3 * H + k] = go
                c[b, k] = cc
                h[b, k] = go * ctanh(cc)
    return h_arr, c_arr, g_arr


def lstm_cell_backward(double[:, ::1] dh, double[:, ::1] dc_in,
                       double[:, ::1] gates, double[:, ::1] c_prev,
                       double[:, ::1] c):
    """Backward of lstm_cell_forward; returns (dpre, dc_prev)."""
    cdef Py_ssize_t B = dh.shape[0]
    cdef Py_ssize_t H = dh.shape[1]
    dpre_arr = np.empty((B, 4 * H), dtype=np.float64)
    dcp_arr = np.empty((B, H), dtype=np.float64)
    cdef double[:, ::1] dpre = dpre_arr
    cdef double[:, ::1] dcp = dcp_arr
    cdef Py_ssize_t b, k
    cdef double gi, gf, gg, go, tc, dc, di, df, dg, do
    with nogil:
        for b in range(B):
            for k in range(H):
                gi = gates[b, k]
                gf = gates[b, H + k]
                gg = gates[b, 2 * H + k]
                go = gates[b, 3 * H + k]
                tc = ctanh(c[b, k])
                do = dh[b, k] * tc
                dc = dc_in[b, k] + dh[b, k] * go * (1.0 - tc * tc)
                di = dc * gg
                df = dc * c_prev[b, k]
                dg = dc * gi
                dpre[b, k] = di * gi * (1.0 - gi)
                dpre[b, H + k] = df * gf * (1.0 - gf)
                dpre[b, 2 * H + k] = dg * (1.0 - gg * gg)
                dpre[b, 3 * H + k] = do * go * (1.0 - go)
                dcp[b, k] = dc * gf
    return dpre_arr, dcp_arr


def levenshtein(a, b):
    """Unit-cost edit distance between two int sequences."""
    cdef cnp.ndarray[cnp.int32_t, ndim=1] aa = np.ascontiguousarray(a, dtype=np.int32)
    cdef cnp.ndarray[cnp.int32_t, ndim=1] bb = np.ascontiguousarray(b, dtype=np.int32)
    cdef Py_ssize_t la = aa.shape[0]
    cdef Py_ssize_t lb = bb.shape[0]
    if la == 0:
        return int(lb)
    if lb == 0:
        return int(la)
    cdef cnp.ndarray[cnp.int64_t, ndim=1] prev = np.arange(lb + 1, dtype=np.int64)
    cdef cnp.ndarray[cnp.int64_t, ndim=1] cur = np.empty(lb + 1, dtype=np.int64)
    cdef long long[:] pv = prev
    cdef long long[:] cv = cur
    cdef long long[:] tmp
    cdef Py_ssize_t x, y
    cdef long long cost, best
    with nogil:
        for x in range(1, la + 1):
            cv[0] = x
            for y in range(1, lb + 1):
                cost = 0 if aa[x - 1] == bb[y - 1] else 1
                best = pv[y] + 1
                if cv[y - 1] + 1 < best:
                    best = cv[y - 1] + 1
                if pv[y - 1] + cost < best:
                    best = pv[y - 1] + cost
                cv[y] = best
            tmp = pv
            pv = cv
            cv = tmp
    return int(pv[lb])


def tree_edit_distance(lmd1, kr1, lab1, lmd2, kr2, lab2):
    """Ordered tree edit distance (Zhang-Shasha), unit costs.

    Postorder array encoding as in mvg._core.pure.tree_edit_distance.
    """
    cdef cnp.ndarray[cnp.int32_t, ndim=1] l1 = np.ascontiguousarray(lmd1, dtype=np.int32)
    cdef cnp.ndarray[cnp.int32_t, ndim=1] k1 = np.ascontiguousarray(kr1, dtype=np.int32)
    cdef cnp.ndarray[cnp.int32_t, ndim=1] a1 = np.ascontiguousarray(lab1, dtype=np.int32)
    cdef cnp.ndarray[cnp.int32_t, ndim=1] l2 = np.ascontiguousarray(lmd2, dtype=np.int32)
    cdef cnp.ndarray[cnp.int32_t, ndim=1] k2 = np.ascontiguousarray(kr2, dtype=np.int32)
    cdef cnp.ndarray[cnp.int32_t, ndim=1] a2 = np.ascontiguousarray(lab2, dtype=np.int32)
    cdef Py_ssize_t n1 = a1.shape[0]
    cdef Py_ssize_t n2 = a2.shape[0]
    if n1 == 0:
        return int(n2)
    if n2 == 0:
        return int(n1)
    cdef cnp.ndarray[cnp.int64_t, ndim=2] td_arr = np.zeros((n1, n2), dtype=np.int64)
    cdef cnp.ndarray[cnp.int64_t, ndim=2] fd_arr = np.zeros((n1 + 2, n2 + 2), dtype=np.int64)
    cdef long long[:, ::1] td = td_arr
    cdef long long[:, ::1] fd = fd_arr
    cdef Py_ssize_t ki, kj, i, j, x, y, m, n, ioff, joff, p, q
    cdef long long cost, best
    with nogil:
        for ki in range(k1.shape[0]):
            i = k1[ki]
            for kj in range(k2.shape[0]):
                j = k2[kj]
                m = i - l1[i] + 2
                n = j - l2[j] + 2
                ioff = l1[i] - 1
                joff = l2[j] - 1
                fd[0, 0] = 0
                for x in range(1, m):
                    fd[x, 0] = fd[x - 1, 0] + 1
                for y in range(1, n):
                    fd[0, y] = fd[0, y - 1] + 1
                for x in range(1, m):
                    for y in range(1, n):
                        if l1[i] == l1[x + ioff] and l2[j] == l2[y + joff]:
                            cost = 0 if a1[x + ioff] == a2[y + joff] else 1
                            best = fd[x - 1, y] + 1
                            if fd[x, y - 1] + 1 < best:
                                best = fd[x, y - 1] + 1
                            if fd[x - 1, y - 1] + cost < best:
                                best = fd[x - 1, y - 1] + cost
                            fd[x, y] = best
                            td[x + ioff, y + joff] = best
                        else:
                            p = l1[x + ioff] - 1 - ioff
                            q = l2[y + joff] - 1 - joff
                            best = fd[x - 1, y] + 1
                            if fd[x, y - 1] + 1 < best:
                                best = fd[x, y - 1] + 1
                            if fd[p, q] + td[x + ioff, y + joff] < best:
                                best = fd[p, q] + td[x + ioff, y + joff]
                            fd[x, y] = best
    return int(td[n1 - 1, n2 - 1])
