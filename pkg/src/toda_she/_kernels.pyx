# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled hot kernels: divided-difference tables, small LU determinants and
ordered-tuple minor sums. Signatures match ``_kernels_py``."""
import numpy as np
cimport numpy as cnp
from libc.math cimport fabs

cnp.import_array()


cdef void _newton_inplace(double[:, :, ::1] a, const double[:, ::1] x) noexcept nogil:
    cdef Py_ssize_t nb = a.shape[0], nr = a.shape[1], k = a.shape[2]
    cdef Py_ssize_t b, i, j, level
    cdef double denom
    for b in range(nb):
        for level in range(1, k):
            for j in range(k - 1, level - 1, -1):
                denom = x[b, j] - x[b, j - level]
                for i in range(nr):
                    a[b, i, j] = (a[b, i, j] - a[b, i, j - 1]) / denom


def newton_rows(values, nodes):
    cdef cnp.ndarray[double, ndim=3] out = np.array(values, dtype=np.float64, order="C", copy=True)
    cdef double[:, ::1] x = np.ascontiguousarray(nodes, dtype=np.float64)
    _newton_inplace(out, x)
    return out


cdef double _det_inplace(double[:, ::1] m) noexcept nogil:
    cdef Py_ssize_t k = m.shape[0]
    cdef Py_ssize_t i, j, r, piv
    cdef double det = 1.0, best, tmp, f
    if k == 1:
        return m[0, 0]
    if k == 2:
        return m[0, 0] * m[1, 1] - m[0, 1] * m[1, 0]
    for i in range(k):
        piv = i
        best = fabs(m[i, i])
        for r in range(i + 1, k):
            if fabs(m[r, i]) > best:
                best = fabs(m[r, i])
                piv = r
        if best == 0.0:
            return 0.0
        if piv != i:
            for j in range(k):
                tmp = m[i, j]
                m[i, j] = m[piv, j]
                m[piv, j] = tmp
            det = -det
        det *= m[i, i]
        for r in range(i + 1, k):
            f = m[r, i] / m[i, i]
            for j in range(i + 1, k):
                m[r, j] -= f * m[i, j]
    return det


def det_lu(mats):
    cdef cnp.ndarray[double, ndim=3] a = np.array(mats, dtype=np.float64, order="C", copy=True)
    cdef double[:, :, ::1] av = a
    cdef Py_ssize_t nb = a.shape[0], b
    cdef cnp.ndarray[double, ndim=1] out = np.empty(nb)
    cdef double[::1] ov = out
    with nogil:
        for b in range(nb):
            ov[b] = _det_inplace(av[b])
    return out


def dd_det(values, xnodes, ynodes=None):
    cdef cnp.ndarray[double, ndim=3] t = np.array(values, dtype=np.float64, order="C", copy=True)
    if ynodes is None:
        _newton_inplace(t, np.ascontiguousarray(xnodes, dtype=np.float64))
    else:
        _newton_inplace(t, np.ascontiguousarray(ynodes, dtype=np.float64))
        t = np.ascontiguousarray(np.swapaxes(t, 1, 2))
        _newton_inplace(t, np.ascontiguousarray(xnodes, dtype=np.float64))
    return det_lu(t)


def ordered_minor_sum(F, G):
    cdef double[:, ::1] f = np.ascontiguousarray(F, dtype=np.float64)
    cdef double[:, ::1] g = np.ascontiguousarray(G, dtype=np.float64)
    cdef Py_ssize_t k = f.shape[0], m = f.shape[1]
    cdef Py_ssize_t a, b, c
    cdef double total = 0.0, fm, gm
    cdef double f12, f02, f01, g12, g02, g01
    if k == 1:
        with nogil:
            for a in range(m):
                total += f[0, a] * g[0, a]
        return total
    if k == 2:
        with nogil:
            for a in range(m):
                for b in range(a + 1, m):
                    fm = f[0, a] * f[1, b] - f[0, b] * f[1, a]
                    gm = g[0, a] * g[1, b] - g[0, b] * g[1, a]
                    total += fm * gm
        return total
    if k == 3:
        with nogil:
            for b in range(m):
                for c in range(b + 1, m):
                    f12 = f[1, b] * f[2, c] - f[2, b] * f[1, c]
                    f02 = f[0, b] * f[2, c] - f[2, b] * f[0, c]
                    f01 = f[0, b] * f[1, c] - f[1, b] * f[0, c]
                    g12 = g[1, b] * g[2, c] - g[2, b] * g[1, c]
                    g02 = g[0, b] * g[2, c] - g[2, b] * g[0, c]
                    g01 = g[0, b] * g[1, c] - g[1, b] * g[0, c]
                    for a in range(b):
                        fm = f[0, a] * f12 - f[1, a] * f02 + f[2, a] * f01
                        gm = g[0, a] * g12 - g[1, a] * g02 + g[2, a] * g01
                        total += fm * gm
        return total
    raise ValueError("ordered_minor_sum supports k <= 3 in the compiled backend")
