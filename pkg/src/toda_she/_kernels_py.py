"""Pure numpy implementations of the hot kernels.

These mirror ``_kernels.pyx`` one for one and are used whenever the compiled
extension is unavailable (or when ``TODA_SHE_BACKEND=python``).
"""
from itertools import combinations

import numpy as np


def newton_rows(values, nodes):
    """Replace each row of ``values`` by its Newton divided-difference coefficients.

    ``values[b, i, j] = f_i(x_j)`` and ``nodes[b, j] = x_j``. On return
    ``out[b, i, j] = f_i[x_0, ..., x_j]``.
    """
    out = np.array(values, dtype=np.float64, copy=True)
    x = np.asarray(nodes, dtype=np.float64)
    k = out.shape[-1]
    for level in range(1, k):
        # right-to-left so lower-order entries are still available
        for j in range(k - 1, level - 1, -1):
            denom = x[:, j] - x[:, j - level]
            out[:, :, j] = (out[:, :, j] - out[:, :, j - 1]) / denom[:, None]
    return out


def det_lu(mats):
    """Determinants of a stack of small square matrices (LU, partial pivoting)."""
    a = np.asarray(mats, dtype=np.float64)
    k = a.shape[-1]
    if k == 1:
        return a[:, 0, 0].copy()
    if k == 2:
        return a[:, 0, 0] * a[:, 1, 1] - a[:, 0, 1] * a[:, 1, 0]
    return np.linalg.det(a)


def dd_det(values, xnodes, ynodes=None):
    """det of the (bi)divided-difference table of each matrix in the stack.

    Equals ``det(values) / V(ynodes)`` (and additionally ``/ V(xnodes)`` when
    row nodes are given), with V the increasing-order Vandermonde product.
    """
    table = newton_rows(values, ynodes if ynodes is not None else xnodes)
    if ynodes is not None:
        table = newton_rows(np.swapaxes(table, 1, 2), xnodes)
    return det_lu(table)


def ordered_minor_sum(F, G):
    """Sum over ordered column tuples z_1 < ... < z_k of det F[:, z] * det G[:, z]."""
    F = np.asarray(F, dtype=np.float64)
    G = np.asarray(G, dtype=np.float64)
    k, m = F.shape
    if k == 1:
        return float(np.dot(F[0], G[0]))
    if k == 2:
        mf = np.outer(F[0], F[1]) - np.outer(F[1], F[0])
        mg = np.outer(G[0], G[1]) - np.outer(G[1], G[0])
        return float(np.sum(np.triu(mf * mg, 1)))
    if k == 3:
        total = 0.0
        for a in range(m - 2):
            b = np.arange(a + 1, m)
            # 2x2 minors of rows (1, 2) and (0, 2) and (0, 1) over pairs (b, c), b < c
            def minors(M):
                m12 = np.outer(M[1, b], M[2, b]) - np.outer(M[2, b], M[1, b])
                m02 = np.outer(M[0, b], M[2, b]) - np.outer(M[2, b], M[0, b])
                m01 = np.outer(M[0, b], M[1, b]) - np.outer(M[1, b], M[0, b])
                return M[0, a] * m12 - M[1, a] * m02 + M[2, a] * m01
            total += float(np.sum(np.triu(minors(F) * minors(G), 1)))
        return total
    total = 0.0
    for z in combinations(range(m), k):
        total += np.linalg.det(F[:, z]) * np.linalg.det(G[:, z])
    return float(total)
