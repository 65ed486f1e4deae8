"""Generalised Wronskians through divided differences.

The ratio det[f_i(x_j)] / prod_{i<j}(x_j - x_i) is the determinant of the
Newton divided-difference table det[f_i[x_1..x_j]], which stays well defined
as the nodes cluster. Its value at a coincident point a*1_n, times 1/c_n, is
the Wronskian W(f_1, ..., f_n)(a); it is estimated on a ladder of shrinking
clusters and extrapolated.

Vandermonde products here use the increasing-order convention, which makes
W(f_1, f_2) = f_1 f_2' - f_2 f_1' and D(f_1, f_2) = W(f_2, f_1).
"""
from dataclasses import dataclass, field
from math import factorial

import numpy as np
from scipy.integrate import cumulative_simpson

from . import _backend
from .lattice import c_const, make_rng

MAX_ORDER = 6


# ---------------------------------------------------------------------------
# function panels

class CallablePanel:
    """Panel of closed-form functions (vectorised callables); always smooth."""

    smooth = True
    spacing = None

    def __init__(self, funcs):
        self.funcs = list(funcs)

    @property
    def n(self):
        return len(self.funcs)

    def evaluate(self, x):
        x = np.asarray(x, dtype=float)
        out = np.empty((self.n,) + x.shape)
        for i, f in enumerate(self.funcs):
            out[i] = np.broadcast_to(f(x), x.shape)
        return out

    def select(self, idx):
        return CallablePanel([self.funcs[i] for i in idx])

    def __add__(self, other):
        return CallablePanel(self.funcs + list(other.funcs))


class GridPanel:
    """Panel of functions sampled on uniform nodes ``x_0 + i*h``.

    Off-node evaluation uses linear interpolation. With ``periodic=True`` the
    node index wraps (torus of length m*h), so clusters near the edge are
    still evaluated.
    """

    def __init__(self, nodes, values, smooth=False, periodic=False):
        self.nodes = np.asarray(nodes, dtype=float)
        self.values = np.atleast_2d(np.asarray(values, dtype=float))
        if self.values.shape[1] != self.nodes.size:
            raise ValueError("values must have one column per node")
        self.smooth = smooth
        self.periodic = periodic
        self.spacing = float(self.nodes[1] - self.nodes[0])

    @property
    def n(self):
        return self.values.shape[0]

    def position_index(self, x):
        return (np.asarray(x, dtype=float) - self.nodes[0]) / self.spacing

    def take(self, idx):
        """Values at integer node indices ``idx`` (any shape): (n,) + idx.shape."""
        idx = np.asarray(idx)
        m = self.nodes.size
        if self.periodic:
            idx = idx % m
        elif np.any(idx < 0) or np.any(idx >= m):
            raise ValueError("cluster nodes fall outside the sampled window")
        return self.values[:, idx]

    def evaluate(self, x):
        pos = self.position_index(x)
        near = np.rint(pos)
        if np.all(np.abs(pos - near) < 1e-9):
            return self.take(near.astype(int))
        lo = np.floor(pos).astype(int)
        w = pos - lo
        return self.take(lo) * (1 - w) + self.take(lo + 1) * w

    def select(self, idx):
        return GridPanel(self.nodes, self.values[list(idx)], self.smooth, self.periodic)

    def __add__(self, other):
        return GridPanel(self.nodes, np.vstack([self.values, other.values]), self.smooth, self.periodic)


# ---------------------------------------------------------------------------
# clusters and extrapolation

def _lagrange_at_zero(h):
    """Weights w with sum_r w_r F(h_r) = interpolating polynomial in h evaluated at 0."""
    h = np.asarray(h, dtype=float)
    w = np.ones(h.size)
    for r in range(h.size):
        for q in range(h.size):
            if q != r:
                w[r] *= h[q] / (h[q] - h[r])
    return w


def _linear_fit_at_zero(h):
    """Weights giving the intercept of the least-squares line through (h_r, F_r)."""
    A = np.column_stack([np.ones(len(h)), h])
    return np.linalg.pinv(A)[0]


@dataclass(frozen=True)
class DividedDifferenceCluster:
    """Ladder of node clusters around a centre.

    Smooth ladders are centred (offsets (j - (n-1)/2) * eps), so the
    extension's symmetry makes the error even in eps and Richardson uses eps^2.
    Rough ladders are one-sided grid clusters a, a+eps, ... with eps in
    {1, 2, 4} grid spacings and a least-squares linear extrapolation.
    """

    center: float
    base_spacing: float
    factors: tuple = (1.0, 0.5, 0.25)
    smooth: bool = True

    def spacings(self):
        return tuple(self.base_spacing * f for f in self.factors)

    def offsets(self, n):
        j = np.arange(n, dtype=float)
        return j - (n - 1) / 2.0 if self.smooth else j

    def nodes(self, n, rung):
        return self.center + self.offsets(n) * self.spacings()[rung]

    def weights(self):
        eps = np.asarray(self.spacings())
        if self.smooth:
            return _lagrange_at_zero(eps**2)
        return _linear_fit_at_zero(eps)

    @classmethod
    def smooth_default(cls, center, n, scale=1.0):
        # balances truncation (eps^6 after extrapolation) and rounding (~1e-16 / eps^(n-1))
        return cls(center, 0.08 * scale * max(1, n - 1) ** 0.5, (1.0, 0.5, 0.25), True)

    @classmethod
    def for_grid(cls, center, n, spacing, smooth, base=1):
        """Grid-aligned ladder; ``base`` is the finest rung in grid spacings."""
        if smooth:
            step = base * (2 if n % 2 == 0 else 1)
            return cls(center, 4 * step * spacing, (1.0, 0.5, 0.25), True)
        return cls(center, base * spacing, (1.0, 2.0, 4.0), False)


def default_cluster(panel, center, n):
    if panel.spacing is None:
        return DividedDifferenceCluster.smooth_default(center, n)
    return DividedDifferenceCluster.for_grid(center, n, panel.spacing, panel.smooth)


@dataclass(frozen=True)
class WronskianEstimate:
    value: float
    spread: float
    rungs: tuple = field(default=())

    def __post_init__(self):
        if self.spread < 0:
            raise ValueError("spread must be non-negative")


def _spread(rungs):
    r = np.asarray(rungs)
    return float(r.max() - r.min()) if r.size else 0.0


# ---------------------------------------------------------------------------
# divided-difference ratios

def dd_ratio(panel, nodes):
    """det[f_i(x_j)] / prod_{i<j}(x_j - x_i) via the divided-difference table.

    Nodes are sorted internally; repeated nodes are rejected.
    """
    x = np.sort(np.asarray(nodes, dtype=float))
    if x.size != panel.n:
        raise ValueError(f"need {panel.n} nodes, got {x.size}")
    if np.any(np.diff(x) <= 0):
        raise ValueError("repeated nodes: use extend_at_diagonal for coincident points")
    vals = panel.evaluate(x)
    return float(_backend.dd_det(vals[None], x[None])[0])


def extend_at_diagonal(panel, a, cluster=None):
    """W(f_1..f_n)(a): c_n^{-1} times the extrapolated extension at a*1_n."""
    n = panel.n
    if n == 0:
        return WronskianEstimate(1.0, 0.0, (1.0,))
    if n == 1:
        v = float(panel.evaluate(np.array([a]))[0, 0])
        return WronskianEstimate(v, 0.0, (v,))
    if n > MAX_ORDER:
        raise ValueError(f"Wronskians beyond order {MAX_ORDER} are not supported")
    cluster = cluster or default_cluster(panel, a, n)
    inv_c = 1.0 / c_const(n)
    nodes = np.array([cluster.nodes(n, r) for r in range(len(cluster.factors))])
    vals = np.stack([panel.evaluate(x) for x in nodes])
    rungs = inv_c * _backend.dd_det(vals, nodes)
    if not np.all(np.isfinite(rungs)):
        raise FloatingPointError(f"non-finite Wronskian rung values {rungs} at a={a}")
    value = float(np.dot(cluster.weights(), rungs))
    return WronskianEstimate(value, _spread(rungs), tuple(float(r) for r in rungs))


def wronskian(panel, a, cluster=None):
    return extend_at_diagonal(panel, a, cluster).value


def wronskian_line(panel, centers_idx, smooth=None, base=1):
    """W(f_1..f_n) at many grid nodes of a GridPanel, vectorised over centres.

    Returns (values, spreads) arrays aligned with ``centers_idx``.
    """
    centers_idx = np.asarray(centers_idx, dtype=int)
    n = panel.n
    if n == 1:
        v = panel.take(centers_idx)[0]
        return v.copy(), np.zeros_like(v)
    smooth = panel.smooth if smooth is None else smooth
    cl = DividedDifferenceCluster.for_grid(0.0, n, panel.spacing, smooth, base)
    inv_c = 1.0 / c_const(n)
    rungs = []
    for r, eps in enumerate(cl.spacings()):
        step = int(round(eps / panel.spacing))
        off = cl.offsets(n) * step
        off_i = np.rint(off).astype(int)
        idx = centers_idx[:, None] + off_i[None, :]
        vals = np.moveaxis(panel.take(idx), 0, 1)  # (N, n_funcs, n_nodes)
        pos = (idx * panel.spacing).astype(float)
        rungs.append(inv_c * _backend.dd_det(vals, pos))
    rungs = np.array(rungs)
    value = np.tensordot(cl.weights(), rungs, axes=1)
    return value, rungs.max(axis=0) - rungs.min(axis=0)


# ---------------------------------------------------------------------------
# Hirota derivative and integrated identities

def hirota_D(f1, f2, a, cluster=None):
    """D(f1, f2) = W(f2, f1) = f1' f2 - f1 f2'."""
    return extend_at_diagonal(CallablePanel([f2, f1]), a, cluster).value


def _midpoints(a, b, nq):
    h = (b - a) / nq
    return a + (np.arange(nq) + 0.5) * h, h


def _gauss_panels(a, b, nq):
    """Nodes and weights of composite two-point Gauss-Legendre on nq panels."""
    mids, h = _midpoints(a, b, nq)
    off = h / (2.0 * np.sqrt(3.0))
    nodes = np.column_stack([mids - off, mids + off]).ravel()
    return nodes, np.full(nodes.size, h / 2.0)


def ratio_identity_check(f1, f2, a, b, nq, cluster=None):
    """|f1/f2 |_a^b - midpoint quadrature of D(f1,f2)/f2^2 over [a, b]|."""
    mids, h = _midpoints(a, b, nq)
    f2_mid = np.asarray(f2(mids), dtype=float)
    f2_ends = np.asarray(f2(np.array([a, b])), dtype=float)
    if np.any(f2_mid <= 0) or np.any(f2_ends <= 0):
        raise ValueError("f2 must be strictly positive on [a, b]")
    lhs = f1(b) / f2_ends[1] - f1(a) / f2_ends[0]
    d = np.array([hirota_D(f1, f2, m, cluster and _recentre(cluster, m)) for m in mids])
    rhs = float(np.sum(d / f2_mid**2) * h)
    return float(abs(lhs - rhs))


def _recentre(cluster, center):
    return DividedDifferenceCluster(center, cluster.base_spacing, cluster.factors, cluster.smooth)


def key_lemma_check(fs, g, h, a, b, nq):
    """Integrated key-lemma residual.

    W(f..,h)/W(f..,g) |_a^b  versus  int_a^b W(f..) W(f..,g,h) / W(f..,g)^2 dx,
    all four Wronskians estimated by ``extend_at_diagonal``.
    """
    F = CallablePanel(fs)
    Fg, Fh = F + CallablePanel([g]), F + CallablePanel([h])
    Fgh = F + CallablePanel([g, h])

    def W(panel, x):
        return extend_at_diagonal(panel, x).value

    # two-point Gauss per panel: the midpoint rule alone leaves O(h^2) error
    mids, wts = _gauss_panels(a, b, nq)
    wg_mid = np.array([W(Fg, m) for m in mids])
    wg_ends = np.array([W(Fg, a), W(Fg, b)])
    if np.any(wg_mid <= 0) or np.any(wg_ends <= 0):
        raise ValueError("hypothesis violated: W(f.., g) must be strictly positive on [a, b]")
    lhs = W(Fh, b) / wg_ends[1] - W(Fh, a) / wg_ends[0]
    integrand = np.array([W(F, m) * W(Fgh, m) for m in mids]) / wg_mid**2
    return float(abs(lhs - np.dot(wts, integrand)))


def jacobi_identity_check(M):
    """Absolute residual of D[n+1|n+1] D[n|n] - D[n|n+1] D[n+1|n] - D[n,n+1|n,n+1] D."""
    M = np.asarray(M, dtype=float)
    stack = M if M.ndim == 3 else M[None]
    size = stack.shape[-1]
    if size < 2:
        raise ValueError("Jacobi identity needs a matrix of size >= 2")
    p, q = size - 2, size - 1  # 0-based rows/cols n and n+1

    def minor(rows, cols):
        keep_r = [i for i in range(size) if i not in rows]
        keep_c = [j for j in range(size) if j not in cols]
        if not keep_r:
            return np.ones(stack.shape[0])
        return np.linalg.det(stack[:, keep_r][:, :, keep_c])

    full = np.linalg.det(stack)
    res = minor([q], [q]) * minor([p], [p]) - minor([p], [q]) * minor([q], [p]) \
        - minor([p, q], [p, q]) * full
    res = np.abs(res)
    return res if M.ndim == 3 else float(res[0])


def jacobi_scale(M):
    """Hadamard-type bound on the products in the identity: (sqrt(n+1) max|M|)^(2n)."""
    M = np.asarray(M, dtype=float)
    size = M.shape[-1]
    mx = np.abs(M).max(axis=(-2, -1))
    return (np.sqrt(size) * mx) ** (2 * (size - 1))


# ---------------------------------------------------------------------------
# reconstruction from successive Wronskians

def anchored_integral(y, spacing, anchor_idx):
    """Indefinite integral of samples ``y`` (composite Simpson), zero at ``anchor_idx``."""
    F = cumulative_simpson(y, dx=spacing, initial=0.0)
    return F - F[anchor_idx]


def _iterated(rhos, spacing, anchor_idx):
    """[rho_1, rho_1 I rho_2, rho_1 I(rho_2 I rho_3), ...] on the sample nodes."""
    n = len(rhos)
    out = np.empty((n, rhos[0].size))
    for k in range(n):
        inner = np.ones_like(rhos[0])
        for j in range(k, 0, -1):
            inner = anchored_integral(rhos[j] * inner, spacing, anchor_idx)
        out[k] = rhos[0] * inner
    return out


def _anchor_index(nodes, x0):
    return int(np.argmin(np.abs(np.asarray(nodes) - x0)))


def iterated_integral_system(rhos, nodes, x0, smooth=True, periodic=False):
    """g_1 = rho_1, g_k = rho_1 int rho_2 ... int rho_k (integrals anchored at x0).

    ``rhos`` is an (n, m) array of samples on ``nodes``. Returns the panel
    and a checker ``check(centers_idx, base=2)`` giving |W(g) - rho_1^n W(h)|,
    with h built the same way from rho_2..rho_n (``base`` widens the ladder).
    """
    rhos = np.atleast_2d(np.asarray(rhos, dtype=float))
    nodes = np.asarray(nodes, dtype=float)
    spacing = nodes[1] - nodes[0]
    anchor = _anchor_index(nodes, x0)
    g = GridPanel(nodes, _iterated(list(rhos), spacing, anchor), smooth, periodic)
    n = rhos.shape[0]

    # Simpson's cumulative sums alternate between two node formulas; a finest
    # rung of two spacings keeps that even/odd ripple out of the differences
    def check(centers_idx, base=2):
        centers_idx = np.asarray(centers_idx, dtype=int)
        wg, _ = wronskian_line(g, centers_idx, base=base)
        if n == 1:
            return np.abs(wg - rhos[0, centers_idx])
        h = GridPanel(nodes, _iterated(list(rhos[1:]), spacing, anchor), smooth, periodic)
        wh, _ = wronskian_line(h, centers_idx, base=base)
        return np.abs(wg - rhos[0, centers_idx] ** n * wh)

    return g, check


def reconstruct(lines, nodes, x0, smooth=True, periodic=False):
    """Panel f~_1..f~_n whose successive Wronskians are the given positive lines.

    f~_1 = l_1, f~_k = l_1 int(l_2/l_1^2) int(l_1 l_3/l_2^2) ... int(l_{k-2} l_k / l_{k-1}^2).
    """
    ell = np.atleast_2d(np.asarray(lines, dtype=float))
    if np.any(~np.isfinite(ell)) or np.any(ell <= 0):
        raise ValueError("reconstruction needs strictly positive, finite lines")
    padded = np.vstack([np.ones_like(ell[0]), ell])  # l_0 = 1
    rhos = [ell[0]] + [padded[j - 1] * padded[j + 1] / padded[j] ** 2
                       for j in range(1, ell.shape[0])]
    anchor = _anchor_index(nodes, x0)
    spacing = float(nodes[1] - nodes[0])
    return GridPanel(nodes, _iterated(rhos, spacing, anchor), smooth, periodic)


def wedge(panel, x):
    """f_1 ^ ... ^ f_n (x) = det[f_i(x_j)] at a node tuple (no Vandermonde division)."""
    return float(np.linalg.det(panel.evaluate(np.asarray(x, dtype=float))))


# ---------------------------------------------------------------------------
# interlacing integrals and the GUE-minor representation

def interlacing_integral(H, x, order=16):
    """int H(y) Delta_{n-1}(y)/Delta_n(x) 1(y interlaced with x) dy.

    ``x`` is sorted into descending order; the interlacing set is the box
    prod_i [x_{i+1}, x_i], integrated with tensor Gauss-Legendre.
    """
    from .lattice import vandermonde
    x = -np.sort(-np.asarray(x, dtype=float))
    n = x.size
    if n < 2:
        raise ValueError("interlacing integral needs n >= 2")
    if np.any(np.diff(x) >= 0):
        raise ValueError("coordinates must be distinct; use gue_minor_expectation")
    t, w = np.polynomial.legendre.leggauss(order)
    lo, hi = x[1:], x[:-1]
    grids = [0.5 * (hi[i] - lo[i]) * t + 0.5 * (hi[i] + lo[i]) for i in range(n - 1)]
    weights = [0.5 * (hi[i] - lo[i]) * w for i in range(n - 1)]
    Y = np.stack(np.meshgrid(*grids, indexing="ij"), axis=-1).reshape(-1, n - 1)
    Wt = np.ones(Y.shape[0])
    for wi in np.meshgrid(*weights, indexing="ij"):
        Wt = Wt * wi.reshape(-1)
    vals = np.asarray(H(Y), dtype=float) * np.atleast_1d(vandermonde(Y))
    return float(np.dot(Wt, vals) / vandermonde(x))


def haar_unitary(rng, n, size):
    """``size`` Haar unitaries via QR of complex Ginibre matrices with phase-fixed R."""
    z = (rng.standard_normal((size, n, n)) + 1j * rng.standard_normal((size, n, n))) / np.sqrt(2)
    q, r = np.linalg.qr(z)
    d = np.diagonal(r, axis1=-2, axis2=-1)
    return q * (d / np.abs(d))[:, None, :]


def gue_minor_expectation(H, x, replicas, seed, block=1000):
    """(1/(n-1)!) E[H(eigenvalues of the leading (n-1)-minor of U diag(x) U*)].

    Returns (estimate, standard_error). Replica blocks use derived seeds so
    the result does not depend on how blocks are scheduled.
    """
    if replicas < 100:
        raise ValueError("gue_minor_expectation needs at least 100 replicas")
    x = np.asarray(x, dtype=float)
    n = x.size
    samples = []
    for b, start in enumerate(range(0, replicas, block)):
        size = min(block, replicas - start)
        U = haar_unitary(make_rng(seed, b), n, size)
        M = (U * x[None, None, :]) @ np.conj(np.swapaxes(U, 1, 2))
        eig = np.linalg.eigvalsh(M[:, : n - 1, : n - 1])[:, ::-1]
        samples.append(np.asarray(H(eig), dtype=float) * np.ones(size))
    s = np.concatenate(samples) / factorial(n - 1)
    return float(s.mean()), float(s.std(ddof=1) / np.sqrt(s.size))
