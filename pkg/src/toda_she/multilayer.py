"""Determinantal multilayer fields M_n, tau_n, Z_n and their flow checks.

M_n(t, x, y) = det[u(t, x_i, y_j)] / (Delta(x) Delta(y)). When coordinates
coincide, each group of repeated coordinates is replaced by a cluster of
nearby nodes and the bivariate divided-difference determinant is
extrapolated to zero cluster width (tensor product of the x and y ladders).

Kernels come from a *source*: the closed-form heat kernel, or SHE propagator
columns on the lattice (computed lazily, one source column at a time).
"""
from dataclasses import dataclass, field

import numpy as np

from . import _backend
from .lattice import (
    c_const,
    heat_kernel,
    norm_constants,
    vandermonde,
    wrapped_heat_kernel,
)
from .she import _local_step, _step_kernel, apply_steps, apply_steps_path, propagator
from .wronskian import _lagrange_at_zero, _linear_fit_at_zero

MAX_LEVEL = 3
_LADDER = (4, 2, 1)


# ---------------------------------------------------------------------------
# kernel sources

class HeatSource:
    """u(x, y) = p_t(x - y), optionally wrapped on [-L, L)."""

    smooth = True
    spacing = None
    seed = None

    def __init__(self, t, half_width=None):
        if t <= 0:
            raise ValueError(f"heat source needs t > 0, got {t}")
        self.t = t
        self.half_width = half_width

    def kernel(self, d):
        if self.half_width is None:
            return heat_kernel(self.t, d)
        return wrapped_heat_kernel(self.t, d, self.half_width)

    def table(self, xpos, ypos):
        """Matrix stack u(x_i, y_j) for node stacks of shape (..., n)."""
        return self.kernel(xpos[..., :, None] - ypos[..., None, :])

    def eps0(self, size):
        return 0.1 * np.sqrt(self.t) * max(1, size - 1) ** 0.5


class LatticeSource:
    """u(s, t, z, y) on the lattice, from a full Propagator or lazily by columns.

    Columns P[:, j] are propagated only for the source nodes actually
    requested; the (s, t) computation reads noise through a view shifted to
    s, so earlier increments are never touched.
    """

    def __init__(self, grid, noise, s, t, prop=None):
        self.grid = grid
        self.s, self.t = s, t
        self.k0, self.k1 = grid.step_of(s), grid.step_of(t)
        if self.k1 <= self.k0:
            raise ValueError(f"need s < t, got s={s}, t={t}")
        self.noise = noise.shifted(self.k0 - noise.origin_step) if self.k0 > noise.origin_step else noise
        self.smooth = noise.is_zero
        self.spacing = grid.dx
        self.seed = noise.seed
        self._prop = prop
        self._cols = {}
        self._rows = {}

    @classmethod
    def from_propagator(cls, grid, noise, prop):
        return cls(grid, noise, prop.start, prop.stop, prop)

    def columns(self, src):
        """P[:, src] for source indices ``src`` (wrapped mod nx); shape (nx, len(src))."""
        nx = self.grid.num_space
        src = np.asarray(src, dtype=int).ravel() % nx
        if self._prop is not None:
            return self._prop.matrix[:, src]
        missing = sorted({int(j) for j in src} - self._cols.keys())
        if missing:
            block = np.zeros((nx, len(missing)))
            block[missing, np.arange(len(missing))] = 1.0
            out = apply_steps(self.grid, self.noise, block, self.k0, self.k1)
            for c, j in enumerate(missing):
                self._cols[j] = out[:, c]
        return np.column_stack([self._cols[int(j)] for j in src])

    def rows(self, tgt):
        """P[tgt, :] for target indices (wrapped mod nx); shape (len(tgt), nx)."""
        nx = self.grid.num_space
        tgt = np.asarray(tgt, dtype=int).ravel() % nx
        if self._prop is not None:
            return self._prop.matrix[tgt, :]
        missing = sorted({int(j) for j in tgt} - self._rows.keys())
        if missing:
            out = propagate_rows(self.grid, self.noise, missing, self.k0, self.k1)
            for r, j in enumerate(missing):
                self._rows[j] = out[r]
        return np.vstack([self._rows[int(j)] for j in tgt])

    def table_idx_by_rows(self, xi, yi):
        """As ``table_idx`` but built from propagator rows (few targets, many sources)."""
        nx = self.grid.num_space
        xi = np.asarray(xi) % nx
        yi = np.asarray(yi) % nx
        uniq, inv = np.unique(yi, return_inverse=True)
        rows = self.rows(uniq)  # (U, nx)
        ysel = inv.reshape(yi.shape)
        return rows[ysel[..., None, :], xi[..., :, None]] / self.grid.dx

    def table_idx(self, xi, yi):
        """u(x_i, y_j) for index stacks of shape (..., n)."""
        nx = self.grid.num_space
        xi = np.asarray(xi) % nx
        yi = np.asarray(yi) % nx
        uniq, inv = np.unique(xi, return_inverse=True)
        cols = self.columns(uniq)  # (nx, U)
        xsel = inv.reshape(xi.shape)
        # out[..., i, j] = cols[y_j, x_i] / dx
        return cols[yi[..., None, :], xsel[..., :, None]] / self.grid.dx


def kernel_table(source, x, y):
    """Plain kernel matrix u(x_i, y_j) at (snapped) positions."""
    if isinstance(source, LatticeSource):
        return source.table_idx(source.grid.index_of(x), source.grid.index_of(y))
    return source.table(np.asarray(x, float), np.asarray(y, float))


# ---------------------------------------------------------------------------
# Weyl points and cluster ladders

@dataclass(frozen=True)
class WeylPoint:
    """Coordinates sorted x_1 >= ... >= x_n plus the multiplicity pattern."""

    coords: tuple
    multiplicities: tuple

    @classmethod
    def from_tuple(cls, x, tol=0.0):
        xs = tuple(float(v) for v in sorted(np.atleast_1d(x), reverse=True))
        mult, run = [], 1
        for a, b in zip(xs, xs[1:]):
            if abs(a - b) <= tol:
                run += 1
            else:
                mult.append(run)
                run = 1
        mult.append(run)
        return cls(xs, tuple(mult))

    @property
    def n(self):
        return len(self.coords)

    @property
    def distinct(self):
        return all(m == 1 for m in self.multiplicities)


def _groups(keys):
    """Runs of equal consecutive values in a sorted sequence: list of (start, size)."""
    out, start = [], 0
    for i in range(1, len(keys) + 1):
        if i == len(keys) or keys[i] != keys[start]:
            out.append((start, i - start))
            start = i
    return out


def _lattice_ladder(idx, smooth):
    """Index ladders (R, n) for sorted node indices; groups become clusters."""
    rungs = []
    for r in range(len(_LADDER)):
        nodes = np.array(idx, dtype=int)
        for start, size in _groups(list(idx)):
            if size == 1:
                continue
            j = np.arange(size)
            if smooth:
                step = _LADDER[r] * (2 if size % 2 == 0 else 1)
                off = ((j - (size - 1) / 2.0) * step).astype(int)
            else:
                off = j * _LADDER[::-1][r]
            nodes[start:start + size] = idx[start] + off
        rungs.append(nodes)
    steps = np.array(_LADDER, float) if smooth else np.array(_LADDER[::-1], float)
    w = _lagrange_at_zero(steps**2) if smooth else _linear_fit_at_zero(steps)
    return np.array(rungs), w


def _smooth_ladder(pos, source):
    rungs = []
    for f in (1.0, 0.5, 0.25):
        nodes = np.array(pos, dtype=float)
        for start, size in _groups(list(pos)):
            if size > 1:
                j = np.arange(size)
                nodes[start:start + size] = pos[start] + (j - (size - 1) / 2.0) * source.eps0(size) * f
        rungs.append(nodes)
    return np.array(rungs), _lagrange_at_zero(np.array([1.0, 0.25, 0.0625]))


@dataclass(frozen=True)
class MultilayerField:
    level: int
    value: float
    spread: float = 0.0
    rungs: tuple = field(default=(), repr=False)
    seed: object = None

    @property
    def positive(self):
        return self.value > 0


def _ladder(source, coords):
    """Ladder for ascending coordinates: (node positions (R, n), node indices or None, weights)."""
    if isinstance(source, LatticeSource):
        idx = np.sort(source.grid.index_of(coords))
        rungs, w = _lattice_ladder(idx, source.smooth)
        pos = source.grid.nodes[0] + rungs * source.grid.dx  # unwrapped positions
        return pos, rungs, w, bool(np.all(np.diff(idx) > 0))
    pos = np.sort(np.asarray(coords, dtype=float))
    rungs, w = _smooth_ladder(pos, source)
    return rungs, None, w, bool(np.all(np.diff(pos) > 0))


def _tables(source, xl, yl):
    """Kernel tables for every (x-rung, y-rung) pair: shape (Rx*Ry, n, n) plus node stacks."""
    xpos, xidx = xl[0], xl[1]
    ypos, yidx = yl[0], yl[1]
    Rx, Ry = xpos.shape[0], ypos.shape[0]
    XP = np.repeat(xpos, Ry, axis=0)
    YP = np.tile(ypos, (Rx, 1))
    if xidx is not None:
        vals = source.table_idx(np.repeat(xidx, Ry, axis=0), np.tile(yidx, (Rx, 1)))
    else:
        vals = source.table(XP, YP)
    return vals, XP, YP


def m_n(source, x, y):
    """M_n(t, x, y) as a MultilayerField (value, ladder spread, rung values)."""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    y = np.atleast_1d(np.asarray(y, dtype=float))
    n = x.size
    if y.size != n:
        raise ValueError("x and y tuples must have the same length")
    if n == 0:
        return MultilayerField(0, 1.0, 0.0, (1.0,), source.seed)
    xl, yl = _ladder(source, x), _ladder(source, y)
    if xl[3] and yl[3]:
        vals, XP, YP = _tables(source, (xl[0][-1:], None if xl[1] is None else xl[1][-1:]),
                               (yl[0][-1:], None if yl[1] is None else yl[1][-1:]))
        d = np.linalg.det(vals[0])
        value = float(d / (vandermonde(XP[0]) * vandermonde(YP[0])))
        rungs = (value,)
        spread = 0.0
    else:
        vals, XP, YP = _tables(source, xl, yl)
        r = _backend.dd_det(vals, XP, YP)
        weights = np.outer(xl[2], yl[2]).ravel()
        value = float(np.dot(weights, r))
        rungs = tuple(float(v) for v in r)
        spread = float(r.max() - r.min())
    if not np.isfinite(value):
        raise FloatingPointError(f"non-finite M_{n} at x={x}, y={y}")
    return MultilayerField(n, value, spread, rungs, source.seed)


def diagonal_line(source, n, x, y_idx, vary="y"):
    """M_n(t, x 1_n, y 1_n) for one x and many lattice targets ``y_idx`` (vectorised).

    With ``vary="x"`` the roles flip: ``x`` is the fixed target and ``y_idx``
    runs over sources, using propagator rows. Returns (values, spreads).
    """
    if n == 0:
        ones = np.ones(len(y_idx))
        return ones, np.zeros_like(ones)
    y_idx = np.asarray(y_idx, dtype=int)
    grid = source.grid
    xi = np.full(n, int(grid.index_of(x)))
    xr, wx = _lattice_ladder(xi, source.smooth)
    yr, wy = _lattice_ladder(np.zeros(n, dtype=int), source.smooth)
    if n == 1:
        if vary == "x":
            v = source.rows(xi[:1])[0, y_idx % grid.num_space] / grid.dx
        else:
            v = source.columns(xi[:1])[y_idx % grid.num_space, 0] / grid.dx
        return v, np.zeros_like(v)
    N = y_idx.size
    out = []
    for rx in range(xr.shape[0]):
        for ry in range(yr.shape[0]):
            Y = y_idx[:, None] + yr[ry][None, :]
            X = np.broadcast_to(xr[rx], (N, n))
            if vary == "x":
                vals = source.table_idx_by_rows(Y, X)
                out.append(_backend.dd_det(vals, Y * grid.dx, X * grid.dx))
            else:
                vals = source.table_idx(X, Y)
                out.append(_backend.dd_det(vals, X * grid.dx, Y * grid.dx))
    out = np.array(out)
    value = np.tensordot(np.outer(wx, wy).ravel(), out, axes=1)
    return value, out.max(axis=0) - out.min(axis=0)


def tau_n(source, n, x, y):
    """tau_n = c_n^{-2} M_n(t, x 1_n, y 1_n); tau_0 = 1."""
    if n == 0:
        return 1.0
    return m_n(source, [x] * n, [y] * n).value / c_const(n) ** 2


def z_n(source, n, x, y, t=None):
    """Z_n = M_n(t, x 1_n, y 1_n) / c_{n,t}."""
    t = source.t if t is None else t
    return m_n(source, [x] * n, [y] * n).value / norm_constants(n, t)[1]


def positivity_violations(fields):
    """Fraction of MultilayerField values that are <= 0 (monitored, never suppressed)."""
    vals = np.array([f.value for f in fields])
    return float(np.mean(vals <= 0)) if vals.size else 0.0


# ---------------------------------------------------------------------------
# closed-form kernels

def km_determinant(t, x, y, half_width=None):
    """det[p_t(x_i - y_j)] (wrapped kernel when ``half_width`` is given)."""
    return float(np.linalg.det(np.atleast_2d(HeatSource(t, half_width).table(
        np.atleast_1d(np.asarray(x, float)), np.atleast_1d(np.asarray(y, float))))))


def dyson_kernel(t, x, y, half_width=None):
    """Q_t(x, y) = Delta(y)/Delta(x) det[p_t(x_i - y_j)]."""
    dx_ = vandermonde(np.atleast_1d(np.asarray(x, float)))
    if dx_ == 0:
        raise ValueError("coincident x coordinates: Q_t is not defined there")
    return km_determinant(t, x, y, half_width) * vandermonde(np.atleast_1d(np.asarray(y, float))) / dx_


def dyson_mass(t, x, grid):
    """sum over ordered lattice tuples y of Q_t(x, y) dx^n (n = 2)."""
    z = grid.nodes
    src = HeatSource(t, grid.half_width)
    kx = src.table(np.asarray(x, float), z)  # (2, nx)
    i, j = np.triu_indices(z.size, 1)
    det = kx[0, j] * kx[1, i] - kx[0, i] * kx[1, j]  # y = (z_j, z_i) descending
    vy = z[j] - z[i]
    return float(np.sum(det * vy) / vandermonde(np.asarray(x, float)) * grid.dx**2)


# ---------------------------------------------------------------------------
# flow identities

def propagate_rows(grid, noise, rows, k0, k1):
    """Rows e_y^T A_{k1-1} ... A_{k0} of a propagator, accumulated backwards."""
    kern = _step_kernel(grid)
    R = np.zeros((len(rows), grid.num_space))
    R[np.arange(len(rows)), np.asarray(rows) % grid.num_space] = 1.0
    for k in range(k1 - 1, k0 - 1, -1):
        factor = grid.dx + noise.increments[_local_step(noise, k)]
        R = (R @ kern) * factor[None, :]
    return R


@dataclass(frozen=True)
class CauchyBinetResult:
    determinant_residual: float
    quadrature_residual: float
    direct: float
    via_sum: float


def cauchy_binet_flow_check(grid, noise, s, t, x, y, n=None):
    """Discrete Cauchy-Binet form of the M_n flow, plus its continuum quadrature form.

    direct  = det[u(t, x_i, y_j)] from the full-interval propagation,
    via_sum = sum over ordered z of det[u(s, x_i, z_k)] det[u(s, t, z_k, y_j)] dx^n.
    """
    x = np.sort(np.atleast_1d(np.asarray(x, float)))
    y = np.sort(np.atleast_1d(np.asarray(y, float)))
    n = x.size if n is None else n
    if n > MAX_LEVEL or x.size != n or y.size != n:
        raise ValueError(f"need tuples of length n <= {MAX_LEVEL}")
    k_s, k_t = grid.step_of(s), grid.step_of(t)
    if not 0 < k_s < k_t:
        raise ValueError("need 0 < s < t on the step grid")
    xi, yi = grid.index_of(x), grid.index_of(y)
    dx = grid.dx
    E = np.zeros((grid.num_space, n))
    E[xi, np.arange(n)] = 1.0
    A = apply_steps(grid, noise, E, 0, k_s)                      # P(0,s)[:, x]
    full = apply_steps(grid, noise, A, k_s, k_t)                 # P(0,t)[:, x]
    B = propagate_rows(grid, noise.shifted(k_s), yi, k_s, k_t)   # P(s,t)[y, :]
    direct = float(np.linalg.det(full[yi, :] / dx))
    F = A.T / dx                        # u(s, x_i, z) per row
    G = B / dx                          # u(s, t, z, y_j) per row
    via = _backend.ordered_minor_sum(F, G) * dx**n
    det_res = abs(direct - via) / abs(direct)
    # continuum form: p*_n(t) = sum over ordered z of p*_n(s, x, z) p*_n(t - s, z, y) dx^n
    hs, ht = HeatSource(s, grid.half_width), HeatSource(t - s, grid.half_width)
    Fq = hs.table(x, grid.nodes)
    Gq = ht.table(y, grid.nodes)
    km = km_determinant(t, x, y, grid.half_width)
    quad = _backend.ordered_minor_sum(Fq, Gq) * dx**n
    return CauchyBinetResult(float(det_res), float(abs(km - quad) / abs(km)), direct, float(via))


def mn_evolution_residual(grid, noise, t, x, y):
    """Relative residual of the discrete multilayer mild equation for n in {1, 2}.

    M_n(t,x,y) is compared with the discrete heat term plus the stochastic
    integral sum_m sum_j dW[m, j] (inner sum over y'_2 on the lattice), with
    the kernels G_r = S^{r-1} K of the scheme itself.
    """
    x = np.sort(np.atleast_1d(np.asarray(x, float)))
    y = np.sort(np.atleast_1d(np.asarray(y, float)))
    n = x.size
    if n not in (1, 2) or y.size != n:
        raise ValueError("mn_evolution_residual supports n in {1, 2}")
    xi, yi = grid.index_of(x), grid.index_of(y)
    if np.unique(yi).size != n or np.unique(xi).size != n:
        raise ValueError("x and y coordinates must be distinct lattice points")
    k = grid.step_of(t)
    dx = grid.dx
    kern = _step_kernel(grid)
    S = kern * dx
    E = np.zeros((grid.num_space, n))
    E[xi, np.arange(n)] = 1.0 / dx
    path = apply_steps_path(grid, noise, E, 0, k)  # (k+1, nx, n): u(s_m, x_i, .)
    # G_r rows at y for r = 1..k, and the noiseless term S^k at [y, x]
    rows = np.zeros((n, grid.num_space))
    rows[np.arange(n), yi] = 1.0
    G = np.empty((k + 1, n, grid.num_space))
    for r in range(1, k + 1):
        G[r] = rows @ kern
        rows = rows @ S
    heat = rows[:, xi] / dx  # e_y^T S^k e_x / dx
    vdm = vandermonde(grid.nodes[xi]) * vandermonde(grid.nodes[yi])
    lhs = np.linalg.det(path[k][yi, :].T) if n == 2 else path[k][yi[0], 0]
    rhs = np.linalg.det(heat.T) if n == 2 else heat[0, 0]
    for m in range(k):
        dW = noise.increments[_local_step(noise, m)]
        g, U = G[k - m], path[m].T  # (n, nx) each
        if n == 1:
            rhs += np.dot(dW, g[0] * U[0])
            continue
        a, b, p, q = g[0], g[1], U[0], U[1]
        inner = (a * p * np.dot(b, q) - a * q * np.dot(b, p)
                 - b * p * np.dot(a, q) + b * q * np.dot(a, p))
        rhs += dx * np.dot(dW, inner)
    return float(abs(lhs - rhs) / abs(lhs)), float(lhs / vdm)


def noiseless_diagonal(n, t, a, b):
    """c_n t^{-n(n-1)/2} p_t(a-b)^n, the noiseless diagonal value of M_n."""
    return norm_constants(n, t)[1] * heat_kernel(t, a - b) ** n


def mn_residual_rms(grid, replicas, seed, x, y):
    """RMS over replicas of the n = 2 (or 1) discrete mild-equation residual."""
    from .lattice import sample_noise

    res = np.array([mn_evolution_residual(grid, sample_noise(grid, seed, r), grid.horizon, x, y)[0]
                    for r in range(replicas)])
    return float(np.sqrt(np.mean(res**2))), res
