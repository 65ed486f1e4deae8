"""Line families, frames, the map R and its inverse, pairings and evolutions.

An element of the frame space is a panel f_1..f_n sampled on the lattice; its
image under R is the family of successive Wronskians l_k = W(f_1..f_k).
R^{-1} rebuilds a frame by iterated integration anchored at the grid centre.
Only the flag determinants f_1 ^ ... ^ f_k are canonical, so comparisons are
made at that level.
"""
from dataclasses import dataclass, field
from math import factorial

import numpy as np

from . import _backend
from .lattice import c_const
from .multilayer import LatticeSource, _lattice_ladder, diagonal_line
from .she import apply_steps
from .wronskian import GridPanel, reconstruct, wronskian_line

MAX_LEVEL = 3
DEFAULT_BOUND = 1e12
# lattice lines are trusted down to this fraction of their peak
LATTICE_CUT = 1e-8


def positive_window(lines, rel_cut):
    """Contiguous node range around the peak of l_1 where l_1 >= rel_cut * max(l_1)
    and every line is positive."""
    lines = np.atleast_2d(lines)
    centre = int(np.argmax(lines[0]))
    ok = (lines[0] >= rel_cut * lines[0, centre]) & np.all(lines > 0, axis=0)
    lo = hi = centre
    while lo > 0 and ok[lo - 1]:
        lo -= 1
    while hi < ok.size - 1 and ok[hi + 1]:
        hi += 1
    mask = np.zeros(ok.size, dtype=bool)
    mask[lo:hi + 1] = True
    return mask


@dataclass(frozen=True)
class LSpaceElement:
    """Strictly positive lines l_1..l_n sampled on uniform ``nodes``."""

    lines: np.ndarray = field(repr=False)
    nodes: np.ndarray = field(repr=False)
    smooth: bool = True
    periodic: bool = False
    window: np.ndarray = field(default=None, repr=False)

    def __post_init__(self):
        lines = np.atleast_2d(np.asarray(self.lines, dtype=float))
        object.__setattr__(self, "lines", lines)
        if lines.shape[1] != np.size(self.nodes):
            raise ValueError("one sample per node is required")
        win = slice(None) if self.window is None else self.window
        bad = np.argwhere(~(lines[:, win] > 0))
        if bad.size:
            k, j = bad[0]
            raise ValueError(f"line {k + 1} is not strictly positive at x = {self.nodes[win][j]:.4f}")

    @classmethod
    def from_lattice(cls, lines, nodes, smooth, rel_cut=LATTICE_CUT):
        """Lattice lines whose evaluation window is ``positive_window(lines, rel_cut)``."""
        lines = np.atleast_2d(np.asarray(lines, dtype=float))
        # a single line needs no ratios, hence no window
        window = positive_window(lines, rel_cut) if lines.shape[0] > 1 else None
        return cls(lines, nodes, smooth, True, window)

    @property
    def n(self):
        return self.lines.shape[0]

    def scaled(self, alpha):
        """Lines l_k -> alpha^k l_k."""
        powers = alpha ** np.arange(1, self.n + 1)
        return LSpaceElement(self.lines * powers[:, None], self.nodes, self.smooth,
                             self.periodic, self.window)


@dataclass(frozen=True)
class FSpaceElement:
    """A frame f_1..f_n on the lattice; flag determinants evaluated on demand."""

    panel: GridPanel
    bound: float = DEFAULT_BOUND

    @property
    def n(self):
        return self.panel.n

    @property
    def nodes(self):
        return self.panel.nodes

    @property
    def bounded(self):
        return bool(np.max(np.abs(self.panel.values)) <= self.bound)

    def flag(self, k, x):
        """f_1 ^ ... ^ f_k at a node tuple ``x``."""
        vals = self.panel.select(range(k)).evaluate(np.asarray(x, dtype=float))
        return float(np.linalg.det(vals))

    def flags_batch(self, k, idx):
        """f_1 ^ ... ^ f_k at many node-index tuples ``idx`` of shape (N, k)."""
        vals = self.panel.values[:k][:, np.asarray(idx)]  # (k, N, k)
        return np.linalg.det(np.moveaxis(vals, 1, 0))


@dataclass(frozen=True)
class PairingResult:
    betas: tuple
    finite: bool = True

    def __post_init__(self):
        object.__setattr__(self, "finite", bool(np.all(np.isfinite(self.betas))))


def center_anchor(nodes):
    nodes = np.asarray(nodes)
    return float(nodes[nodes.size // 2])


# ---------------------------------------------------------------------------
# R and R^{-1}

def _interior(panel, n):
    """Node indices whose Wronskian clusters (up to level n) stay on the panel."""
    m = panel.nodes.size
    if panel.periodic:
        return np.arange(m)
    margin = 4 * (2 if n > 1 else 1) * max(1, n - 1)
    return np.arange(margin, m - margin)


def r_map(F, centers=None):
    """l_k = W(f_1..f_k) along the lattice (c_k^{-1} times the diagonal extension).

    Returns (LSpaceElement, spreads). Non-periodic panels give lines on the
    interior nodes where every cluster fits.
    """
    panel = F.panel if isinstance(F, FSpaceElement) else F
    n = panel.n
    centers = _interior(panel, n) if centers is None else np.asarray(centers, dtype=int)
    lines, spreads = [], []
    for k in range(1, n + 1):
        v, sp = wronskian_line(panel.select(range(k)), centers)
        lines.append(v)
        spreads.append(sp)
    lines = np.array(lines)
    if np.any(~(lines > 0)):
        k, j = np.argwhere(~(lines > 0))[0]
        raise ValueError(
            f"frame is not in the positive frame space: W_{k + 1} = {lines[k, j]:.3e} "
            f"at x = {panel.nodes[centers[j]]:.4f}"
        )
    return LSpaceElement(lines, panel.nodes[centers], panel.smooth, panel.periodic), np.array(spreads)


def r_inverse(L, x0=None, bound=DEFAULT_BOUND):
    """Frame with the given successive Wronskians, integrals anchored at ``x0``.

    A family with an evaluation window is reconstructed on the window only and
    the frame is zero outside it: lattice tails far below the peak carry only
    rounding noise, which must not enter the ratios l_{k-1} l_{k+1} / l_k^2.
    """
    x0 = center_anchor(L.nodes) if x0 is None else x0
    if L.window is None:
        panel = reconstruct(L.lines, L.nodes, x0, smooth=L.smooth, periodic=False)
    else:
        mask = L.window
        sub = reconstruct(L.lines[:, mask], L.nodes[mask], x0, smooth=L.smooth)
        values = np.zeros_like(L.lines)
        values[:, mask] = sub.values
        panel = GridPanel(L.nodes, values, smooth=L.smooth, periodic=L.periodic)
    F = FSpaceElement(panel, bound)
    if not np.all(np.isfinite(panel.values)) or not F.bounded:
        raise ValueError("reconstructed frame is unbounded; evolution is not defined")
    return F


# ---------------------------------------------------------------------------
# pairing

def ordered_pairing(F, G, k, dx):
    """sum over ordered lattice tuples of (f_1^..^f_k)(z) (g_1^..^g_k)(z) dx^k."""
    return _backend.ordered_minor_sum(np.asarray(F)[:k], np.asarray(G)[:k]) * dx**k


def pairing(L, Lp, x0=None):
    """beta_k = sum over ordered z of the flag determinants of R^{-1} L and R^{-1} L'."""
    if L.n > MAX_LEVEL or Lp.n != L.n:
        raise ValueError(f"pairing needs two families of equal size <= {MAX_LEVEL}")
    if not np.allclose(L.nodes, Lp.nodes):
        raise ValueError("line families must share their nodes")
    F, G = r_inverse(L, x0).panel.values, r_inverse(Lp, x0).panel.values
    dx = float(L.nodes[1] - L.nodes[0])
    return PairingResult(tuple(ordered_pairing(F, G, k, dx) for k in range(1, L.n + 1)))


# ---------------------------------------------------------------------------
# canonical frames of the propagator

def _dd_rows(vals, nodes):
    """Rows i -> (i)! * v[nodes_0..nodes_i] for a (n, m) block of samples at cluster nodes."""
    out = _backend.newton_rows(vals.T[None], nodes[None])[0].T
    return out * np.array([factorial(i) for i in range(len(nodes))])[:, None]


def source_frames(source, x, n):
    """Frames f_i(y) = (i-1)! u[x_1..x_i; y] for each rung of the x-ladder.

    Returns (list of (n, nx) arrays, rung weights). Each frame's successive
    Wronskians are the rung values of tau_k(x, .).
    """
    grid = source.grid
    xi = np.full(n, int(grid.index_of(x)))
    rungs, w = _lattice_ladder(xi, source.smooth)
    frames = []
    for r in rungs:
        cols = source.columns(r) / grid.dx  # (nx, n): u(x_r, .)
        frames.append(_dd_rows(cols.T, r * grid.dx))
    return frames, w


def target_frames(source, y, n):
    """Frames g_j(z) = (j-1)! u[z; y_1..y_j] for each rung of the y-ladder (rows)."""
    grid = source.grid
    yi = np.full(n, int(grid.index_of(y)))
    rungs, w = _lattice_ladder(yi, source.smooth)
    frames = []
    for r in rungs:
        rows = source.rows(r) / grid.dx  # (n, nx): u(., y_r)
        frames.append(_dd_rows(rows, r * grid.dx))
    return frames, w


def tau_lines(source, x, n, vary="y"):
    """tau_k(x, .) for k = 1..n on every node (or tau_k(., x) with vary="x")."""
    idx = np.arange(source.grid.num_space)
    return np.array([diagonal_line(source, k, x, idx, vary)[0] / c_const(k) ** 2
                     for k in range(1, n + 1)])


# ---------------------------------------------------------------------------
# evolution and the conjugacy checks

def evolve_M_st(F, grid, noise, s, t):
    """Evolve every f_i by the SHE from s to t (shifted noise): a new frame."""
    if not F.bounded:
        raise ValueError("frame exceeds the boundedness threshold")
    k0, k1 = grid.step_of(s), grid.step_of(t)
    if not k0 < k1:
        raise ValueError(f"need s < t, got s={s}, t={t}")
    if F.panel.nodes.size != grid.num_space:
        raise ValueError("frame must be sampled on the full lattice")
    view = noise.shifted(k0 - noise.origin_step) if k0 > noise.origin_step else noise
    values = apply_steps(grid, view, F.panel.values.T, k0, k1).T
    return FSpaceElement(GridPanel(grid.nodes, values, smooth=noise.is_zero, periodic=True), F.bound)


def probe_window(grid, x, t, width=2.0):
    """Mask of nodes with |y - x| <= width * sqrt(t) (kernel tails are excluded).

    At 3 sqrt(t) the rough ladder already produces non-positive W_2 values on
    128-node grids, so the default stays at two.
    """
    return np.abs(grid.nodes - x) <= width * np.sqrt(t)


def conjugate_evolution_check(grid, noise, s, t, x, n, window=2.0):
    """max relative gap between R M_{s,t} R^{-1} tau_s(x, .) and tau_t(x, .) on the probe window."""
    if not 1 <= n <= MAX_LEVEL:
        raise ValueError(f"need 1 <= n <= {MAX_LEVEL}")
    k_s = grid.step_of(s)
    if k_s <= 0:
        raise ValueError("need 0 < s")
    L_s = LSpaceElement.from_lattice(tau_lines(LatticeSource(grid, noise, 0.0, s), x, n),
                                     grid.nodes, noise.is_zero)
    F = r_inverse(L_s, center_anchor(grid.nodes))
    Ft = evolve_M_st(F, grid, noise, s, t)
    mask = probe_window(grid, x, t, window)
    L_t, _ = r_map(Ft, np.flatnonzero(mask))
    direct = tau_lines(LatticeSource(grid, noise, 0.0, t), x, n)[:, mask]
    return float(np.max(np.abs(L_t.lines - direct) / np.abs(direct)))


def tau_flow_check(grid, noise, s, t, x, y, n, route="exact"):
    """Per-level relative residuals of tau_k(t, x, y) = <tau(s, x, .), tau(s, t, ., y)>.

    ``route="exact"`` pairs the canonical propagator frames rung by rung
    (Cauchy-Binet); ``route="reconstruct"`` pairs R^{-1} of the two line families.
    """
    if not 1 <= n <= MAX_LEVEL:
        raise ValueError(f"need 1 <= n <= {MAX_LEVEL}")
    first = LatticeSource(grid, noise, 0.0, s)
    second = LatticeSource(grid, noise, s, t)
    full = LatticeSource(grid, noise, 0.0, t)
    yi = np.array([int(grid.index_of(y))])
    dx = grid.dx
    out = []
    if route == "exact":
        for k in range(1, n + 1):
            fr, wx = source_frames(first, x, k)
            gr, wy = target_frames(second, y, k)
            beta = sum(wx[a] * wy[b] * ordered_pairing(fr[a], gr[b], k, dx)
                       for a in range(len(fr)) for b in range(len(gr)))
            direct = diagonal_line(full, k, x, yi)[0][0] / c_const(k) ** 2
            out.append(abs(beta - direct) / abs(direct))
        return out
    if route != "reconstruct":
        raise ValueError(f"unknown route {route!r}")
    L = LSpaceElement.from_lattice(tau_lines(first, x, n), grid.nodes, noise.is_zero)
    Lp = LSpaceElement.from_lattice(tau_lines(second, y, n, vary="x"), grid.nodes, noise.is_zero)
    betas = pairing(L, Lp).betas
    for k in range(1, n + 1):
        direct = diagonal_line(full, k, x, yi)[0][0] / c_const(k) ** 2
        out.append(abs(betas[k - 1] - direct) / abs(direct))
    return out


def general_initial(L, grid, noise, t, route="conjugate", targets=None):
    """Evolve a line family from time 0 to t.

    ``route="conjugate"``: R M_t R^{-1}(L). ``route="pairing"``:
    l_k(y) = sum over ordered z of (f~_1^..^f~_k)(z) times the flag of the
    canonical target frames of tau_t(., y), extrapolated over the y-ladder.
    Returns the evolved lines at node indices ``targets`` (default: all).
    """
    if L.nodes.size != grid.num_space:
        raise ValueError("line family must be sampled on the full lattice")
    targets = np.arange(grid.num_space) if targets is None else np.asarray(targets, dtype=int)
    F = r_inverse(L, center_anchor(grid.nodes))
    if route == "conjugate":
        Ft = evolve_M_st(F, grid, noise, 0.0, t)
        return r_map(Ft, targets)[0].lines
    if route != "pairing":
        raise ValueError(f"unknown route {route!r}")
    source = LatticeSource(grid, noise, 0.0, t)
    out = np.empty((L.n, targets.size))
    for c, j in enumerate(targets):
        for k in range(1, L.n + 1):
            gr, wy = target_frames(source, grid.nodes[j], k)
            out[k - 1, c] = sum(w * ordered_pairing(F.panel.values, g, k, grid.dx)
                                for w, g in zip(wy, gr))
    return out
