"""Integrated and differential two-dimensional Toda residuals on tau stacks."""
import numpy as np

from .lattice import c_const, heat_kernel, sample_noise
from .multilayer import LatticeSource, diagonal_line


class TodaStack:
    """Levels tau_0..tau_{N+1} on demand, with tau_0 = 1 and per-node caching.

    ``evaluator(n, xs, ys)`` returns the (len(xs), len(ys)) array of tau_n.
    """

    def __init__(self, top, evaluator, source):
        self.top = top
        self.source = source
        self._evaluator = evaluator
        self._cache = {}

    def tau(self, n, xs, ys):
        xs = np.atleast_1d(np.asarray(xs, dtype=float))
        ys = np.atleast_1d(np.asarray(ys, dtype=float))
        if n < 0 or n > self.top:
            raise ValueError(f"level {n} outside the stack 0..{self.top}")
        if n == 0:
            return np.ones((xs.size, ys.size))
        key = (n, xs.tobytes(), ys.tobytes())
        if key not in self._cache:
            self._cache[key] = np.asarray(self._evaluator(n, xs, ys), dtype=float)
        return self._cache[key]


def heat_stack(t, top):
    """Closed-form stack tau_n = c_n^{-1} t^{-n(n-1)/2} p_t(x - y)^n."""

    def ev(n, xs, ys):
        p = heat_kernel(t, xs[:, None] - ys[None, :])
        return p**n * t ** (-n * (n - 1) / 2) / c_const(n)

    return TodaStack(top, ev, "heat-kernel")


def constant_stack(top, value=1.0):
    return TodaStack(top, lambda n, xs, ys: np.full((xs.size, ys.size), value), "constant")


def she_stack(grid, noise, t, top):
    """Stack from the SHE propagator over [0, t]; points must be lattice nodes.

    Each (level, x) line is computed once for every target node and reused.
    """
    source = LatticeSource(grid, noise, 0.0, t)
    lines = {}
    all_y = np.arange(grid.num_space)

    def node_index(v):
        j = np.rint((v - grid.nodes[0]) / grid.dx).astype(int)
        if np.any(np.abs(grid.nodes[0] + j * grid.dx - v) > 1e-9 * grid.dx):
            raise ValueError("SHE stacks are evaluated at lattice nodes only")
        return j

    def ev(n, xs, ys):
        yi = node_index(ys) % grid.num_space
        out = np.empty((xs.size, ys.size))
        for r, xj in enumerate(node_index(xs)):
            key = (n, int(xj))
            if key not in lines:
                lines[key] = diagonal_line(source, n, grid.nodes[xj % grid.num_space], all_y)[0] / c_const(n) ** 2
            out[r] = lines[key][yi]
        return out

    return TodaStack(top, ev, "she-propagator")


def _check_positive(stack, n, xs, ys, values):
    bad = np.argwhere(~(values > 0))
    if bad.size:
        i, j = bad[0]
        raise ValueError(f"tau_{n} = {values[i, j]:.3e} is not positive at (x, y) = ({xs[i]}, {ys[j]})")


def integrated_toda_residual(stack, n, a, b, c, d, nq):
    """|log cross-ratio of tau_n - midpoint quadrature of tau_{n-1} tau_{n+1} / tau_n^2|."""
    return abs(np.subtract(*integrated_toda_sides(stack, n, a, b, c, d, nq)))


def integrated_toda_sides(stack, n, a, b, c, d, nq):
    """(LHS, RHS) of the integrated Toda identity over [a, b] x [c, d]."""
    if not 1 <= n < stack.top:
        raise ValueError(f"need 1 <= n <= {stack.top - 1}")
    corners_x, corners_y = np.array([a, b]), np.array([c, d])
    tc = stack.tau(n, corners_x, corners_y)
    _check_positive(stack, n, corners_x, corners_y, tc)
    lt = np.log(tc)
    # grouped so that exchanging a and b negates the value exactly
    lhs = (lt[0, 0] - lt[0, 1]) - (lt[1, 0] - lt[1, 1])
    hx, hy = (b - a) / nq, (d - c) / nq
    xs = a + (np.arange(nq) + 0.5) * hx
    ys = c + (np.arange(nq) + 0.5) * hy
    mid = stack.tau(n, xs, ys)
    _check_positive(stack, n, xs, ys, mid)
    integrand = stack.tau(n - 1, xs, ys) * stack.tau(n + 1, xs, ys) / mid**2
    rhs = float(np.sum(integrand)) * hx * hy
    return float(lhs), rhs


def _fd_derivatives(fn, x, y, h):
    f = fn(x, y)
    fx = (fn(x + h, y) - fn(x - h, y)) / (2 * h)
    fy = (fn(x, y + h) - fn(x, y - h)) / (2 * h)
    fxy = (fn(x + h, y + h) - fn(x + h, y - h) - fn(x - h, y + h) + fn(x - h, y - h)) / (4 * h * h)
    return f, fx, fy, fxy


def _point(stack, n):
    return lambda x, y: float(stack.tau(n, [x], [y])[0, 0])


def toda_bilinear_residual_smooth(stack, n, x, y, h):
    """|tau_n d_xy tau_n - d_x tau_n d_y tau_n - tau_{n-1} tau_{n+1}| by central differences."""
    f, fx, fy, fxy = _fd_derivatives(_point(stack, n), x, y, h)
    nb = _point(stack, n - 1)(x, y) * _point(stack, n + 1)(x, y)
    return abs(f * fxy - fx * fy - nb)


def toda_log_residual_smooth(stack, n, x, y, h):
    """|d_xy log tau_n - tau_{n-1} tau_{n+1} / tau_n^2| with central differences of log tau_n."""
    tn = _point(stack, n)
    _, _, _, lxy = _fd_derivatives(lambda u, v: np.log(tn(u, v)), x, y, h)
    return abs(lxy - _point(stack, n - 1)(x, y) * _point(stack, n + 1)(x, y) / tn(x, y) ** 2)


def she_toda_rectangle(grid, corner, width):
    """Rectangle snapped so corners and midpoint nodes (panels of 2 dx) are lattice nodes."""
    nq = max(1, int(round(width / (2 * grid.dx))))
    a = grid.nodes[grid.index_of(corner[0])]
    c = grid.nodes[grid.index_of(corner[1])]
    return a, a + 2 * nq * grid.dx, c, c + 2 * nq * grid.dx, nq


def she_toda_rms(grid, replicas, seed, n=1, corner=(-0.25, -0.3), width=0.5):
    """RMS over replicas of the integrated Toda residual for SHE stacks at level n."""
    a, b, c, d, nq = she_toda_rectangle(grid, corner, width)
    if b > grid.half_width or d > grid.half_width:
        raise ValueError("rectangle leaves the domain")
    res = []
    for r in range(replicas):
        stack = she_stack(grid, sample_noise(grid, seed, r), grid.horizon, n + 1)
        res.append(integrated_toda_residual(stack, n, a, b, c, d, nq))
    res = np.array(res)
    return float(np.sqrt(np.mean(res**2))), res
