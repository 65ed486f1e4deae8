"""Mild-form solver for the multiplicative stochastic heat equation.

One step maps a field ``v`` to ``K (dx + dW_k) v`` where ``K`` is the
(mass-normalised) wrapped heat kernel over one time step and the noise factor
uses the pre-step field. Products of step matrices are the discrete random
propagators ``u(s, t, z, y) = P[y, z] / dx``.
"""
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from .lattice import semigroup_matrix


@lru_cache(maxsize=16)
def _step_kernel(grid):
    k = semigroup_matrix(grid, grid.dt) / grid.dx
    k.setflags(write=False)
    return k


def _local_step(noise, k):
    local = k - noise.origin_step
    if local < 0:
        raise ValueError(
            f"step {k} precedes the noise origin {noise.origin_step}; "
            "shifted noise never exposes earlier increments"
        )
    if local >= noise.num_steps:
        raise ValueError(f"step {k} beyond the noise horizon")
    return local


@dataclass(frozen=True)
class FieldLine:
    values: np.ndarray
    time_stamp: float

    @property
    def negativity_fraction(self):
        return float(np.mean(self.values < 0))


@dataclass(frozen=True)
class SolutionPath:
    """Field values at every step; ``values[k]`` is the field at ``times[k]``."""

    times: np.ndarray
    values: np.ndarray = field(repr=False)

    def line(self, k):
        return FieldLine(self.values[k], float(self.times[k]))

    @property
    def final(self):
        return self.line(-1)


@dataclass(frozen=True)
class Propagator:
    start: float
    stop: float
    matrix: np.ndarray = field(repr=False)
    seed: int
    origin_step: int
    dx: float

    def u(self, x_idx, y_idx):
        """Discrete kernel u(s, t, z_x, y) for source indices ``x_idx`` and targets ``y_idx``."""
        return self.matrix[np.ix_(np.atleast_1d(y_idx), np.atleast_1d(x_idx))].T / self.dx

    def compose(self, earlier):
        """This propagator after ``earlier`` (which must end where this one starts)."""
        if abs(earlier.stop - self.start) > 1e-12:
            raise ValueError("propagators are not contiguous")
        return Propagator(earlier.start, self.stop, self.matrix @ earlier.matrix,
                          self.seed, earlier.origin_step, self.dx)


def step_matrix(grid, noise, k):
    """A_k[i, j] = p~_dt(z_i - z_j) (dx + dW[k, j])."""
    if not 0 <= k < grid.num_steps:
        raise ValueError(f"step index {k} outside [0, {grid.num_steps})")
    factor = grid.dx + noise.increments[_local_step(noise, k)]
    return _step_kernel(grid) * factor[None, :]


def apply_steps(grid, noise, v, k0, k1):
    """Apply A_{k1-1} ... A_{k0} to ``v`` (a field or an nx x m block)."""
    kern = _step_kernel(grid)
    v = np.array(v, dtype=float, copy=True)
    for k in range(k0, k1):
        factor = grid.dx + noise.increments[_local_step(noise, k)]
        v = kern @ (factor[:, None] * v if v.ndim == 2 else factor * v)
    return v


def apply_steps_path(grid, noise, v, k0, k1):
    """As ``apply_steps`` but returns the field after every step (k1 - k0 + 1 rows)."""
    kern = _step_kernel(grid)
    out = np.empty((k1 - k0 + 1,) + np.shape(v))
    out[0] = v
    for i, k in enumerate(range(k0, k1)):
        factor = grid.dx + noise.increments[_local_step(noise, k)]
        prev = out[i]
        out[i + 1] = kern @ (factor[:, None] * prev if prev.ndim == 2 else factor * prev)
    return out


def propagator(grid, noise, s, t):
    """P = A_{k(t)-1} ... A_{k(s)}, accumulated by left multiplication."""
    if not s < t:
        raise ValueError(f"need s < t, got s={s}, t={t}")
    k0, k1 = grid.step_of(s), grid.step_of(t)
    kern = _step_kernel(grid)
    p = None
    for k in range(k0, k1):
        factor = grid.dx + noise.increments[_local_step(noise, k)]
        p = kern * factor[None, :] if p is None else kern @ (factor[:, None] * p)
    return Propagator(s, t, p, noise.seed, noise.origin_step, grid.dx)


def delta_field(grid, x):
    """Discrete delta at the cell containing ``x``: e_j / dx."""
    v = np.zeros(grid.num_space)
    v[grid.index_of(x)] = 1.0 / grid.dx
    return v


def solve_general(grid, noise, f0, s=0.0, t=None):
    """Solve from initial field ``f0`` at time ``s`` to ``t`` (default: horizon)."""
    values = f0.values if isinstance(f0, FieldLine) else np.asarray(f0, dtype=float)
    if not np.all(np.isfinite(values)):
        raise ValueError("initial field must be finite")
    t = grid.horizon if t is None else t
    k0, k1 = grid.step_of(s), grid.step_of(t)
    path = apply_steps_path(grid, noise, values, k0, k1)
    return SolutionPath(np.arange(k0, k1 + 1) * grid.dt, path)


def solve_delta(grid, noise, x, t=None):
    """u(t_k, x, .) for every step from delta initial data at ``x``."""
    return solve_general(grid, noise, delta_field(grid, x), 0.0, t)


def flow_check(grid, noise, s, t, x):
    """Relative residual of u(t,x,y) = sum_z u(s,x,z) u(s,t,z,y) dx, maximised over y."""
    if not s < t:
        raise ValueError(f"need s < t, got s={s}, t={t}")
    k_s, k_t = grid.step_of(s), grid.step_of(t)
    u0 = delta_field(grid, x)
    u_s = apply_steps(grid, noise, u0, 0, k_s)
    u_t = apply_steps(grid, noise, u_s, k_s, k_t)
    prop = propagator(grid, noise.shifted(k_s), s, t)
    # sum_z u(s,x,z) u(s,t,z,y) dx with u(s,t,z,y) = P[y,z]/dx
    via_flow = prop.matrix @ u_s
    return float(np.max(np.abs(u_t - via_flow)) / np.max(np.abs(u_t)))


def solve_replicas(grid, f0, replicas, seed, t=None):
    """Final fields of ``replicas`` independent solutions (columns), noise from derived seeds.

    All replicas advance together: one matrix product per step on an
    nx x replicas block whose columns carry their own noise factors.
    """
    from .lattice import sample_noise

    t = grid.horizon if t is None else t
    k1 = grid.step_of(t)
    f0 = np.asarray(f0, dtype=float)
    factors = np.stack([sample_noise(grid, seed, r).increments[:k1] for r in range(replicas)], axis=-1)
    kern = _step_kernel(grid)
    v = np.repeat(f0[:, None], replicas, axis=1)
    for k in range(k1):
        v = kern @ ((grid.dx + factors[k]) * v)
    return v


@dataclass(frozen=True)
class MomentResult:
    mean: np.ndarray = field(repr=False)
    stderr: np.ndarray = field(repr=False)
    exact: np.ndarray = field(repr=False)

    @property
    def z_scores(self):
        return (self.mean - self.exact) / self.stderr

    @property
    def max_abs_z(self):
        return float(np.max(np.abs(self.z_scores)))


def mean_moment(grid, x, replicas, seed, t=None):
    """Monte Carlo mean of u(t, x, .) against the wrapped heat kernel p~_t(x - .)."""
    from .lattice import wrapped_heat_kernel

    if replicas < 2:
        raise ValueError("need at least two replicas for a standard error")
    t = grid.horizon if t is None else t
    u = solve_replicas(grid, delta_field(grid, x), replicas, seed, t)
    x_node = grid.nodes[grid.index_of(x)]
    exact = wrapped_heat_kernel(t, x_node - grid.nodes, grid.half_width)
    return MomentResult(u.mean(axis=1), u.std(axis=1, ddof=1) / np.sqrt(replicas), exact)
