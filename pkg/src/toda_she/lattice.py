"""Space-time lattice, seeded white noise, heat kernels and normalisation constants.

The spatial domain is the torus [-L, L) with cell-centred nodes
``z_j = -L + (j + 1/2) dx``. Heat kernels are wrapped by summing periodic
images. Noise increments live on cells and have variance ``dt * dx``.
"""
from dataclasses import dataclass, field
from functools import cached_property
from math import factorial, prod

import numpy as np

# admissible noise-to-mass ratio sqrt(dt*dx)/dx; 1e-12 slack for float rounding
STABILITY_LIMIT = 0.2
_STABILITY_SLACK = 1e-12


def derive_seed(seed, replica=0):
    """Counter-style derived seed for replica ``replica`` of base ``seed``.

    Independent of the order in which replicas are requested.
    """
    ss = np.random.SeedSequence([int(seed) & 0xFFFFFFFFFFFFFFFF, int(replica)])
    lo, hi = ss.generate_state(2, dtype=np.uint32)
    return int(lo) | (int(hi) << 32)


def make_rng(seed, replica=0):
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([int(seed), int(replica)])))


@dataclass(frozen=True)
class SpaceTimeGrid:
    """Discretisation of [0, T] x [-L, L] plus the base RNG seed."""

    half_width: float
    num_space: int
    horizon: float
    num_steps: int
    seed: int = 0

    def __post_init__(self):
        if self.half_width <= 0 or self.horizon <= 0:
            raise ValueError("half_width and horizon must be positive")
        if self.num_space < 8:
            raise ValueError(f"num_space must be >= 8, got {self.num_space}")
        if self.num_steps < 2:
            raise ValueError(f"num_steps must be >= 2, got {self.num_steps}")
        if self.stability_ratio > STABILITY_LIMIT + _STABILITY_SLACK:
            raise ValueError(
                f"stability ratio sqrt(dt*dx)/dx = {self.stability_ratio:.4f} exceeds "
                f"{STABILITY_LIMIT}; increase num_steps"
            )

    @property
    def dx(self):
        return 2.0 * self.half_width / self.num_space

    @property
    def dt(self):
        return self.horizon / self.num_steps

    @property
    def stability_ratio(self):
        return float(np.sqrt(self.dt * self.dx) / self.dx)

    @property
    def resolution(self):
        """dt / dx**2; closed-form heat-kernel agreement needs roughly >= 1."""
        return self.dt / self.dx**2

    @cached_property
    def nodes(self):
        return -self.half_width + (np.arange(self.num_space) + 0.5) * self.dx

    def index_of(self, x):
        """Index of the cell containing ``x`` (array-friendly)."""
        x = np.asarray(x, dtype=float)
        if np.any(x < -self.half_width) or np.any(x > self.half_width):
            raise ValueError(f"point(s) {x} outside [-{self.half_width}, {self.half_width}]")
        j = np.floor((x + self.half_width) / self.dx).astype(int)
        return np.clip(j, 0, self.num_space - 1)

    def step_of(self, t):
        """Step index of time ``t``; ``t`` must be a multiple of dt."""
        k = int(round(t / self.dt))
        if k < 0 or k > self.num_steps or abs(k * self.dt - t) > 1e-9 * max(1.0, abs(t)):
            raise ValueError(f"time {t} is not aligned to the step grid (dt = {self.dt})")
        return k

    def refined(self, factor=2):
        """Grid with nx and nt both multiplied by ``factor``."""
        return SpaceTimeGrid(self.half_width, self.num_space * factor, self.horizon,
                             self.num_steps * factor, self.seed)


@dataclass(frozen=True)
class NoiseField:
    """Realised white-noise increments ``increments[k, j]`` on the lattice.

    ``origin_step`` records the absolute step of row 0, so a shifted view
    holds only the increments at and after its origin.
    """

    grid: SpaceTimeGrid
    increments: np.ndarray = field(repr=False)
    seed: int
    origin_step: int = 0

    def __post_init__(self):
        self.increments.setflags(write=False)

    @property
    def num_steps(self):
        return self.increments.shape[0]

    @property
    def is_zero(self):
        return not np.any(self.increments)

    def shifted(self, steps):
        """View of the noise started ``steps`` steps later (the shifted noise)."""
        if not 0 <= steps <= self.num_steps:
            raise ValueError(f"shift {steps} outside [0, {self.num_steps}]")
        return NoiseField(self.grid, self.increments[steps:], self.seed, self.origin_step + steps)

    def negative_factor_count(self):
        """Number of cells where the multiplicative factor dx + dW is negative."""
        return int(np.count_nonzero(self.increments + self.grid.dx < 0))


def sample_noise(grid, seed=None, replica=0):
    """i.i.d. N(0, dt*dx) increments, fully determined by (grid, seed, replica)."""
    seed = grid.seed if seed is None else seed
    rng = make_rng(seed, replica)
    inc = rng.standard_normal((grid.num_steps, grid.num_space)) * np.sqrt(grid.dt * grid.dx)
    return NoiseField(grid, inc, derive_seed(seed, replica))


def zero_noise(grid):
    return NoiseField(grid, np.zeros((grid.num_steps, grid.num_space)), seed=-1)


def heat_kernel(t, x):
    """Gaussian transition density p_t(x) = (2 pi t)^(-1/2) exp(-x^2 / 2t)."""
    if np.any(np.asarray(t) <= 0):
        raise ValueError(f"heat kernel needs t > 0, got {t}")
    x = np.asarray(x, dtype=float)
    return np.exp(-(x * x) / (2.0 * t)) / np.sqrt(2.0 * np.pi * t)


def wrapped_heat_kernel(t, x, half_width, wrap_terms=2):
    """Heat kernel on the torus [-L, L): sum of images m in [-wrap_terms, wrap_terms]."""
    x = np.asarray(x, dtype=float)
    shifts = 2.0 * half_width * np.arange(-wrap_terms, wrap_terms + 1)
    return heat_kernel(t, x[..., None] + shifts).sum(axis=-1)


def _circulant_offsets(nx):
    d = np.arange(nx)
    return (d[:, None] - d[None, :]) % nx


def kernel_matrix(grid, t, wrap_terms=2):
    """Wrapped kernel values p~_t(z_i - z_j) as an nx x nx circulant (no dx factor)."""
    nx = grid.num_space
    signed = (np.arange(nx) + nx // 2) % nx - nx // 2
    col = wrapped_heat_kernel(t, signed * grid.dx, grid.half_width, wrap_terms)
    return col[_circulant_offsets(nx)]


def semigroup_matrix(grid, t, wrap_terms=2):
    """Discrete heat semigroup p~_t * dx with rows renormalised to unit mass.

    Rows of the raw Riemann sum deviate from 1 by about exp(-2 pi^2 t / dx^2);
    the renormalisation removes that so the noiseless scheme conserves mass.
    """
    m = kernel_matrix(grid, t, wrap_terms) * grid.dx
    return m / m[0].sum()


def vandermonde(x):
    """prod_{i<j} (x_i - x_j); 1 for a single coordinate."""
    x = np.asarray(x, dtype=float)
    n = x.shape[-1]
    # evaluate on the descending sort so permuted inputs give bit-identical magnitudes
    inversions = np.zeros(x.shape[:-1], dtype=int)
    for i in range(n):
        for j in range(i + 1, n):
            inversions = inversions + (x[..., i] < x[..., j])
    xs = -np.sort(-x, axis=-1)
    out = np.ones(x.shape[:-1])
    for i in range(n):
        for j in range(i + 1, n):
            out = out * (xs[..., i] - xs[..., j])
    out = np.where(inversions % 2 == 1, -out, out)
    return out if out.shape else float(out)


def vandermonde_increasing(x):
    """prod_{i<j} (x_j - x_i), the convention used by divided-difference tables."""
    x = np.asarray(x, dtype=float)
    n = x.shape[-1]
    return (-1) ** (n * (n - 1) // 2) * vandermonde(x)


def norm_constants(n, t):
    """(c_n, c_{n,t}, A_n) with c_n = 1/prod_{i<n} i!, c_{n,t} = c_n t^{-n(n-1)/2}, A_n = 1/(n-1)!."""
    if n < 1:
        raise ValueError(f"norm_constants needs n >= 1, got {n}")
    if t <= 0:
        raise ValueError(f"norm_constants needs t > 0, got {t}")
    c_n = 1.0 / prod(factorial(i) for i in range(1, n))
    return c_n, c_n * t ** (-n * (n - 1) / 2), 1.0 / factorial(n - 1)


def c_const(n):
    """c_n alone, with the convention c_0 = 1."""
    if n == 0:
        return 1.0
    return norm_constants(n, 1.0)[0]


def mesh_family(grid, factors, time_factors=None):
    """Grids with nx scaled by ``factors`` and nt by ``time_factors`` (default: the same,
    which keeps dt/dx fixed; squared factors keep dt/dx^2 fixed instead)."""
    time_factors = factors if time_factors is None else time_factors
    out = []
    for f, ft in zip(factors, time_factors):
        nx, nt = grid.num_space * f, grid.num_steps * ft
        if abs(nx - round(nx)) > 1e-9 or abs(nt - round(nt)) > 1e-9:
            raise ValueError(f"factor {f} does not give integer mesh sizes")
        out.append(SpaceTimeGrid(grid.half_width, int(round(nx)), grid.horizon, int(round(nt)), grid.seed))
    return out


def empirical_orders(residuals, ratio=2.0):
    """log_ratio(r_i / r_{i+1}) for successive refinements."""
    r = np.asarray(residuals, dtype=float)
    return list(np.log(r[:-1] / r[1:]) / np.log(ratio))
