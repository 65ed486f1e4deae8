import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from toda_she import multilayer as ml
from toda_she import she
from toda_she.lattice import (
    SpaceTimeGrid,
    c_const,
    heat_kernel,
    mesh_family,
    norm_constants,
    sample_noise,
    vandermonde,
    zero_noise,
)

GRID = SpaceTimeGrid(2.0, 64, 0.125, 128)


def test_km_determinant_examples():
    assert ml.km_determinant(0.5, [0.3], [-0.1]) == pytest.approx(heat_kernel(0.5, 0.4), rel=1e-15)
    assert abs(ml.km_determinant(1.0, [0.2, 0.2], [0.0, 1.0])) <= 1e-14
    want = heat_kernel(1.0, 0.0) ** 2 - heat_kernel(1.0, 1.0) ** 2
    got = ml.km_determinant(1.0, [1.0, 0.0], [1.0, 0.0])
    assert got == pytest.approx(want, rel=1e-14) and got > 0


def test_km_determinant_swap_changes_sign():
    x, y = [0.7, -0.2, 0.1], [0.0, 0.4, -0.5]
    assert ml.km_determinant(0.3, x[::-1], y) == pytest.approx(-ml.km_determinant(0.3, x, y), rel=1e-13)


def test_dyson_kernel_examples():
    assert ml.dyson_kernel(0.5, [0.3], [-0.1]) == pytest.approx(heat_kernel(0.5, 0.4), rel=1e-15)
    x, y = [0.6, -0.3], [0.1, 0.5]
    perm = [1, 0]
    assert ml.dyson_kernel(0.4, np.take(x, perm), np.take(y, perm)) == pytest.approx(
        ml.dyson_kernel(0.4, x, y), rel=1e-13)
    with pytest.raises(ValueError):
        ml.dyson_kernel(0.4, [0.2, 0.2], y)


def test_dyson_mass():
    g = SpaceTimeGrid(4.0, 256, 1.0, 1600)
    for t in (0.25, 1.0):
        assert ml.dyson_mass(t, [0.5, -0.5], g) == pytest.approx(1.0, abs=2e-2)


def test_weyl_point_multiplicities():
    p = ml.WeylPoint.from_tuple([0.1, 0.3, 0.1])
    assert p.coords == (0.3, 0.1, 0.1) and p.multiplicities == (1, 2)
    assert not p.distinct and ml.WeylPoint.from_tuple([1.0, 2.0]).distinct


def test_m1_is_the_kernel():
    noise = sample_noise(GRID, 1)
    src = ml.LatticeSource(GRID, noise, 0.0, GRID.horizon)
    prop = she.propagator(GRID, noise, 0.0, GRID.horizon)
    xi, yi = GRID.index_of(0.2), GRID.index_of(-0.5)
    assert ml.m_n(src, [0.2], [-0.5]).value == pytest.approx(prop.u(xi, yi)[0, 0], rel=1e-13)
    assert ml.tau_n(src, 1, 0.2, -0.5) == pytest.approx(prop.u(xi, yi)[0, 0], rel=1e-13)
    assert ml.z_n(src, 1, 0.2, -0.5) == pytest.approx(prop.u(xi, yi)[0, 0], rel=1e-13)
    assert ml.tau_n(src, 0, 0.2, -0.5) == 1.0


def test_lazy_columns_match_full_propagator():
    noise = sample_noise(GRID, 6)
    lazy = ml.LatticeSource(GRID, noise, GRID.horizon / 4, GRID.horizon)
    prop = she.propagator(GRID, noise.shifted(32), GRID.horizon / 4, GRID.horizon)
    full = ml.LatticeSource.from_propagator(GRID, noise, prop)
    cols = [3, 40, 63]
    assert np.allclose(lazy.columns(cols), full.columns(cols), rtol=1e-12, atol=0)
    assert np.allclose(lazy.rows(cols), full.rows(cols), rtol=1e-11, atol=1e-300)


@pytest.mark.parametrize("n", [1, 2, 3])
def test_noiseless_diagonal_closed_form(n):
    src = ml.HeatSource(1.0)
    want = ml.noiseless_diagonal(n, 1.0, 0.4, -0.3)
    assert want == pytest.approx(norm_constants(n, 1.0)[1] * heat_kernel(1.0, 0.7) ** n, rel=1e-15)
    got = ml.m_n(src, [0.4] * n, [-0.3] * n)
    assert got.value == pytest.approx(want, rel=1e-4)
    assert ml.tau_n(src, n, 0.4, -0.3) == pytest.approx(heat_kernel(1.0, 0.7) ** n / c_const(n), rel=1e-4)


def test_z_and_tau_normalisations_agree():
    src = ml.HeatSource(0.7)
    for n in (1, 2, 3):
        tau = ml.tau_n(src, n, 0.1, 0.2)
        z = ml.z_n(src, n, 0.1, 0.2)
        assert tau == pytest.approx(z * 0.7 ** (-n * (n - 1) / 2) / c_const(n), rel=1e-12)
    assert ml.z_n(ml.HeatSource(1.0), 2, 0.3, -0.2) == pytest.approx(heat_kernel(1.0, 0.5) ** 2, rel=1e-4)


def test_distinct_points_use_the_plain_ratio():
    src = ml.HeatSource(0.5)
    x, y = [0.1, -0.4], [0.3, 0.0]
    want = ml.km_determinant(0.5, x, y) / (vandermonde(x) * vandermonde(y))
    assert ml.m_n(src, x, y).value == pytest.approx(want, rel=1e-13)


@settings(max_examples=20, deadline=None)
@given(st.permutations(range(3)), st.permutations(range(3)), st.integers(0, 1000))
def test_m_n_is_permutation_invariant(px, py, seed):
    src = ml.LatticeSource(GRID, sample_noise(GRID, seed), 0.0, GRID.horizon)
    x = np.array([-0.3, 0.1, 0.5])
    y = np.array([0.0, 0.2, -0.6])
    base = ml.m_n(src, x, y).value
    assert ml.m_n(src, x[list(px)], y[list(py)]).value == base


def test_coincident_points_on_the_lattice_are_positive():
    src = ml.LatticeSource(GRID, sample_noise(GRID, 3), 0.0, GRID.horizon)
    fields = [ml.m_n(src, [x] * 2, [y, y + 0.2]) for x in (-0.2, 0.1) for y in (-0.1, 0.3)]
    assert ml.positivity_violations(fields) == 0.0
    assert all(f.spread >= 0 for f in fields)


def test_diagonal_line_matches_pointwise_m_n():
    src = ml.LatticeSource(GRID, sample_noise(GRID, 4), 0.0, GRID.horizon)
    idx = np.array([20, 30, 34])
    vals, _ = ml.diagonal_line(src, 2, 0.05, idx)
    for v, j in zip(vals, idx):
        assert v == pytest.approx(ml.m_n(src, [0.05, 0.05], [GRID.nodes[j]] * 2).value, rel=1e-10)
    rows, _ = ml.diagonal_line(src, 2, GRID.nodes[30], np.array([GRID.index_of(0.05)]), vary="x")
    assert rows[0] == pytest.approx(vals[1], rel=1e-8)


def test_lattice_diagonal_normalisation():
    g = SpaceTimeGrid(8.0, 512, 1.0, 800)
    src = ml.LatticeSource(g, zero_noise(g), 0.0, 1.0)
    a, b = g.nodes[g.index_of(0.3)], g.nodes[g.index_of(-0.2)]
    for n in (1, 2, 3):
        got = ml.m_n(src, [a] * n, [b] * n).value
        assert got == pytest.approx(ml.noiseless_diagonal(n, 1.0, a, b), rel=1e-4)


def test_cauchy_binet_reduces_to_flow_at_level_one():
    noise = sample_noise(GRID, 8)
    r = ml.cauchy_binet_flow_check(GRID, noise, GRID.horizon / 2, GRID.horizon, [0.1], [-0.4])
    assert r.determinant_residual <= 1e-12


@settings(max_examples=8, deadline=None)
@given(st.integers(0, 2**32 - 1), st.sampled_from([2, 3]))
def test_cauchy_binet_any_seed(seed, n):
    x = [-0.2, 0.0, 0.25][:n]
    y = [-0.1, 0.15, 0.3][:n]
    r = ml.cauchy_binet_flow_check(GRID, sample_noise(GRID, seed), GRID.horizon / 2, GRID.horizon, x, y)
    assert r.determinant_residual <= 1e-10


def test_cauchy_binet_quadrature_form_converges():
    res = []
    for nx in (8, 12, 16, 24):
        g = SpaceTimeGrid(4.0, nx, 0.5, 200)
        r = ml.cauchy_binet_flow_check(g, zero_noise(g), 0.25, 0.5, [-1.5, 1.5], [-1.0, 1.2])
        res.append(r.quadrature_residual)
    assert all(b < a for a, b in zip(res, res[1:]))
    assert res[-2] <= 1e-3


def test_cauchy_binet_argument_checks():
    with pytest.raises(ValueError):
        ml.cauchy_binet_flow_check(GRID, zero_noise(GRID), 0.0, GRID.horizon, [0.1], [0.2])
    with pytest.raises(ValueError):
        ml.cauchy_binet_flow_check(GRID, zero_noise(GRID), GRID.horizon / 2, GRID.horizon,
                                   [0, 0.1, 0.2, 0.3], [0, 0.1, 0.2, 0.3])


def test_mild_equation_level_one_is_exact():
    r, _ = ml.mn_evolution_residual(GRID, sample_noise(GRID, 2), GRID.horizon, [0.1], [0.3])
    assert r <= 1e-12


def test_mild_equation_level_two_without_noise():
    g = SpaceTimeGrid(2.0, 128, 0.0625, 56)
    r, m2 = ml.mn_evolution_residual(g, zero_noise(g), g.horizon, [-0.3, 0.3], [-0.2, 0.4])
    x = g.nodes[g.index_of([-0.3, 0.3])]
    y = g.nodes[g.index_of([-0.2, 0.4])]
    oracle = ml.km_determinant(g.horizon, x, y, g.half_width) / (vandermonde(x) * vandermonde(y))
    assert r <= 1e-12
    assert abs(m2 - oracle) <= 1e-6


def test_mild_equation_rejects_coincident_points():
    with pytest.raises(ValueError):
        ml.mn_evolution_residual(GRID, zero_noise(GRID), GRID.horizon, [0.1, 0.1], [0.0, 0.3])


@pytest.mark.slow
def test_mild_equation_level_two_parabolic_refinement():
    base = SpaceTimeGrid(2.0, 128, 0.0625, 56)
    grids = mesh_family(base, (0.25, 0.5, 1), (0.25, 1, 4))
    rms = [ml.mn_residual_rms(g, 200, 0, [-0.3, 0.3], [-0.2, 0.4])[0] for g in grids]
    assert all(b < a for a, b in zip(rms, rms[1:]))


@pytest.mark.slow
@pytest.mark.xfail(reason="with dt/dx fixed the stochastic remainder does not shrink", strict=False)
def test_mild_equation_level_two_joint_doubling():
    base = SpaceTimeGrid(2.0, 128, 0.0625, 56)
    grids = mesh_family(base, (0.25, 0.5, 1, 2))
    rms = [ml.mn_residual_rms(g, 200, 0, [-0.3, 0.3], [-0.2, 0.4])[0] for g in grids]
    assert all(b < a for a, b in zip(rms, rms[1:]))
