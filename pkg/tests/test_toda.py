import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from toda_she import toda
from toda_she.lattice import SpaceTimeGrid, c_const, heat_kernel, sample_noise, zero_noise

HEAT = toda.heat_stack(1.0, 4)


def test_stack_levels():
    assert np.array_equal(HEAT.tau(0, [0.1, 0.2], [0.3]), np.ones((2, 1)))
    assert HEAT.tau(2, [0.1], [0.4])[0, 0] == pytest.approx(
        heat_kernel(1.0, 0.3) ** 2 / c_const(2), rel=1e-15)
    with pytest.raises(ValueError):
        HEAT.tau(5, [0.0], [0.0])


def test_degenerate_rectangle():
    lhs, rhs = toda.integrated_toda_sides(HEAT, 2, 0.3, 0.3, -0.5, 0.5, 64)
    assert abs(lhs) <= 1e-14 and abs(rhs) <= 1e-14
    assert toda.integrated_toda_residual(HEAT, 2, 0.3, 0.3, -0.5, 0.5, 64) <= 1e-14


@settings(max_examples=30, deadline=None)
@given(st.integers(1, 3), st.floats(-1, 1), st.floats(-1, 1), st.floats(-1, 1), st.floats(-1, 1),
       st.sampled_from([0.5, 1.0, 2.0]))
def test_heat_stack_closed_form(n, a, b, c, d, t):
    stack = toda.heat_stack(t, 4)
    lhs, rhs = toda.integrated_toda_sides(stack, n, a, b, c, d, 64)
    assert lhs == pytest.approx(n * (a - b) * (c - d) / t, abs=1e-8)
    assert abs(lhs - rhs) <= 1e-6


def test_additivity_in_x():
    a, m, b, c, d = -0.8, 0.1, 0.9, -0.4, 0.6
    r_ab = np.subtract(*toda.integrated_toda_sides(HEAT, 2, a, b, c, d, 128))
    r_am = np.subtract(*toda.integrated_toda_sides(HEAT, 2, a, m, c, d, 64))
    r_mb = np.subtract(*toda.integrated_toda_sides(HEAT, 2, m, b, c, d, 64))
    assert abs(r_ab - (r_am + r_mb)) <= 1e-10


def test_cross_ratio_antisymmetry():
    lhs, rhs = toda.integrated_toda_sides(HEAT, 1, -0.3, 0.7, 0.1, 0.5, 64)
    lhs_s, rhs_s = toda.integrated_toda_sides(HEAT, 1, 0.7, -0.3, 0.1, 0.5, 64)
    assert lhs_s == -lhs
    assert abs(rhs_s + rhs) <= 1e-14


def test_level_range_is_checked():
    with pytest.raises(ValueError):
        toda.integrated_toda_sides(HEAT, 4, 0, 1, 0, 1, 8)


def test_bilinear_form_is_second_order():
    res = [toda.toda_bilinear_residual_smooth(HEAT, 1, 0.2, -0.1, h) for h in (0.04, 0.02, 0.01)]
    orders = np.log2(np.array(res[:-1]) / np.array(res[1:]))
    assert np.allclose(orders, 2.0, atol=0.1)


def test_constant_stack_is_not_a_solution():
    stack = toda.constant_stack(3)
    assert toda.toda_bilinear_residual_smooth(stack, 1, 0.0, 0.0, 0.01) == pytest.approx(1.0)


def test_bilinear_and_log_forms_agree():
    h = 2e-4
    x, y = 0.3, -0.2
    bil = toda.toda_bilinear_residual_smooth(HEAT, 1, x, y, h)
    log = toda.toda_log_residual_smooth(HEAT, 1, x, y, h)
    tau1 = HEAT.tau(1, [x], [y])[0, 0]
    assert abs(bil - tau1**2 * log) <= 1e-8


def test_she_stack_requires_lattice_nodes():
    g = SpaceTimeGrid(2.0, 64, 0.125, 128)
    stack = toda.she_stack(g, sample_noise(g, 0), g.horizon, 2)
    with pytest.raises(ValueError):
        stack.tau(1, [g.nodes[3] + g.dx / 3], [g.nodes[5]])


def test_she_stack_without_noise_matches_heat_stack():
    g = SpaceTimeGrid(2.0, 128, 0.0625, 56)
    stack = toda.she_stack(g, zero_noise(g), g.horizon, 3)
    heat = toda.heat_stack(g.horizon, 3)
    xs, ys = g.nodes[[60, 64]], g.nodes[[62, 70]]
    for n in (1, 2):
        assert np.allclose(stack.tau(n, xs, ys), heat.tau(n, xs, ys), rtol=1e-4)


def test_she_rectangle_is_snapped_to_nodes():
    g = SpaceTimeGrid(2.0, 64, 0.125, 128)
    a, b, c, d, nq = toda.she_toda_rectangle(g, (-0.25, -0.3), 0.5)
    for v in (a, b, c, d):
        assert np.min(np.abs(g.nodes - v)) <= 1e-12
    assert b - a == pytest.approx(2 * nq * g.dx)


@pytest.mark.slow
def test_she_toda_rms_decreases_under_refinement():
    base = SpaceTimeGrid(2.0, 32, 0.0625, 56)
    rms = [toda.she_toda_rms(g, 40, 0)[0]
           for g in (base, SpaceTimeGrid(2.0, 64, 0.0625, 112), SpaceTimeGrid(2.0, 128, 0.0625, 224))]
    assert all(b < a for a, b in zip(rms, rms[1:]))
