import math

import numpy as np
import pytest
import sympy as sp
from hypothesis import given, settings
from hypothesis import strategies as st

from toda_she import wronskian as w
from toda_she.lattice import vandermonde_increasing

X = sp.symbols("x")


def sym_wronskian(exprs, a):
    """Classical Wronskian det[f_i^{(j)}] evaluated exactly at a."""
    n = len(exprs)
    m = sp.Matrix(n, n, lambda i, j: sp.diff(exprs[i], X, j))
    return float(m.det().subs(X, a))


def lam(expr):
    f = sp.lambdify(X, expr, "numpy")
    return lambda x: np.broadcast_to(f(x), np.shape(x)).astype(float)


def panel(*exprs):
    return w.CallablePanel([lam(e) for e in exprs])


# ---------------------------------------------------------------------------
# dd_ratio

def test_dd_ratio_monomials_against_brute_force():
    nodes = np.array([0.0, 1.0, 2.0])
    p = panel(sp.Integer(1), X, X**2)
    brute = np.linalg.det(p.evaluate(nodes)) / vandermonde_increasing(nodes)
    assert w.dd_ratio(p, nodes) == pytest.approx(brute, abs=1e-14)
    assert w.dd_ratio(p, nodes) == pytest.approx(1.0, abs=1e-14)


def test_dd_ratio_single_function():
    assert w.dd_ratio(panel(sp.cos(X)), [0.3]) == pytest.approx(math.cos(0.3), abs=1e-16)


def test_dd_ratio_repeated_function_vanishes():
    p = panel(sp.exp(X), sp.sin(X), sp.exp(X))
    assert abs(w.dd_ratio(p, [0.1, 0.4, 0.9])) <= 1e-12


def test_dd_ratio_rejects_repeated_nodes():
    with pytest.raises(ValueError):
        w.dd_ratio(panel(sp.Integer(1), X), [0.5, 0.5])


@settings(max_examples=40, deadline=None)
@given(st.lists(st.floats(-2, 2), min_size=3, max_size=3, unique=True).filter(
    lambda v: min(abs(a - b) for i, a in enumerate(v) for b in v[i + 1:]) > 1e-2), st.permutations(range(3)))
def test_dd_ratio_is_permutation_symmetric(nodes, perm):
    p = panel(sp.exp(X), sp.sin(X) + 2, X**3)
    x = np.asarray(nodes)
    assert w.dd_ratio(p, x[list(perm)]) == w.dd_ratio(p, np.sort(x))
    brute = np.linalg.det(p.evaluate(np.sort(x))) / vandermonde_increasing(np.sort(x))
    assert w.dd_ratio(p, x) == pytest.approx(brute, rel=1e-10, abs=1e-10)


# ---------------------------------------------------------------------------
# extensions at the diagonal

@pytest.mark.parametrize("a", [-1.3, 0.0, 0.7, 4.0])
def test_monomial_wronskian(a):
    exprs = [sp.Integer(1), X, X**2]
    assert sym_wronskian(exprs, a) == 2.0
    assert w.extend_at_diagonal(panel(*exprs), a).value == pytest.approx(2.0, abs=1e-8)


def test_exponential_wronskian():
    est = w.extend_at_diagonal(panel(sp.Integer(1), sp.exp(X)), 0.0)
    assert est.value == pytest.approx(1.0, abs=1e-8)
    assert est.spread >= 0.0 and len(est.rungs) == 3


@pytest.mark.parametrize("lams", [(0.0, 1.0, 2.0), (-1.0, 0.5, 1.5, 2.0)])
def test_exponential_wronskian_formula(lams):
    a = 0.2
    exprs = [sp.exp(sp.Rational(str(lm)) * X) for lm in lams]
    formula = np.prod([lams[j] - lams[i] for i in range(len(lams)) for j in range(i + 1, len(lams))]) \
        * math.exp(sum(lams) * a)
    assert sym_wronskian(exprs, a) == pytest.approx(formula, rel=1e-12)
    assert w.wronskian(panel(*exprs), a) == pytest.approx(formula, rel=1e-7)


def test_order_one_is_exact():
    est = w.extend_at_diagonal(panel(sp.sin(X)), 0.4)
    assert est.value == math.sin(0.4) and est.spread == 0.0


def test_spread_shrinks_with_the_ladder():
    p = panel(sp.sin(X), sp.exp(X / 2), sp.cos(2 * X))
    spreads = [w.extend_at_diagonal(p, 0.3, w.DividedDifferenceCluster(0.3, e)).spread
               for e in (0.4, 0.2, 0.1)]
    orders = np.log2(np.array(spreads[:-1]) / np.array(spreads[1:]))
    assert np.all(orders >= 1.0)


def test_non_finite_rung_is_reported():
    p = w.CallablePanel([lambda x: np.ones_like(x), lambda x: np.full_like(x, np.nan)])
    with pytest.raises(FloatingPointError):
        w.extend_at_diagonal(p, 0.0)


def test_grid_panel_wronskian_line():
    x = np.linspace(-1, 1, 401)
    gp = w.GridPanel(x, np.array([np.ones_like(x), np.exp(x), np.exp(2 * x)]), smooth=True)
    centers = np.array([100, 200, 300])
    vals, spreads = w.wronskian_line(gp, centers)
    assert np.allclose(vals, 2 * np.exp(3 * x[centers]), rtol=1e-8)
    assert np.all(spreads >= 0)


def test_grid_panel_bounds():
    x = np.linspace(0, 1, 11)
    gp = w.GridPanel(x, np.array([x]))
    with pytest.raises(ValueError):
        gp.take(np.array([11]))
    periodic = w.GridPanel(x, np.array([x]), periodic=True)
    assert periodic.take(np.array([11]))[0, 0] == x[0]
    assert gp.evaluate(np.array([0.25]))[0, 0] == pytest.approx(0.25)


# ---------------------------------------------------------------------------
# Hirota derivative and integrated identities

def test_hirota_examples():
    f = lam(sp.sin(X) + 2)
    assert w.hirota_D(f, f, 0.3) == pytest.approx(0.0, abs=1e-12)
    assert w.hirota_D(lam(X), lam(sp.Integer(1)), 0.8) == pytest.approx(1.0, abs=1e-8)
    g = lam(sp.exp(X))
    assert w.hirota_D(f, g, 0.1) + w.hirota_D(g, f, 0.1) == pytest.approx(0.0, abs=1e-12)


def test_ratio_identity_examples():
    f = lam(sp.cosh(X))
    assert w.ratio_identity_check(f, f, 0.0, 1.0, 16) <= 1e-12
    assert w.ratio_identity_check(lam(X), lam(sp.Integer(1)), 0.0, 1.0, 64) <= 1e-10


def test_ratio_identity_midpoint_order():
    f1, f2 = lam(sp.exp(sp.sin(X)) + 1), lam(2 + sp.cos(X))
    res = [w.ratio_identity_check(f1, f2, -0.5, 1.0, nq) for nq in (16, 32, 64, 128)]
    orders = np.log2(np.array(res[:-1]) / np.array(res[1:]))
    assert np.all(np.diff(res) < 0)
    assert orders[-1] == pytest.approx(2.0, abs=0.05)


def test_ratio_identity_needs_positive_denominator():
    with pytest.raises(ValueError):
        w.ratio_identity_check(lam(X), lam(X), -1.0, 1.0, 8)


def test_key_lemma_reduces_to_ratio_identity():
    g, h = lam(sp.exp(X)), lam(sp.exp(2 * X))
    assert w.key_lemma_check([], g, h, 0.0, 0.5, 64) <= 1e-6


def test_key_lemma_examples():
    one = lam(sp.Integer(1))
    assert w.key_lemma_check([one], lam(sp.exp(X)), lam(sp.exp(2 * X)), 0.0, 0.5, 64) <= 1e-6
    assert w.key_lemma_check([one, lam(X)], lam(X**2), lam(X**3), 0.5, 1.5, 64) <= 1e-6


def test_key_lemma_monomial_wronskians_match_symbolic():
    # the four Wronskians entering the monomial case, against exact derivatives
    fs = [sp.Integer(1), X]
    for extra in ([X**2], [X**3], [X**2, X**3]):
        exprs = fs + extra
        assert w.wronskian(panel(*exprs), 0.9) == pytest.approx(sym_wronskian(exprs, 0.9), rel=1e-7)


def test_jacobi_identity_examples():
    assert w.jacobi_identity_check(np.eye(3)) == 0.0
    v = np.array([1.0, -2.0, 0.5])
    rank_one = np.outer(v, v[::-1])
    assert w.jacobi_identity_check(rank_one) <= 1e-12 * w.jacobi_scale(rank_one)


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**32 - 1), st.sampled_from([3, 4]))
def test_jacobi_identity_random(seed, size):
    m = np.random.default_rng(seed).uniform(-1, 1, (size, size))
    assert w.jacobi_identity_check(m) <= 1e-12 * w.jacobi_scale(m)


# ---------------------------------------------------------------------------
# reconstruction and iterated integrals

NODES = np.linspace(-1.0, 1.0, 801)


def test_reconstruct_single_line_is_identity():
    ell = np.exp(NODES)
    assert np.array_equal(w.reconstruct(ell, NODES, 0.0).values[0], ell)


def test_reconstruct_unit_lines():
    p = w.reconstruct(np.ones((2, NODES.size)), NODES, 0.25)
    assert np.allclose(p.values[1], NODES - NODES[np.argmin(np.abs(NODES - 0.25))], atol=1e-13)
    vals, _ = w.wronskian_line(p, np.arange(100, 700, 50))
    assert np.allclose(vals, 1.0, atol=1e-10)


def test_reconstruct_exponential_system():
    lams = np.array([0.0, 1.0, 2.0])
    lines = [np.exp(0 * NODES), np.exp(NODES), 2 * np.exp(3 * NODES)]
    p = w.reconstruct(np.array(lines), NODES, 0.0)
    rng = np.random.default_rng(1)
    for k in (1, 2, 3):
        for _ in range(5):
            idx = np.sort(rng.choice(np.arange(50, 750), size=k, replace=False))
            got = w.wedge(p.select(range(k)), NODES[idx])
            want = np.linalg.det(np.exp(np.outer(lams[:k], NODES[idx])))
            assert got == pytest.approx(want, rel=1e-6)


def test_reconstruct_rejects_nonpositive_lines():
    with pytest.raises(ValueError):
        w.reconstruct(np.array([np.ones_like(NODES), NODES]), NODES, 0.0)


@settings(max_examples=10, deadline=None)
@given(st.lists(st.floats(0.2, 1.5), min_size=4, max_size=4), st.floats(-0.5, 0.5))
def test_reconstruction_reproduces_lines(coeffs, x0):
    # smooth positive lines; W(f~_1..f~_k) must return l_k wherever clusters fit
    a, b, c, d = coeffs
    lines = np.array([2 + np.sin(a * NODES), np.exp(b * NODES), 1 + c * NODES**2,
                      np.cosh(d * NODES)])
    p = w.reconstruct(lines, NODES, x0)
    centers = np.arange(100, 701, 100)
    for k in range(1, 5):
        vals, _ = w.wronskian_line(p.select(range(k)), centers, base=2)
        assert np.allclose(vals, lines[k - 1, centers], rtol=1e-6)


def test_iterated_system_examples():
    x = np.linspace(-1, 1, 2001)
    g, check = w.iterated_integral_system(np.ones((1, x.size)) * 3.0, x, 0.0)
    assert np.all(check(np.array([10, 1000])) == 0.0)
    g, check = w.iterated_integral_system(np.ones((2, x.size)), x, 0.0)
    vals, _ = w.wronskian_line(g, np.array([500, 1000, 1500]))
    assert np.allclose(vals, 1.0, atol=1e-10)


def test_iterated_system_random_triple():
    x = np.linspace(-1, 1, 2001)
    rhos = np.array([2 + np.sin(x), 1.5 + np.cos(2 * x), np.exp(x / 3)])
    _, check = w.iterated_integral_system(rhos, x, 0.0)
    assert np.max(check(np.array([300, 500, 1000, 1500, 1700]))) <= 1e-6


# ---------------------------------------------------------------------------
# interlacing integrals and GUE minors

def test_interlacing_examples():
    one = lambda y: np.ones(len(y))  # noqa: E731
    assert w.interlacing_integral(one, [1.0, 0.0]) == pytest.approx(1.0, abs=1e-14)
    assert w.interlacing_integral(lambda y: y[:, 0], [1.0, 0.0]) == pytest.approx(0.5, abs=1e-14)
    with pytest.raises(ValueError):
        w.interlacing_integral(one, [1.0, 1.0])


@pytest.mark.parametrize("x", [[2.0, 0.5, -1.0], [3.0, 1.0, 0.0, -1.0]])
def test_interlacing_mass_matches_gue(x):
    one = lambda y: np.ones(len(y))  # noqa: E731
    n = len(x)
    est, se = w.gue_minor_expectation(one, x, 200, seed=0)
    assert est == pytest.approx(1 / math.factorial(n - 1), rel=1e-12)
    assert w.interlacing_integral(one, x) == pytest.approx(est, abs=max(3 * se, 1e-12))


def test_gue_degenerate_point_is_exact():
    est, se = w.gue_minor_expectation(lambda y: np.ones(len(y)), [0.7, 0.7, 0.7], 300, seed=2)
    assert est == pytest.approx(0.5, rel=1e-14) and se <= 1e-15


def test_gue_uniform_minor():
    est, se = w.gue_minor_expectation(lambda y: y[:, 0], [1.0, 0.0], 10_000, seed=4)
    assert abs(est - 0.5) <= 3 * se


def test_gue_needs_enough_replicas():
    with pytest.raises(ValueError):
        w.gue_minor_expectation(lambda y: y[:, 0], [1.0, 0.0], 10, seed=0)


def test_haar_unitaries_are_unitary():
    from toda_she.lattice import make_rng
    u = w.haar_unitary(make_rng(0), 3, 50)
    eye = np.eye(3)
    assert np.allclose(u @ np.conj(np.swapaxes(u, 1, 2)), eye, atol=1e-12)
