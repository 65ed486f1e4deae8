import os
import subprocess
import sys

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from toda_she import _kernels_py as py

compiled = pytest.importorskip("toda_she._kernels")


def _nodes(rng, batch, k):
    return np.sort(rng.uniform(-1, 1, (batch, k)), axis=1) + np.arange(k) * 0.05


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(1, 4), st.integers(1, 6))
def test_newton_rows_parity(seed, k, batch):
    rng = np.random.default_rng(seed)
    vals = rng.standard_normal((batch, k, k))
    nodes = _nodes(rng, batch, k)
    assert np.allclose(compiled.newton_rows(vals, nodes), py.newton_rows(vals, nodes), rtol=1e-12, atol=1e-12)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(1, 4))
def test_dd_det_parity(seed, k):
    rng = np.random.default_rng(seed)
    vals = rng.standard_normal((5, k, k))
    xn, yn = _nodes(rng, 5, k), _nodes(rng, 5, k)
    for ynodes in (None, yn):
        a = compiled.dd_det(vals, xn, ynodes)
        b = py.dd_det(vals, xn, ynodes)
        assert np.allclose(a, b, rtol=1e-10, atol=1e-10 * np.max(np.abs(b)))


@pytest.mark.parametrize("k", [1, 2, 3])
def test_ordered_minor_sum_parity(k):
    rng = np.random.default_rng(k)
    F, G = rng.standard_normal((2, k, 24))
    assert compiled.ordered_minor_sum(F, G) == pytest.approx(py.ordered_minor_sum(F, G), rel=1e-10)


def test_ordered_minor_sum_is_cauchy_binet():
    rng = np.random.default_rng(0)
    F, G = rng.standard_normal((2, 3, 9))
    assert py.ordered_minor_sum(F, G) == pytest.approx(np.linalg.det(F @ G.T), rel=1e-12)
    assert py.ordered_minor_sum(F[:2, :5], G[:2, :5]) == pytest.approx(np.linalg.det(F[:2, :5] @ G[:2, :5].T))


def test_dd_det_divides_by_both_vandermondes():
    rng = np.random.default_rng(1)
    vals = rng.standard_normal((1, 3, 3))
    xn, yn = np.array([[0.0, 0.5, 2.0]]), np.array([[-1.0, 0.1, 0.3]])
    v = lambda z: np.prod([z[j] - z[i] for i in range(3) for j in range(i + 1, 3)])  # noqa: E731
    want = np.linalg.det(vals[0]) / (v(xn[0]) * v(yn[0]))
    assert py.dd_det(vals, xn, yn)[0] == pytest.approx(want, rel=1e-12)


def test_environment_selects_the_fallback():
    code = "import toda_she; print(toda_she.BACKEND)"
    env = dict(os.environ, TODA_SHE_BACKEND="python")
    out = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True, check=True)
    assert out.stdout.strip() == "python"
