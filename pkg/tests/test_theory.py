import math

import mpmath
import numpy as np
import pytest
from hypothesis import assume, given, settings, strategies as st

from hybridrules import ConfigError
from hybridrules.theory import (SWEEP_GRID, BoundParams, bound_B, log1mexp, log_bound_B,
                                normalized_auc, sweet_spot_sweep, tree_space_size)

import oracles

mpmath.mp.dps = 60


def params(hc, hs, m):
    return BoundParams(math.log(hc), math.log(hs), m)


def rel(a, b):
    return abs(float((mpmath.mpf(a) - b) / b))


def test_small_example():
    v = bound_B(1.0, 0.5, params(4, 2, 3))
    # 1.41958 is a rounded value; the exact value is 1.4195734...
    assert v == pytest.approx(1.41958, abs=1e-5)
    assert rel(v, oracles.bound_direct(1, 0.5, 4, 2, 3)) < 1e-12


def test_trivial_endpoints_huge_spaces():
    p = BoundParams(math.log(3.11e20), math.log(3.11e18), 5000)
    for eps in (1e-4, 0.01, 0.3, 1.0):
        want0 = mpmath.log(1 + mpmath.mpf(3.11e20) * mpmath.e ** (-eps * 5000))
        want1 = mpmath.log(1 + mpmath.mpf(3.11e18) * mpmath.e ** (-eps * 5000))
        # compare B itself through its log
        assert abs(log_bound_B(eps, 0.0, p) - float(want0)) <= 1e-9 * max(1.0, float(want0))
        assert abs(log_bound_B(eps, 1.0, p) - float(want1)) <= 1e-9 * max(1.0, float(want1))
        assert rel(math.exp(log_bound_B(eps, 0.0, p)), mpmath.e ** want0) < 1e-9


@settings(max_examples=300, deadline=None)
@given(st.floats(1e-6, 1.0), st.floats(0.0, 1.0), st.integers(1, 10 ** 6), st.integers(1, 10 ** 6),
       st.integers(1, 50))
def test_log_domain_matches_direct(eps, c, a, b, m):
    hc, hs = max(a, b), min(a, b)
    got = bound_B(eps, c, params(hc, hs, m))
    assert rel(got, oracles.bound_direct(eps, c, hc, hs, m)) < 1e-9


@settings(max_examples=100, deadline=None)
@given(st.floats(0.01, 0.99), st.floats(0, 40), st.floats(0, 10), st.integers(1, 20000))
def test_strictly_decreasing_in_eps(c, log_hs, log_n, m):
    p = BoundParams.from_ratio(log_hs, math.exp(log_n), m)
    eps = np.linspace(1e-3, 1, 50)
    v = log_bound_B(eps, c, p)
    assert np.all(np.isfinite(v))
    assert np.all(np.diff(v) <= 0)


def test_strictly_decreasing_small_m():
    v = bound_B(np.linspace(0.01, 1, 200), 0.3, params(50, 7, 4))
    assert np.all(np.diff(v) < 0)


@settings(max_examples=100, deadline=None)
@given(st.floats(1e-4, 1.0), st.floats(0.0, 1.0), st.floats(0, 60), st.integers(1, 5000))
def test_symmetry_for_equal_spaces(eps, c, log_h, m):
    assume(1 - (1 - c) == c)  # the mirrored input must be exactly representable
    p = BoundParams(log_h, log_h, m)
    assert log_bound_B(eps, c, p) == pytest.approx(log_bound_B(eps, 1 - c, p), rel=1e-12, abs=1e-12)


def test_log1mexp_regimes():
    x = np.array([-1e-12, -0.1, -math.log(2), -5.0, -800.0])
    want = [float(mpmath.log(1 - mpmath.e ** mpmath.mpf(v))) for v in x]
    assert np.allclose(log1mexp(x), want, rtol=1e-12, atol=0)
    assert log1mexp(0.0) == -np.inf


def test_auc_closed_form_unit_spaces():
    p = BoundParams(0.0, 0.0, 1)
    want = 2 - math.exp(-1)
    for method in ("simpson", "trapezoid"):
        assert normalized_auc(0.4, p, method=method) == pytest.approx(want, rel=1e-6)
    assert round(normalized_auc(0.4, p), 5) == 1.63212


def test_auc_closed_form_zero_transparency():
    log_hc, log_hs, m = math.log(3.11e20), math.log(3.11e18), 5000
    p = BoundParams(log_hc, log_hs, m)
    want = (1 + mpmath.e ** log_hc * (1 - mpmath.e ** -m) / m) / mpmath.e ** log_hs
    assert rel(normalized_auc(0.0, p), want) < 1e-6


def test_quadrature_converges_at_sweep_parameters():
    p = BoundParams.from_ratio(math.log(3.11e18), 100, 5000)
    for c in (0.015, 0.09, 0.5, 0.995):
        a, b = normalized_auc(c, p, 4096), normalized_auc(c, p, 8192)
        assert abs(a - b) / b < 1e-6


def test_quadrature_guards():
    p = BoundParams(1.0, 0.5, 3)
    with pytest.raises(ConfigError):
        normalized_auc(0.5, p, n=32)
    with pytest.raises(ConfigError):
        normalized_auc(0.5, p, method="gauss")
    with pytest.raises(ConfigError):
        log_bound_B(0.0, 0.5, p)
    with pytest.raises(ConfigError):
        log_bound_B(0.5, 1.5, p)
    with pytest.raises(ConfigError):
        BoundParams(1.0, 2.0, 3)
    with pytest.raises(ConfigError):
        BoundParams(1.0, 0.5, 0)


def test_sweep_grid_shape():
    assert len(SWEEP_GRID) == 197
    assert SWEEP_GRID[0] == 0.015 and SWEEP_GRID[-1] == 0.995
    assert np.all(np.diff(SWEEP_GRID) > 0)
    with pytest.raises(ConfigError):
        sweet_spot_sweep(BoundParams(1.0, 0.5, 3), grid=[0.0, 0.5])


def test_sweep_interior_minimum_small_grid():
    p = BoundParams.from_ratio(math.log(3.11e18), 100, 5000)
    s = sweet_spot_sweep(p, grid=np.linspace(0.01, 0.99, 50))
    assert s.interior
    assert s.auc[s.argmin] < min(s.auc[0], s.auc[-1])
    assert s.summary()["interior"] is True


def test_tree_space_size():
    # exact value 3.1163e18; 3.11e18 is its truncation
    assert math.exp(tree_space_size(3, 200)) == pytest.approx(3.11e18, rel=3e-3)
    assert math.exp(tree_space_size(1, 200)) == pytest.approx(800, rel=1e-12)
    assert math.exp(tree_space_size(1, 1)) == pytest.approx(4, rel=1e-12)
    want = 2 ** 8 * 200 * 199 ** 2 * 198 ** 4
    assert tree_space_size(3, 200) == pytest.approx(math.log(want), rel=1e-14)
    with pytest.raises(ConfigError):
        tree_space_size(3, 2)
    with pytest.raises(ConfigError):
        tree_space_size(0, 5)
