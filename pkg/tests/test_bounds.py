import math

import numpy as np
import pytest
from hypothesis import assume, given, settings
from hypothesis import strategies as st

from qtkur.bounds import (
    BoundDataError,
    clock_metrics,
    engine_metrics,
    evaluate_bounds,
    f_inverse,
    fisher_upper_bound,
    multidim_tkur,
    quality_factors,
    tkur_rhs,
    tur_rhs,
)
from qtkur.fcs import CumulantResult
from qtkur.thermo import ThermoAccumulants

positive = st.floats(1e-8, 1e3, allow_nan=False)


def acc(ds, a, sigma=None, info=0.0):
    sigma = ds + info if sigma is None else sigma
    return ThermoAccumulants(0, 10.0, ds, a, sigma, info, 0.0, {})


@settings(max_examples=200, deadline=None)
@given(x=st.floats(0, 1e4, allow_nan=False))
def test_f_inverse_solves_x_tanh_x(x):
    y = f_inverse(x)
    assert y >= 0
    assert math.isclose(y * math.tanh(y), x, rel_tol=1e-12, abs_tol=1e-300)
    assert y >= math.sqrt(x) * (1 - 1e-12) and y >= x * (1 - 1e-12)


def test_f_inverse_known_values_and_errors():
    assert f_inverse(0.0) == 0.0
    assert math.isclose(f_inverse(1.0 * math.tanh(1.0)), 1.0, rel_tol=1e-13)
    assert f_inverse(100.0) == 100.0
    with pytest.raises(ValueError):
        f_inverse(-1e-3)


@settings(max_examples=200, deadline=None)
@given(ds=positive, a=positive)
def test_fisher_bound_below_tur_and_kur_limits(ds, a):
    fb = fisher_upper_bound(ds, a)
    assert fb <= ds / 2 * (1 + 1e-12)  # thermodynamic limit
    assert fb <= a * (1 + 1e-12)  # kinetic limit


def test_fisher_bound_limits():
    assert math.isclose(fisher_upper_bound(1e-6, 1.0), 0.5e-6, rel_tol=1e-6)
    assert math.isclose(fisher_upper_bound(1e4, 1.0), 1.0, rel_tol=1e-12)
    assert fisher_upper_bound(0.0, 1.0) == 0.0
    with pytest.raises(ValueError):
        fisher_upper_bound(1.0, 0.0)


@settings(max_examples=200, deadline=None)
@given(ds=positive, a=positive, delta=st.floats(-1, 1))
def test_tkur_dominates_tur(ds, a, delta):
    assert tkur_rhs(ds, a, delta) >= tur_rhs(ds, 0.0, delta) * (1 - 1e-12)


def test_rhs_edge_cases():
    assert tkur_rhs(0.0, 1.0, 0.0) == math.inf
    assert tkur_rhs(0.0, 1.0, -1.0) == 0.0
    assert math.isnan(tkur_rhs(1.0, 1.0, float("nan")))
    assert tur_rhs(1.0, 1.0, 0.0) == math.inf
    assert tur_rhs(2.0, 1.0, 0.0) == 2.0
    with pytest.raises(ValueError):
        tkur_rhs(1.0, -1.0, 0.0)


def test_quality_factors():
    f, fp = quality_factors(4.0, -0.5, 1.5, 0.5)
    assert fp == 4.0 and f == 16.0
    with pytest.raises(BoundDataError):
        quality_factors(1.0, 0.0, 0.5, 0.5)


def test_evaluate_bounds_pass_and_vacuous():
    rep = evaluate_bounds(10.0, 10.0, 0.0, 15.0, acc(100.0, 20.0))
    assert rep.passed and not rep.failures
    assert rep.rel_fluct == 0.1
    vac = evaluate_bounds(1e-14, 1.0, 0.0, 0.0, acc(0.0, 5.0, 0.0))
    assert vac.vacuous and vac.passed and math.isnan(vac.delta)


def test_evaluate_bounds_names_failures():
    rep = evaluate_bounds(10.0, 0.01, 0.0, 5.0, acc(0.1, 10.0))
    assert {"cramer_rao", "fisher_chain", "tkur", "tur", "quality_factor"} <= set(rep.failures)
    neg = evaluate_bounds(1.0, 1.0, 0.0, 0.0, acc(-1e-3, 1.0, sigma=0.0, info=1e-3))
    assert "partial_ep_negative" in neg.failures


def test_multidim_matches_hand_computation():
    xi = np.array([[2.0, 0.5], [0.5, 1.0]])
    means = np.array([1.0, -0.5])
    phis = [0.1, 0.2]
    rep = multidim_tkur(CumulantResult(("a", "b"), means, xi), phis, 3.0, 4.0)
    j = means + phis
    assert math.isclose(rep.lhs, j @ np.linalg.solve(xi, j), rel_tol=1e-12)
    assert math.isclose(rep.rhs, fisher_upper_bound(3.0, 4.0))
    assert not rep.singular and rep.dominates
    assert np.allclose(rep.z_opt @ j, 1.0)


def test_multidim_singular_uses_pseudo_inverse():
    xi = np.array([[1.0, 2.0], [2.0, 4.0]])
    means = np.array([1.0, 2.0])
    rep = multidim_tkur(CumulantResult(("a", "b"), means, xi), [0.0, 0.0], 3.0, 4.0)
    assert rep.singular
    assert math.isclose(rep.lhs, 1.0, rel_tol=1e-10)  # both currents carry the same information
    assert rep.dominates


@settings(max_examples=50, deadline=None)
@given(seed=st.integers(0, 10_000), m=st.integers(1, 4))
def test_multidim_dominates_every_single_current(seed, m):
    rng = np.random.default_rng(seed)
    a = rng.normal(size=(m, m + 2))
    xi = a @ a.T
    j = rng.normal(size=m)
    rep = multidim_tkur(CumulantResult(tuple("abcd"[:m]), j, xi), np.zeros(m), 1.0, 1.0)
    assert rep.dominates
    for _ in range(5):
        z = rng.normal(size=m)
        assert rep.lhs >= (z @ j) ** 2 / (z @ xi @ z) * (1 - 1e-9)


def test_engine_metrics():
    eng = engine_metrics(0.5, 1.0, 0.1, 1.0, -0.5)
    assert math.isclose(eng.eta, 0.5)
    assert math.isclose(eng.tradeoff_rhs, 1.0 * 0.5 / (2 * 0.25 * 0.5))
    assert eng.applicable and eng.holds
    off = engine_metrics(-0.5, 1.0, 0.1, 1.0, 0.0)
    assert not off.applicable and math.isnan(off.eta)


@settings(max_examples=100, deadline=None)
@given(mean=positive, a=positive, delta=st.floats(-0.99, 1.0), slack=st.floats(1.0, 10.0))
def test_engine_tradeoff_holds_whenever_tur_holds(mean, a, delta, slack):
    # stationary engine: the heat current has mean -βQ and Σ - I = (-I)(1 - η),
    # so any variance allowed by the TUR satisfies the trade-off
    eta = a / (a + 1.0)
    minus_bq = mean
    minus_i = mean / eta
    var = slack * 2 * (1 + delta) ** 2 * mean ** 2 / (minus_i - minus_bq)
    eng = engine_metrics(minus_bq, minus_i, mean, var, delta)
    assert eng.holds


def test_clock_metrics():
    m = clock_metrics(5.0, 2.0, 10.0, -0.5)
    assert m.inverse_fano == 2.5 and m.sigma_tick == 2.0
    assert math.isclose(m.bound, 2.0 / (2 * 0.25))
    assert m.applicable and m.holds
    assert not clock_metrics(-1.0, 2.0, 1.0, 0.0).applicable
