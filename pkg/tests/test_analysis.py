import math

import numpy as np
import pytest
from hypothesis import assume, given, strategies as st

from bplab import gf, models
from bplab.analysis import (
    BoundaryRegimeError,
    ConditionViolatedError,
    InsufficientRangeError,
    envelope_check,
    fit_log_slope,
    lemma_singleterm_check,
    limit_cdf_A,
    limit_cdf_G,
    plateau_estimate,
    regime_constant_C,
    regime_exponent,
    regime_exponent_N,
)
from bplab.estimators import yaglom_deficiency
from bplab.laws import IndependentProduct, LinearFractional, Poisson
from bplab.model import ConstantEnvModel


def chain3():
    p = lambda *c: IndependentProduct(list(c))  # noqa: E731
    return ConstantEnvModel(
        [p(LinearFractional(1.0), Poisson(0.5), Poisson(0.0)), p(LinearFractional(1.0), Poisson(0.5)),
         p(LinearFractional(1.0))]
    )


# --- slope fits ------------------------------------------------------------------------


def test_slope_of_exact_power_law():
    x = np.array([10.0, 100.0, 1000.0])
    f = fit_log_slope(np.column_stack([x, 7 * x**-0.5]))
    assert f.slope == pytest.approx(-0.5, abs=1e-12)
    assert f.intercept == pytest.approx(math.log(7), abs=1e-12)
    assert f.max_residual < 1e-12


def test_slope_of_lf_survival():
    x = np.logspace(3, 6, 7)
    assert fit_log_slope(np.column_stack([x, 1 / (1 + x)])).slope == pytest.approx(-1.0, abs=0.01)


def test_slope_of_two_type_survival():
    m = models.load("mixed_n2").constant
    path = gf.survival_path(m, 10**6)
    ns = np.array([10**4, 10**5, 10**6])
    assert fit_log_slope(np.column_stack([ns, path[ns, 0]])).slope == pytest.approx(-0.5, abs=0.05)


@pytest.mark.parametrize("pts", [[(1, 1), (2, 1)], [(1, 1), (2, 0), (3, 1)], [(2, 1), (1, 1), (3, 1)]])
def test_slope_input_checks(pts):
    with pytest.raises(ValueError):
        fit_log_slope(pts)


# --- plateaus ------------------------------------------------------------------------------


def test_plateau_of_exact_inverse_log():
    x = np.logspace(2, 6, 9)
    pl = plateau_estimate(np.column_stack([x, 3 / np.log(x)]))
    assert pl.value == pytest.approx(3.0, rel=1e-14)
    assert pl.dispersion == pytest.approx(1.0, rel=1e-14)


def test_plateau_needs_three_decades():
    x = np.logspace(2, 4.5, 6)
    with pytest.raises(InsufficientRangeError):
        plateau_estimate(np.column_stack([x, 1 / np.log(x)]))


def test_plateau_trim_drops_extremes():
    x = np.logspace(2, 6, 5)
    p = np.array([1.0, 2.0, 2.0, 2.0, 9.0]) / np.log(x)
    assert plateau_estimate(np.column_stack([x, p]), trim=1).value == pytest.approx(2.0)
    assert plateau_estimate(np.column_stack([x, p])).value == pytest.approx(3.2)


# --- regime exponents ----------------------------------------------------------------------------


@pytest.mark.parametrize("t, gamma", [((5, 0.5), 0.5), ((0.5, 3), 1.0), ((2, 3), 2.0), ((0.3, 1.5), 0.75)])
def test_regime_exponent_examples(t, gamma):
    assert regime_exponent(*t) == gamma


@pytest.mark.parametrize("t", [(0.5, 1.0), (3.0, 2.0), (1.0, 4.0)])
def test_boundary_inputs_rejected(t):
    with pytest.raises(BoundaryRegimeError):
        regime_exponent(*t)
    with pytest.raises(BoundaryRegimeError):
        limit_cdf_A(*t)


@pytest.mark.parametrize("i, t, gamma, two_sided", [(1, (2, 4), 2, True), (1, (1, 2, 3), 1, True),
                                                   (2, (0.1, 3), 3, True), (1, (0.5, 4), 0.5, False)])
def test_regime_exponent_N_examples(i, t, gamma, two_sided):
    e = regime_exponent_N(i, t)
    assert e.gamma == gamma and e.two_sided == two_sided


@given(st.floats(1.0, 6.0), st.floats(2.0, 8.0))
def test_two_type_exponent_agrees_with_general_formula(t1, t2):
    assume(t1 != 1.0 and t2 != 2.0)
    assert regime_exponent(t1, t2) == pytest.approx(regime_exponent_N(1, (t1, t2)).gamma, abs=1e-12)


# --- envelopes ---------------------------------------------------------------------------------------


def test_envelope_exact_power():
    ns = np.logspace(1, 5, 5)
    v = envelope_check(ns, 5 * ns**-1.5, 1.5)
    assert v.passed and v.max_min_ratio == pytest.approx(1.0, rel=1e-12)


def test_envelope_oscillating_factor():
    ns = np.logspace(1, 6, 40)
    v = envelope_check(ns, ns**-1.0 * (2 + np.sin(np.log(ns))), 1.0, 10.0)
    assert v.passed and v.max_min_ratio <= 3.0


def test_envelope_detects_wrong_exponent():
    ns = np.logspace(3, 6, 4)
    assert not envelope_check(ns, ns**-1.0, 0.5).passed


def test_envelope_on_regime_23():
    m = models.load("mixed_n2").constant
    ns = [10**3, 10**4, 10**5, 10**6]
    ys = [gf.iterate_deficiency(m, n, q0=yaglom_deficiency(n, (2, 3))).q[0] for n in ns]
    assert envelope_check(ns, ys, regime_exponent(2, 3)).passed


# --- limit laws -----------------------------------------------------------------------------------------


@pytest.mark.parametrize("t, want", [((2,), 0.5), ((3, 2), 0.0), ((2, 4), 0.5), ((0.5,), 0.0)])
def test_limit_G_examples(t, want):
    assert limit_cdf_G(t) == pytest.approx(want, abs=1e-15)


@pytest.mark.parametrize("t, want", [((0.5, 1.5), 1 / 3), ((0.5, 5), 0.5), ((2, 5), 0.75), ((3, 5), 5 / 6),
                                     ((7, 0.5), 0.0), ((0, 3), 0.5)])
def test_limit_A_examples(t, want):
    assert limit_cdf_A(*t) == pytest.approx(want, abs=1e-15)


@given(st.lists(st.floats(0.01, 10.0), min_size=1, max_size=4), st.integers(0, 3), st.floats(0.0, 5.0))
def test_G_non_decreasing(t, j, bump):
    j %= len(t)
    up = list(t)
    up[j] += bump
    assert limit_cdf_G(up) >= limit_cdf_G(t)


@given(st.lists(st.floats(0.01, 10.0), min_size=1, max_size=4))
def test_G_vanishes_below_the_diagonal(t):
    m = min(v - l for l, v in enumerate(t, start=1))
    if m <= 0:
        assert limit_cdf_G(t) == 0.0
    else:
        assert limit_cdf_G(t) > 0.0


@given(st.floats(0.0, 6.0), st.floats(0.0, 8.0), st.floats(0.0, 3.0), st.booleans())
def test_A_non_decreasing(t1, t2, bump, first):
    a, b = (t1 + bump, t2) if first else (t1, t2 + bump)
    try:
        lo, hi = limit_cdf_A(t1, t2), limit_cdf_A(a, b)
    except BoundaryRegimeError:
        return
    assert hi >= lo - 1e-15


@pytest.mark.parametrize("eps", [0.1, 0.01, 0.001])
def test_A_tends_to_half_at_the_corner(eps):
    assert abs(limit_cdf_A(1 + eps, 2 + eps) - 0.5) <= eps


@given(st.floats(0.0, 6.0), st.floats(0.0, 8.0))
def test_A_and_C_consistent(t1, t2):
    try:
        a, c = limit_cdf_A(t1, t2), regime_constant_C(t1, t2)
    except BoundaryRegimeError:
        return
    assert a == (0.0 if t2 < 1 else pytest.approx(1 - 1 / (2 * c), abs=1e-15))


# --- single-term approximation -----------------------------------------------------------------------------


def test_singleterm_degenerate_tail_is_one():
    v = lemma_singleterm_check(models.load("mixed_n2").constant, 2, [], [10, 100, 1000])
    assert v.ratios == (1.0, 1.0, 1.0) and v.passed


def test_singleterm_two_types():
    v = lemma_singleterm_check(models.load("mixed_n2").constant, 1, [3.0], [10**3, 10**4, 10**5, 10**6])
    assert v.passed and 0.8 <= v.ratios[-1] <= 1.25


def test_singleterm_three_types():
    v = lemma_singleterm_check(chain3(), 2, [4.0], [10**3, 10**4, 10**5, 10**6])
    assert v.passed


def test_singleterm_condition_checked():
    with pytest.raises(ConditionViolatedError):
        lemma_singleterm_check(models.load("mixed_n2").constant, 1, [1.5], [10, 100])
