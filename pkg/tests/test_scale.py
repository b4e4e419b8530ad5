import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate

from semidet.errors import BadParameter, HypothesesFail, Inconclusive, ScaleDiverges, SingularIntegrand
from semidet.models import builtin_model, make_model
from semidet.scale import (classify_boundaries, classify_end, hitting_probability, log_scale_density,
                           max_exceedance_probability, scale_density, scale_function, scale_profile,
                           speed_density)

# P(T_2 < T_0 | X_0 = 0.05) for logistic Feller at eps = 0.1, frozen from the
# quadrature oracle in test_hitting_matches_quadrature_oracle
HIT_LF = 0.29986437090571066


@pytest.fixture(scope="module")
def lf():
    return builtin_model("logistic_feller")


@pytest.fixture(scope="module")
def driftless():
    return make_model("driftless", "polynomial", (0.0,), (1.0,), 2.0)


def logistic_sp(x, eps=0.1):
    # closed-form scale density normalised at 0
    return np.exp(-(2.0 / eps) * (x - x * x / 2.0))


def test_scale_density_closed_form(lf):
    x = np.array([0.1, 0.7, 1.0, 1.6])
    # shift the normalisation from x_ref = 0.5 to 0
    got = scale_density(lf, 0.1, x) * logistic_sp(0.5)
    np.testing.assert_allclose(got, logistic_sp(x), rtol=1e-10)
    assert scale_density(lf, 0.1, 1.0, x_ref=0.5) * logistic_sp(0.5) == pytest.approx(math.exp(-10), rel=1e-10)
    assert scale_density(lf, 0.1, 0.5) == 1.0


def test_speed_density_at_reference(lf):
    assert speed_density(lf, 0.1, 0.5) == pytest.approx(20.0, rel=1e-13)
    x = np.array([0.2, 1.3])
    expect = 1.0 / (0.1 * x * logistic_sp(x) / logistic_sp(0.5))
    np.testing.assert_allclose(speed_density(lf, 0.1, x), expect, rtol=1e-10)


def test_driftless_scale_is_affine(driftless):
    x = np.array([0.1, 0.5, 1.9])
    np.testing.assert_allclose(scale_density(driftless, 0.1, x), 1.0)
    np.testing.assert_allclose(scale_function(driftless, 0.1, x), x - 1.0, atol=1e-12)
    assert hitting_probability(driftless, 0.1, 0.3, 1.0) == pytest.approx(0.3, abs=1e-10)


def test_brownian_ends_are_regular():
    bm = make_model("bm", "polynomial", (0.0,), (1.0,), 1.0)
    left, right = classify_boundaries(bm, 0.1)
    assert left.label == "attracting+regular"
    assert right.label == "attracting+regular"


def test_scale_function_properties(lf):
    x = np.linspace(0.01, 3.0, 40)
    s = scale_function(lf, 0.1, x)
    assert np.all(np.diff(s) > 0)
    assert scale_function(lf, 0.1, 0.5) == 0.0
    # s(0+) converges as the cutoff shrinks; s(M) keeps growing
    lows = scale_function(lf, 0.1, np.array([1e-2, 1e-3, 1e-4, 1e-5, 1e-6]))
    steps = np.abs(np.diff(lows))
    assert np.all(steps[1:] < 0.2 * steps[:-1])
    highs = scale_function(lf, 0.1, np.array([2.0, 4.0, 8.0]))
    assert highs[2] > 1e3 * highs[1] > 1e6 * highs[0]


def test_logistic_classification(lf):
    left, right = classify_boundaries(lf, 0.1)
    assert (left.attracting, left.feller_class) == (True, "exit")
    assert (right.attracting, right.feller_class) == (False, "entrance")
    assert left.exponents["scale"] < -0.1 and right.exponents["scale"] > -0.01


def test_kfw_right_end_is_exit():
    left, right = classify_boundaries(builtin_model("kimura_fisher_wright"), 0.1)
    assert right.point == 1.0 and right.feller_class == "exit"
    assert left.label == "attracting+exit"


def test_hitting_matches_quadrature_oracle(lf):
    num, _ = integrate.quad(logistic_sp, 0.0, 0.05, epsabs=0, epsrel=1e-13)
    den, _ = integrate.quad(logistic_sp, 0.0, 2.0, epsabs=0, epsrel=1e-13)
    assert num / den == pytest.approx(HIT_LF, rel=1e-12)
    assert hitting_probability(lf, 0.1, 0.05, 2.0) == pytest.approx(HIT_LF, rel=1e-10)


def test_hitting_limits(lf):
    assert hitting_probability(lf, 0.1, 1e-7, 2.0) < 1e-5
    assert hitting_probability(lf, 0.1, 2.0 - 1e-9, 2.0) > 1 - 1e-5


@settings(max_examples=15)
@given(st.floats(0.01, 1.9), st.floats(0.01, 1.9))
def test_hitting_monotone_in_start(lf, a, b):
    lo, hi = sorted((a, b))
    if hi - lo < 1e-3:
        return
    assert hitting_probability(lf, 0.1, lo, 2.0) < hitting_probability(lf, 0.1, hi, 2.0)


def test_exceedance_decreasing(lf):
    vals = [max_exceedance_probability(lf, 0.1, 0.05, M).probability for M in (2.0, 4.0, 8.0)]
    assert vals[0] > vals[1] > vals[2]
    assert vals[2] < 1e-20
    res = max_exceedance_probability(lf, 0.1, 0.05, 2.0)
    assert res.trend_decreasing and res.regime == "proven"
    near = max_exceedance_probability(lf, 0.1, 0.05, 0.05 + 1e-9).probability
    assert near > 1 - 1e-5


def test_non_attracting_left_end():
    # a = x^2 near 0 makes 2 mu/(eps a) ~ 2/(eps x), so s(0+) = -inf
    m = make_model("quadratic_noise", "polynomial", (0.0, 1.0, -1.0), (0.0, 0.0, 1.0), math.inf)
    v = classify_end(m, 0.1, "left")
    assert v.attracting is False
    with pytest.raises(ScaleDiverges):
        hitting_probability(m, 0.1, 0.1, 0.5)
    with pytest.raises(HypothesesFail):
        max_exceedance_probability(m, 0.1, 0.1, 0.5)


def test_strict_classification_raises_when_undecided():
    # with a = x^2 and mu ~ 0.475 x near 0, s' ~ x^-0.95; the shell growth
    # exponent -0.05 falls inside the indeterminacy band
    m = make_model("borderline", "polynomial", (0.0, 0.475, -0.475), (0.0, 0.0, 1.0), math.inf)
    v = classify_end(m, 1.0, "left")
    assert v.attracting is None
    with pytest.raises(Inconclusive):
        classify_boundaries(m, 1.0)


def test_profile_invariants_and_generator(lf):
    prof = scale_profile(lf, 0.1, np.linspace(0.02, 2.0, 801))
    assert np.all(prof.scale_density > 0) and np.all(prof.speed_density > 0)
    assert np.all(np.diff(prof.scale_function) > 0)
    assert prof.generator_residual(lf) < 1e-5
    assert prof.left.feller_class == "exit"


def test_profile_csv(tmp_path, lf):
    prof = scale_profile(lf, 0.1, classify=False)
    path = prof.to_csv(tmp_path / "s.csv", lf.model_hash())
    assert "scale_profile" in open(path).read()


def test_errors(lf):
    with pytest.raises(BadParameter):
        scale_density(lf, 0.0, 0.5)
    with pytest.raises(BadParameter):
        log_scale_density(lf, 0.1, -1.0)
    with pytest.raises(BadParameter):
        hitting_probability(lf, 0.1, 3.0, 2.0)
    dip = make_model("dip", "polynomial", (0.0, 1.0, -1.0), (0.0, 1.0, -2.0), math.inf)
    with pytest.raises(SingularIntegrand):
        scale_density(dip, 0.1, 0.9)
