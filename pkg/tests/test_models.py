import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from semidet.errors import AssumptionViolated, BadParameter, NonEvaluable, UnknownModel
from semidet.models import (BUILTIN_NAMES, ModelParams, builtin_model, make_model, model_from_spec,
                            validate_assumptions)

CATALOG = [n for n in BUILTIN_NAMES if n != "custom"]


@pytest.mark.parametrize("name", CATALOG)
def test_catalog_models_are_usable(name):
    model = builtin_model(name)
    rep = validate_assumptions(model, strict=True)
    assert rep.usable
    assert math.isclose(model.gamma, 1.0, rel_tol=1e-8)
    assert math.isclose(model.a_prime0, 1.0, rel_tol=1e-8)


def test_logistic_feller_parameters():
    m = builtin_model("logistic_feller", {"gamma": 1.0, "x_c": 1.0})
    assert m.gamma == 1.0 and m.a_prime0 == 1.0 and m.x_c == 1.0
    assert m.unbounded


def test_kfw_coefficients():
    m = builtin_model("kimura_fisher_wright", {"gamma": 2.0})
    x = np.linspace(0.05, 0.95, 19)
    assert np.allclose(m.drift(x), 2 * x * (1 - x))
    assert np.allclose(m.diffusion_sq(x), x * (1 - x))
    assert m.r == 1.0


def test_general_parameters_carried():
    m = builtin_model("logistic_feller", {"gamma": 2.5, "x_c": 3.0, "sigma2": 0.4})
    assert math.isclose(m.gamma, 2.5, rel_tol=1e-8)
    assert math.isclose(m.a_prime0, 0.4, rel_tol=1e-8)
    assert math.isclose(m.x_c, 3.0, rel_tol=1e-12)


def test_gilpin_ayala_theta_one_is_logistic():
    x = np.linspace(0.0, 5.0, 101)
    ga = builtin_model("gilpin_ayala_pow", {"theta": 1.0})
    lf = builtin_model("logistic_feller")
    assert np.allclose(ga.drift(x), lf.drift(x), atol=1e-14)


def test_holling_beta_zero_is_logistic():
    x = np.linspace(0.0, 5.0, 101)
    h = builtin_model("holling", {"beta": 0.0, "n": 2})
    lf = builtin_model("logistic_feller")
    assert np.allclose(h.drift(x), lf.drift(x), atol=1e-14)


def test_holling_x_c_is_first_zero():
    h = builtin_model("holling", {"beta": 0.5, "n": 2})
    assert abs(h.drift(h.x_c)) < 1e-12
    inner = np.linspace(0, h.x_c, 200)[1:-1]
    assert np.all(h.drift(inner) > 0)


def test_linear_gilpin_ayala_fails_diffusion_slope():
    # a(x) = x^2: a'(0) = 0
    m = make_model("linear_ga", "polynomial", (0.0, 1.0, -1.0), (0.0, 0.0, 1.0), math.inf, a_prime0=0.0)
    rep = validate_assumptions(m)
    assert "diffusion_slope_positive" in [c.name for c in rep.failed]
    with pytest.raises(AssumptionViolated) as err:
        validate_assumptions(m, strict=True)
    assert any(c.name == "diffusion_slope_positive" for c in err.value.failed)


def test_negative_growth_fails():
    m = make_model("decay", "polynomial", (0.0, -1.0), (0.0, 1.0), math.inf, find_x_c=False)
    assert "drift_slope_positive" in [c.name for c in validate_assumptions(m).failed]


def test_non_evaluable():
    m = make_model("blowup", "polynomial", (0.0, 1.0, -1.0), (0.0, 1.0), math.inf, r_sim=1e200)
    with pytest.raises(NonEvaluable):
        validate_assumptions(m)


def test_conflicting_override_rejected():
    with pytest.raises(BadParameter):
        builtin_model("logistic_feller", {"gamma_override": 1.5})


@pytest.mark.parametrize("params", [{"theta": 0.0}, {"theta": -1.0}])
def test_bad_gilpin_ayala(params):
    with pytest.raises(BadParameter):
        builtin_model("gilpin_ayala_pow", params)


@pytest.mark.parametrize("params", [{"n": 0.5}, {"beta": -0.1}])
def test_bad_holling(params):
    with pytest.raises(BadParameter):
        builtin_model("holling", params)


def test_unknown_model():
    with pytest.raises(UnknownModel):
        builtin_model("lotka")


def test_model_params_defaults_and_domain():
    p = ModelParams(0.01)
    assert p.x0 == 0.01
    with pytest.raises(BadParameter):
        ModelParams(-0.1)
    with pytest.raises(BadParameter):
        ModelParams(0.1, 2.0).check_domain(builtin_model("kimura_fisher_wright"))


def test_spec_roundtrip_and_hash():
    m = builtin_model("gilpin_ayala_pow", {"theta": 2.0})
    m2 = model_from_spec({"name": "gilpin_ayala_pow", "params": {"theta": 2.0}})
    assert m.model_hash() == m2.model_hash()
    assert m.model_hash() != builtin_model("gilpin_ayala_pow").model_hash()


def test_drift_condition_tags():
    assert validate_assumptions(builtin_model("logistic_feller")).tags["drift_condition"]
    # theta = 2 has mu'(x) > gamma nowhere, but |mu'| exceeds gamma past 1/sqrt(3)
    assert not validate_assumptions(builtin_model("gilpin_ayala_pow", {"theta": 2.0})).tags["drift_condition"]


@given(st.floats(0.2, 5.0), st.floats(0.2, 5.0), st.floats(0.1, 3.0))
def test_finite_difference_derivatives_match(gamma, x_c, sigma2):
    m = builtin_model("logistic_feller", {"gamma": gamma, "x_c": x_c, "sigma2": sigma2})
    rep = validate_assumptions(m)
    assert rep.usable
    assert math.isclose(m.gamma, gamma, rel_tol=1e-8)
    assert math.isclose(m.a_prime0, sigma2, rel_tol=1e-8)


@given(st.floats(0.3, 4.0))
def test_gilpin_ayala_lipschitz_probe_consistent(theta):
    m = builtin_model("gilpin_ayala_pow", {"theta": theta})
    tag = validate_assumptions(m).tags["drift_condition"]
    # mu'(x) = 1 - (1 + theta) x^theta on (0, 1): |mu'| <= 1 iff theta <= 1
    assert tag == (theta <= 1.0 + 1e-9)
