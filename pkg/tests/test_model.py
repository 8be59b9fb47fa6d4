import math

import numpy as np
import pytest

from bplab import models
from bplab.laws import Deterministic, ExplicitTable, IndependentProduct, LinearFractional, Poisson
from bplab.model import (
    ConstantEnvModel,
    EnvironmentState,
    ModelError,
    RandomEnvModel,
    model_from_dict,
    single_type_lf,
    validate_constant_model,
    validate_random_env_model,
)


def prod(*c):
    return IndependentProduct(list(c))


def failing(report):
    return [c.name for c in report.failures]


def two_type(m12=0.7, m11=1.0):
    if m11 == 1.0:
        first = prod(LinearFractional(1.0), Poisson(m12)) if m12 > 0 else prod(LinearFractional(1.0), Deterministic(0))
    else:
        first = prod(Poisson(m11), Poisson(m12))
    return ConstantEnvModel([first, prod(Poisson(1.0))])


def env_model(weights=(0.5, 0.5), mus=(2.0, 0.5), theta1=(0.25, 0.25)):
    constant = two_type()
    states = [
        (w, EnvironmentState(prod(Poisson(mu), Poisson(t1), Poisson(0.1))))
        if t1 > 0 else (w, EnvironmentState(prod(Poisson(mu), Deterministic(0), Poisson(0.1))))
        for w, mu, t1 in zip(weights, mus, theta1)
    ]
    return RandomEnvModel(constant, states)


# --- constant model --------------------------------------------------------


def test_derived_mean_matrix_and_second_moments():
    m = two_type()
    np.testing.assert_allclose(m.M, [[1.0, 0.7], [0.0, 1.0]])
    assert m.b[0, 0, 0] == 2.0
    assert m.b[0, 0, 1] == pytest.approx(0.7)
    assert m.b[0, 1, 1] == pytest.approx(0.49)
    assert m.b[1, 1, 1] == 1.0
    np.testing.assert_allclose(m.b_half_var, [1.0, 0.5])


def test_lf_single_passes():
    assert validate_constant_model(single_type_lf(1.0)).ok


def test_missing_type_ordering_fails():
    rep = validate_constant_model(two_type(m12=0.0))
    assert failing(rep) == ["m_1,2 > 0 (complete type ordering)"]


def test_subcritical_type_fails_criticality():
    rep = validate_constant_model(two_type(m11=0.9))
    assert failing(rep) == ["criticality m_11 = 1"]
    bad = [c for c in rep.checks if c.name == "criticality m_11 = 1"][0]
    assert bad.value == pytest.approx(0.9)


def test_zero_variance_fails_b_check():
    m = ConstantEnvModel([prod(Deterministic(1))])
    assert failing(validate_constant_model(m)) == ["b_1 = Var(eta_11)/2 in (0, inf)"]


def test_arity_mismatch_raises():
    with pytest.raises(ModelError):
        ConstantEnvModel([prod(Poisson(1.0)), prod(Poisson(1.0))])


def test_reports_are_deterministic():
    a = validate_constant_model(two_type()).to_dict()
    b = validate_constant_model(two_type()).to_dict()
    assert a == b


# --- random environment ----------------------------------------------------


def test_symmetric_two_point_passes():
    rep = validate_random_env_model(env_model(), tol=1e-9)
    assert rep.ok, rep.lines()


def test_skewed_weights_fail_criticality():
    rep = validate_random_env_model(env_model(weights=(0.6, 0.4)), tol=1e-9)
    names = failing(rep)
    assert names == ["|E log mu1| <= tol (critical environment)"]
    value = [c.value for c in rep.checks if c.name == names[0]][0]
    assert value == pytest.approx(0.2 * math.log(2.0), rel=1e-12)


def test_theta1_zero_fails():
    rep = validate_random_env_model(env_model(theta1=(0.25, 0.0)))
    assert failing(rep) == ["P(theta_1 > 0) = 1"]


def test_degenerate_environment_fails_log_variance():
    rep = validate_random_env_model(env_model(mus=(1.0, 1.0)))
    assert "E log^2 mu1 in (0, inf)" in failing(rep)


def test_weights_must_sum_to_one():
    with pytest.raises(ModelError):
        env_model(weights=(0.5, 0.4))


def test_environment_state_moments():
    st = EnvironmentState(prod(Poisson(2.0), Poisson(0.25), Poisson(0.1)))
    assert st.mu1 == 2.0 and st.mu2 == 4.0
    np.testing.assert_allclose(st.theta, [0.25, 0.1])
    assert st.Theta1 == pytest.approx(0.35)


def test_lognormal_family_expectations():
    law0 = prod(Poisson(1.0), Poisson(0.5))
    env = RandomEnvModel(single_type_lf(), sigma=0.5, law0=law0)
    ex = env.expectations()
    assert ex["E log mu1"] == 0.0
    assert ex["E log^2 mu1"] == pytest.approx(0.25)
    assert ex["E mu1^-1"] == pytest.approx(math.exp(0.125))
    assert validate_random_env_model(env).ok


# --- documents ---------------------------------------------------------------


@pytest.mark.parametrize("name", models.NAMES)
def test_shipped_models_validate_and_round_trip(name):
    spec = models.load(name)
    assert spec.validate().ok, spec.validate().lines()
    again = model_from_dict(spec.to_dict())
    assert again.to_dict() == spec.to_dict()


def test_unknown_model_field_rejected():
    doc = models.load("lf_single").to_dict()
    doc["horizion"] = 3
    with pytest.raises(ModelError, match="horizion"):
        model_from_dict(doc)


def test_table_model_matches_documented_laws():
    spec = models.load("tables_n3")
    law1 = spec.constant.laws[0]
    assert isinstance(law1, ExplicitTable)
    np.testing.assert_allclose(spec.constant.M, [[1.0, 0.25, 0.0], [0.0, 1.0, 0.25], [0.0, 0.0, 1.0]])
