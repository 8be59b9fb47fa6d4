import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from bplab.laws import (
    Bernoulli,
    Deterministic,
    ExplicitTable,
    Geometric,
    IndependentProduct,
    LawError,
    LinearFractional,
    Poisson,
    deficiency_eval,
    law_from_dict,
    law_moments,
    pgf_eval,
    sample_offspring,
)


def prod(*comps):
    return IndependentProduct(list(comps))


# --- moments -----------------------------------------------------------------


@pytest.mark.parametrize(
    "law, mean, second",
    [
        (prod(Deterministic(1)), [1.0], [[0.0]]),
        (prod(Poisson(1.0)), [1.0], [[1.0]]),
        (prod(LinearFractional(1.0)), [1.0], [[2.0]]),
        (prod(Geometric(2.0)), [2.0], [[8.0]]),
        (prod(Bernoulli(0.3)), [0.3], [[0.0]]),
        (prod(Poisson(2.0), Bernoulli(0.5)), [2.0, 0.5], [[4.0, 1.0], [1.0, 0.0]]),
    ],
)
def test_law_moments_examples(law, mean, second):
    m, b = law_moments(law)
    np.testing.assert_allclose(m, mean, rtol=0, atol=1e-15)
    np.testing.assert_allclose(b, second, rtol=0, atol=1e-15)


def test_linear_fractional_has_mean_one_and_second_moment_2b():
    for b in (0.1, 0.5, 1.0, 3.0):
        m, s = law_moments(prod(LinearFractional(b)))
        assert m[0] == 1.0
        assert s[0, 0] == pytest.approx(2 * b, rel=1e-15)


def test_table_moments_match_brute_force_sums():
    support = [[0, 0], [2, 1], [1, 3]]
    probs = [0.2, 0.5, 0.3]
    m, b = law_moments(ExplicitTable(support, probs))
    x = np.array(support, dtype=float)
    p = np.array(probs)
    want_m = p @ x
    want_b = sum(pk * (np.outer(xk, xk) - np.diag(xk)) for pk, xk in zip(p, x))
    np.testing.assert_array_equal(m, want_m)
    np.testing.assert_allclose(b, want_b, rtol=0, atol=1e-15)


@pytest.mark.parametrize("bad", [dict(support=[[0], [1]], probs=[0.5, 0.6]), dict(support=[[0], [-1]], probs=[0.5, 0.5])])
def test_invalid_tables_rejected(bad):
    with pytest.raises(LawError):
        ExplicitTable(**bad)


def test_table_tolerance_is_1e_12():
    ExplicitTable([[0], [1]], [0.5, 0.5 + 5e-13])
    with pytest.raises(LawError):
        ExplicitTable([[0], [1]], [0.5, 0.5 + 5e-12])


@pytest.mark.parametrize("factory, value", [(Poisson, -1.0), (Bernoulli, 1.5), (LinearFractional, 0.0), (Geometric, -0.1)])
def test_component_parameters_checked(factory, value):
    with pytest.raises(LawError):
        factory(value)


# --- pgf and deficiency -------------------------------------------------------


@pytest.mark.parametrize(
    "law, s, want",
    [
        (prod(Deterministic(1)), [0.3], 0.3),
        (prod(Poisson(1.0)), [0.0], math.exp(-1.0)),
        (prod(LinearFractional(1.0), Poisson(0.7)), [0.0, 1.0], 0.5),
        (ExplicitTable([[0], [2]], [0.5, 0.5]), [0.5], 0.625),
    ],
)
def test_pgf_examples(law, s, want):
    assert pgf_eval(law, s) == pytest.approx(want, rel=1e-12)


def test_pgf_dimension_mismatch():
    with pytest.raises(ValueError):
        pgf_eval(prod(Poisson(1.0)), [0.1, 0.2])


@pytest.mark.parametrize(
    "law, q, want, rel",
    [
        (prod(LinearFractional(1.0)), [1e-8], 1e-8 / (1 + 1e-8), 1e-12),
        (prod(Poisson(1.0)), [0.5], -math.expm1(-0.5), 1e-12),
        (prod(Geometric(3.0)), [1e-9], 3e-9 / (1 + 3e-9), 1e-12),
        (prod(Deterministic(2)), [1e-10], 2e-10 - 1e-20, 1e-12),
        (prod(Bernoulli(0.25)), [1e-11], 0.25e-11, 1e-12),
    ],
)
def test_deficiency_examples(law, q, want, rel):
    assert deficiency_eval(law, q) == pytest.approx(want, rel=rel)


def test_deficiency_at_zero_is_zero():
    for law in (prod(LinearFractional(1.0), Poisson(0.7)), ExplicitTable([[0, 1], [2, 0]], [0.5, 0.5])):
        assert deficiency_eval(law, np.zeros(law.arity)) == 0.0


laws_1d = st.one_of(
    st.floats(0.05, 5.0).map(lambda b: prod(LinearFractional(b))),
    st.floats(0.05, 5.0).map(lambda l: prod(Poisson(l))),
    st.floats(0.05, 5.0).map(lambda m: prod(Geometric(m))),
    st.floats(0.0, 1.0).map(lambda p: prod(Bernoulli(p))),
    st.integers(0, 6).map(lambda k: prod(Deterministic(k))),
)


@given(laws_1d, st.floats(1e-12, 1e-6))
def test_parametric_deficiency_keeps_relative_precision(law, q):
    # oracle: first-order expansion with its second-order correction
    m, b = law_moments(law)
    approx = m[0] * q - 0.5 * b[0, 0] * q * q
    got = deficiency_eval(law, [q])
    if m[0] == 0:
        assert got == 0.0
    else:
        assert abs(got - approx) <= 1e-10 * abs(approx) + 10 * b[0, 0] * q**3


@given(laws_1d)
def test_pgf_at_one_is_exactly_one(law):
    assert pgf_eval(law, [1.0]) == 1.0


@given(laws_1d, st.floats(0.0, 1.0), st.floats(0.0, 1.0))
def test_pgf_monotone(law, a, b):
    lo, hi = sorted((a, b))
    assert pgf_eval(law, [lo]) <= pgf_eval(law, [hi]) + 1e-15


@pytest.mark.parametrize(
    "law",
    [
        prod(LinearFractional(1.0), Poisson(0.7)),
        prod(Geometric(0.5), Bernoulli(0.2), Deterministic(2)),
        ExplicitTable([[0, 0, 0], [2, 0, 0], [0, 1, 0], [1, 1, 2]], [0.25, 0.25, 0.25, 0.25]),
    ],
)
def test_pgf_gradient_at_one_is_the_mean(law):
    m, _ = law_moments(law)
    eps = 1e-6
    for j in range(law.arity):
        s = np.ones(law.arity)
        s[j] -= eps
        fd = (1.0 - pgf_eval(law, s)) / eps
        assert fd == pytest.approx(m[j], abs=1e-5 * max(1.0, m[j]))


# --- sampling ------------------------------------------------------------------


def test_deterministic_sample(rng):
    law = prod(Deterministic(3))
    assert all(sample_offspring(law, rng)[0] == 3 for _ in range(100))


def test_table_sample_frequency(rng):
    law = ExplicitTable([[0], [2]], [0.5, 0.5])
    n = 10**6
    hits = sum(int(sample_offspring(law, rng)[0] == 2) for _ in range(n))
    se = math.sqrt(0.25 / n)
    assert abs(hits / n - 0.5) <= 4 * se


def test_linear_fractional_sample_mean(rng):
    law = prod(LinearFractional(1.0))
    n = 10**6
    x = np.array([sample_offspring(law, rng)[0] for _ in range(n)], dtype=float)
    se = math.sqrt(2.0 / n)  # variance 2b + 1 - 1 = 2
    assert abs(x.mean() - 1.0) <= 4 * se


# --- JSON schema ---------------------------------------------------------------


@pytest.mark.parametrize(
    "doc",
    [
        {"type": "product", "components": [{"dist": "linear_fractional", "b": 1.0}, {"dist": "poisson", "lam": 0.7}]},
        {"type": "product", "components": [{"dist": "geometric", "mean": 2.0}, {"dist": "bernoulli", "p": 0.5},
                                           {"dist": "deterministic", "k": 2}]},
        {"type": "table", "support": [[0, 0], [2, 1]], "probs": [0.25, 0.75]},
    ],
)
def test_law_round_trip(doc):
    assert law_from_dict(doc).to_dict() == doc


@pytest.mark.parametrize(
    "doc",
    [
        {"type": "product", "components": [{"dist": "poisson", "lam": 1.0, "extra": 1}]},
        {"type": "product", "components": [{"dist": "binomial", "n": 3}]},
        {"type": "table", "support": [[0]], "probs": [1.0], "note": "x"},
        {"type": "mixture"},
    ],
)
def test_law_schema_rejects_unknown(doc):
    with pytest.raises(LawError):
        law_from_dict(doc)
