import csv
import math

import numpy as np
import pytest

from bplab import gf, models, oracles
from bplab.envsim import (
    CENSORED,
    EXTINCT,
    Type0Trajectory,
    sample_environment,
    simulate_constant_batch,
    simulate_full,
    simulate_full_batch,
    simulate_type0,
    simulate_type0_batch,
    trajectory_functionals,
    write_trajectory_dump,
)
from bplab.laws import Deterministic, ExplicitTable, IndependentProduct, Poisson
from bplab.model import ConstantEnvModel, RandomEnvModel


def prod(*c):
    return IndependentProduct(list(c))


def two_point():
    return models.load("two_point_env").env


def fixed_env(law0, constant=None):
    constant = constant or ConstantEnvModel([prod(Poisson(1.0))])
    return RandomEnvModel(constant, [(1.0, law0)])


def small_env():
    """N=1 mixture small enough to enumerate two generations."""
    constant = ConstantEnvModel([ExplicitTable([[0], [2]], [0.5, 0.5])])
    good = ExplicitTable([[0, 1], [2, 0], [1, 1]], [0.3, 0.4, 0.3])
    bad = ExplicitTable([[0, 0], [1, 1]], [0.6, 0.4])
    return RandomEnvModel(constant, [(0.5, good), (0.5, bad)])


# --- environment ------------------------------------------------------------------


def test_environment_frequencies(rng):
    env = two_point()
    n = 100_000
    first = sum(sample_environment(env, rng) is env.states[0] for _ in range(n))
    assert abs(first / n - 0.5) <= 4 * math.sqrt(0.25 / n)


def test_lognormal_environment_means(rng):
    env = RandomEnvModel(ConstantEnvModel([prod(Poisson(1.0))]), sigma=0.5, law0=prod(Poisson(1.0), Poisson(0.3)))
    logs = np.array([math.log(sample_environment(env, rng).mu1) for _ in range(20_000)])
    assert abs(logs.mean()) <= 4 * 0.5 / math.sqrt(len(logs))
    assert logs.std() == pytest.approx(0.5, rel=0.05)


# --- type-0 trajectories -----------------------------------------------------------


def test_extinct_after_one_generation(rng):
    env = fixed_env(prod(Deterministic(0), Deterministic(1)))
    tr = simulate_type0(env, 10, rng)
    assert tr.T == 1 and not tr.censored
    np.testing.assert_array_equal(tr.X, [1, 0])
    np.testing.assert_array_equal(tr.Y, [[1]])
    assert tr.functionals.S == 1 and tr.functionals.L == 1


def test_never_extinct_is_censored(rng):
    env = fixed_env(prod(Deterministic(1), Deterministic(0)))
    tr = simulate_type0(env, 25, rng)
    assert tr.T is None and tr.censored
    assert tr.functionals.S == 25 and tr.functionals.A == 1 and tr.functionals.L == 0


def test_functionals_example():
    X = np.array([1, 2, 0])
    Y = np.array([[0, 1], [3, 0]])
    f = trajectory_functionals(Type0Trajectory(X, Y, None, False, False, None))
    assert f.T == 2
    assert (f.S, f.A, f.L, f.B) == (3, 2, 4, 3)
    assert f.L_j == (3, 1) and f.B_j == (3, 1)


def test_functionals_reject_life_after_extinction():
    X = np.array([1, 0, 2])
    Y = np.zeros((2, 1))
    with pytest.raises(ValueError):
        trajectory_functionals(Type0Trajectory(X, Y, None, False, False, None))


def test_trajectory_functionals_agree_with_stored_ones(rng):
    env = two_point()
    for _ in range(50):
        tr = simulate_type0(env, 200, rng)
        f = trajectory_functionals(tr)
        assert f == tr.functionals
        assert tr.censored == (tr.X[-1] > 0)


@pytest.mark.parametrize("cap", [0.5, 1e16])
def test_pop_cap_range(rng, cap):
    with pytest.raises(ValueError):
        simulate_type0(two_point(), 5, rng, pop_cap=cap)


# --- batches ------------------------------------------------------------------------


def test_batch_is_identical_for_any_worker_count():
    a = simulate_type0_batch(two_point(), 1000, 300, seed=7, workers=1)
    b = simulate_type0_batch(two_point(), 1000, 300, seed=7, workers=4)
    for name in ("gens", "status", "S", "A", "L", "B", "capped", "L_j", "B_j"):
        np.testing.assert_array_equal(getattr(a, name), getattr(b, name))


def test_batch_prefix_does_not_depend_on_reps():
    a = simulate_type0_batch(two_point(), 300, 100, seed=3)
    b = simulate_type0_batch(two_point(), 700, 100, seed=3)
    np.testing.assert_array_equal(a.S, b.S[:300])


def test_batch_statuses_and_alive_after():
    batch = simulate_type0_batch(two_point(), 2000, 50, seed=11)
    assert set(np.unique(batch.status)) <= {EXTINCT, CENSORED}
    assert np.all(batch.gens[batch.status == CENSORED] == 50)
    alive = [batch.alive_after(n).mean() for n in (1, 10, 50)]
    assert alive[0] >= alive[1] >= alive[2]
    with pytest.raises(ValueError):
        batch.alive_after(51)


def test_type0_survival_decays_like_inverse_sqrt():
    batch = simulate_type0_batch(two_point(), 20_000, 400, seed=5)
    p100, p400 = batch.alive_after(100).mean(), batch.alive_after(400).mean()
    assert p100 / p400 == pytest.approx(2.0, rel=0.15)


def test_dump_csv(tmp_path):
    batch = simulate_type0_batch(two_point(), 40, 30, seed=2)
    path = tmp_path / "dump.csv"
    write_trajectory_dump(batch, path)
    rows = list(csv.reader(path.open()))
    assert rows[0] == ["replicate", "T", "censored", "S_T", "A_T", "L_T1", "L_T2", "B_T"]
    assert len(rows) == 41
    for r, row in enumerate(rows[1:]):
        assert int(row[0]) == r
        assert (row[1] == "") == (row[2] == "1")


# --- full process ---------------------------------------------------------------------


def test_full_at_n_zero(rng):
    st = simulate_full(two_point(), 0, rng)
    assert st.X == 1.0 and np.all(st.Z == 0)


def test_full_batch_matches_enumeration():
    env = small_env()
    pmf = oracles.full_pmf(env, 2)
    reps = 40_000
    batch = simulate_full_batch(env, 2, reps, seed=9)
    sims = np.column_stack([batch.X, batch.Z])
    for coords in (None, [1], [0]):
        p = oracles.nonzero_probability(pmf, coords)
        sel = sims if coords is None else sims[:, coords]
        got = np.any(sel > 0, axis=1).mean()
        assert abs(got - p) <= 4 * math.sqrt(p * (1 - p) / reps) + 1e-12
    mean, _ = oracles.moments_from_pmf(pmf)
    sd = sims.std(axis=0) / math.sqrt(reps)
    assert np.all(np.abs(sims.mean(axis=0) - mean) <= 4 * sd + 1e-12)


def test_single_immigrant_reduces_to_constant_process():
    constant = models.load("mixed_n2").constant
    env = fixed_env(prod(Deterministic(0), Deterministic(1), Deterministic(0)), constant)
    reps, n = 20_000, 32
    batch = simulate_full_batch(env, n, reps, seed=4)
    got = np.any(batch.Z > 0, axis=1).mean()
    want = gf.survival_path(constant, n - 1)[-1, 0]
    assert abs(got - want) <= 4 * math.sqrt(want * (1 - want) / reps)


def test_constant_batch_matches_generating_function():
    constant = models.load("mixed_n2").constant
    reps, n = 20_000, 20
    Z = simulate_constant_batch(constant, n, 0, reps, seed=8)
    got = np.any(Z > 0, axis=1).mean()
    want = gf.survival_path(constant, n)[-1, 0]
    assert abs(got - want) <= 4 * math.sqrt(want * (1 - want) / reps)
    m = gf.mean_power(constant, n)[0]
    se = Z.std(axis=0) / math.sqrt(reps)
    assert np.all(np.abs(Z.mean(axis=0) - m) <= 4 * se)


def test_full_batch_worker_determinism():
    a = simulate_full_batch(two_point(), 30, 600, seed=1, workers=1)
    b = simulate_full_batch(two_point(), 30, 600, seed=1, workers=3)
    np.testing.assert_array_equal(a.X, b.X)
    np.testing.assert_array_equal(a.Z, b.Z)
