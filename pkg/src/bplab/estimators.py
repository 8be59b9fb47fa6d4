"""Hybrid (conditional Monte Carlo) and direct estimators for the full process.

The hybrid estimator simulates only the type-0 lineage.  Given the immigrant
counts ``Y_ki`` of a trajectory, the generating function of ``Z_n`` is known
exactly, ``E[s^{Z_n} | type 0] = exp R(n; s)`` with
``R(n; s) = sum_k sum_i Y_ki log H_{n-k}^{(i)}(s)``.  Averaging
``1 - exp R`` is therefore unbiased at every n and never samples types 1..N.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import partial
from typing import Sequence

import numpy as np

from bplab import _kernels as K
from bplab.envsim import (
    CENSORED,
    DEFAULT_POP_CAP,
    SATURATED,
    Type0Batch,
    _check_cap,
    simulate_full_batch,
)
from bplab.gf import deficiency_path, survival_path
from bplab.model import RandomEnvModel
from bplab.parallel import map_blocks
from bplab.rng import TYPE0_STREAM, as_streams

CONDITION_SE = 5.0  # conditioning probability must exceed this many SE


class UnreliableConditioningError(RuntimeError):
    """The conditioning event was estimated too close to probability zero."""


@dataclass(frozen=True)
class Estimate:
    value: float
    std_error: float
    reps: int
    capped_fraction: float


@dataclass(frozen=True)
class Query:
    """One hybrid target: horizon ``n`` and deficiency ``q0 = 1 - s``."""

    n: int
    q0: tuple

    @classmethod
    def make(cls, n: int, N: int, s=None, q0=None) -> "Query":
        if (s is None) == (q0 is None):
            raise ValueError("give exactly one of s or q0")
        if q0 is None:
            s = np.asarray(s, dtype=float).reshape(-1)
            if np.any(s < 0) or np.any(s > 1):
                raise ValueError("s must lie in [0, 1]^N")
            q0 = 1.0 - s
        q0 = np.asarray(q0, dtype=float).reshape(-1)
        if q0.shape != (N,):
            raise ValueError(f"expected a vector of length {N}")
        if np.any(q0 < 0) or np.any(q0 > 1):
            raise ValueError("1 - s must lie in [0, 1]^N")
        if n < 0:
            raise ValueError("n must be >= 0")
        return cls(int(n), tuple(float(v) for v in q0))


@dataclass
class HybridSample:
    """Sufficient statistics of the per-trajectory values for several queries.

    ``comoment`` is the sum of (v - mean)(v - mean)^T over trajectories.
    """

    queries: list
    mean: np.ndarray
    comoment: np.ndarray
    reps: int
    n_capped: int
    generations: int

    @property
    def capped_fraction(self) -> float:
        return self.n_capped / self.reps if self.reps else 0.0

    @property
    def cov(self) -> np.ndarray:
        """Covariance of the sample means."""
        r = self.reps
        if r < 2:
            return np.zeros_like(self.comoment)
        return self.comoment / ((r - 1) * r)

    def estimate(self, j: int) -> Estimate:
        se = math.sqrt(max(self.cov[j, j], 0.0))
        return Estimate(float(self.mean[j]), se, self.reps, self.capped_fraction)

    def _ratio(self, num: dict, den: int) -> tuple[float, np.ndarray]:
        m, cov = self.mean, self.cov
        d = m[den]
        se_d = math.sqrt(max(cov[den, den], 0.0))
        if not d > CONDITION_SE * se_d or d <= 0:
            raise UnreliableConditioningError(
                f"conditioning probability {d:.3g} is within {CONDITION_SE:g} SE ({se_d:.3g}) of zero"
            )
        a = np.zeros(len(m))
        for j, c in num.items():
            a[j] += c
        top = float(a @ m)
        grad = a / d
        grad[den] -= top / d**2
        return top / d, grad

    def linear_ratio(self, num: dict, den: int) -> Estimate:
        """Delta-method estimate of ``sum_j c_j F_j / F_den`` for ``num = {j: c_j}``."""
        ratio, grad = self._ratio(num, den)
        var = float(grad @ self.cov @ grad)
        return Estimate(ratio, math.sqrt(max(var, 0.0)), self.reps, self.capped_fraction)

    def ratio_difference(self, first: tuple, second: tuple) -> Estimate:
        """Estimate of ratio(first) - ratio(second); each argument is ``(num, den)``.

        The SE accounts for the shared trajectories.
        """
        r1, g1 = self._ratio(*first)
        r2, g2 = self._ratio(*second)
        g = g1 - g2
        var = float(g @ self.cov @ g)
        return Estimate(r1 - r2, math.sqrt(max(var, 0.0)), self.reps, self.capped_fraction)


def _log_h_table(model: RandomEnvModel, queries: Sequence[Query]) -> tuple[np.ndarray, np.ndarray]:
    rows, offsets, start = [], [], 0
    for q in queries:
        path = deficiency_path(model.constant, q.n, q0=np.array(q.q0))
        with np.errstate(divide="ignore"):
            rows.append(np.log1p(-path))
        offsets.append(start)
        start += q.n + 1
    return np.ascontiguousarray(np.concatenate(rows)), np.array(offsets, dtype=np.int64)


def _hybrid_task(task, model, horizons, offsets, log_h, pop_cap, streams):
    block, count = task
    gen = streams.generator(TYPE0_STREAM, block)
    return K.hybrid_block(gen, model.packed(), count, horizons, offsets, log_h, pop_cap)


def hybrid_sample(
    model: RandomEnvModel,
    queries: Sequence[Query],
    reps: int,
    seed,
    workers: int = 1,
    pop_cap: float = DEFAULT_POP_CAP,
) -> HybridSample:
    """Evaluate every query on the same type-0 trajectories (common random numbers)."""
    queries = list(queries)
    if not queries:
        raise ValueError("no queries")
    if reps < 1:
        raise ValueError("reps must be positive")
    streams = as_streams(seed)
    log_h, offsets = _log_h_table(model, queries)
    horizons = np.array([q.n for q in queries], dtype=np.int64)
    fn = partial(
        _hybrid_task, model=model, horizons=horizons, offsets=offsets, log_h=log_h,
        pop_cap=_check_cap(pop_cap), streams=streams,
    )
    parts = map_blocks(fn, streams.blocks(reps), workers)
    nq = len(queries)
    mean, comom = np.zeros(nq), np.zeros((nq, nq))
    count = n_capped = gens = 0
    for (_, size), (m, c, k, g) in zip(streams.blocks(reps), parts):
        # pairwise merge of centred moments, in block order
        total = count + size
        d = m - mean
        mean = mean + d * (size / total)
        comom = comom + c + np.outer(d, d) * (count * size / total)
        count = total
        n_capped += int(k)
        gens += int(g)
    return HybridSample(queries, mean, comom, int(reps), n_capped, gens)


def hybrid_functional(
    model: RandomEnvModel, n: int, s=None, *, q0=None, reps: int, seed,
    workers: int = 1, pop_cap: float = DEFAULT_POP_CAP,
) -> Estimate:
    """Unbiased estimate of E[1 - s_1^{Z_n1} ... s_N^{Z_nN}] from (X, Z)_0 = (1, 0)."""
    query = Query.make(n, model.N, s=s, q0=q0)
    return hybrid_sample(model, [query], reps, seed, workers, pop_cap).estimate(0)


def hybrid_nonextinction(
    model: RandomEnvModel, n: int, reps: int, seed, workers: int = 1, pop_cap: float = DEFAULT_POP_CAP
) -> Estimate:
    """P(Z_n != 0), the hybrid functional at s = 0."""
    return hybrid_functional(model, n, q0=np.ones(model.N), reps=reps, seed=seed, workers=workers, pop_cap=pop_cap)


# ---------------------------------------------------------------------------
# conditional (Yaglom-type) distribution functions
# ---------------------------------------------------------------------------

CONDITIONS = ("type1", "any")


def yaglom_deficiency(n: int, t) -> np.ndarray:
    """1 - s with s_l = 1 - n^{-t_l}, formed without the subtraction."""
    t = np.asarray(t, dtype=float).reshape(-1)
    if np.any(t <= 0):
        raise ValueError("t components must be positive")
    return np.power(float(n), -t)


def conditional_yaglom_cdf(
    model: RandomEnvModel,
    n: int,
    t_grid: Sequence,
    condition: str = "type1",
    reps: int = 10_000,
    seed=None,
    workers: int = 1,
    pop_cap: float = DEFAULT_POP_CAP,
    mode: str = "laplace",
) -> list[Estimate]:
    """Conditional distribution of (log Z_nl / log n)_l at each t of ``t_grid``.

    ``laplace`` reads the CDF through s_l = 1 - n^{-t_l}:

    * condition ``type1`` (Z_n1 > 0): [F(0, s_2..) - F(s)] / F(0, 1, .., 1)
    * condition ``any`` (Z_n != 0): 1 - F(s) / F(0)

    where F(s) = E[1 - s^{Z_n}].  All terms share one trajectory batch.
    ``direct`` simulates Z_n and counts Z_nl <= n^{t_l} for every l.
    """
    if condition not in CONDITIONS:
        raise ValueError(f"condition must be one of {CONDITIONS}")
    N = model.N
    t_grid = [np.asarray(t, dtype=float).reshape(-1) for t in t_grid]
    for t in t_grid:
        if t.shape != (N,):
            raise ValueError(f"each t must have length {N}")
        if np.any(t <= 0):
            raise ValueError("t components must be positive")
    if mode == "direct":
        return _direct_yaglom(model, n, t_grid, condition, reps, seed, workers, pop_cap)
    if mode != "laplace":
        raise ValueError("mode must be 'laplace' or 'direct'")

    sweep = yaglom_sweep(model, [n], t_grid, condition, reps, seed, workers, pop_cap)
    return [sweep.estimate(0, j) for j in range(len(t_grid))]


def _yaglom_layout(n: int, N: int, t_grid, condition: str, queries: list) -> list:
    """Append the queries for one horizon; return (num, den) per t."""
    den_q = np.zeros(N)
    den_q[0] = 1.0
    if condition == "any":
        den_q[:] = 1.0
    den = len(queries)
    queries.append(Query.make(n, N, q0=den_q))
    layout = []
    for t in t_grid:
        q = yaglom_deficiency(n, t)
        queries.append(Query.make(n, N, q0=q))
        j_s = len(queries) - 1
        if condition == "type1":
            q_head = q.copy()
            q_head[0] = 1.0
            queries.append(Query.make(n, N, q0=q_head))
            layout.append(({len(queries) - 1: 1.0, j_s: -1.0}, den))
        else:
            layout.append(({den: 1.0, j_s: -1.0}, den))
    return layout


@dataclass
class YaglomSweep:
    """Laplace-mode CDF read-outs for several horizons on one trajectory batch."""

    ns: list
    t_grid: list
    condition: str
    sample: HybridSample
    layout: list  # layout[i][j] = (num, den) for ns[i], t_grid[j]

    def estimate(self, i: int, j: int) -> Estimate:
        return self.sample.linear_ratio(*self.layout[i][j])

    def step(self, i: int, j: int) -> Estimate:
        """Change from ns[i - 1] to ns[i] at t_grid[j], with a paired SE."""
        return self.sample.ratio_difference(self.layout[i][j], self.layout[i - 1][j])


def yaglom_sweep(
    model: RandomEnvModel,
    ns: Sequence[int],
    t_grid: Sequence,
    condition: str = "type1",
    reps: int = 10_000,
    seed=None,
    workers: int = 1,
    pop_cap: float = DEFAULT_POP_CAP,
) -> YaglomSweep:
    """All horizons and t values share the trajectories (common random numbers)."""
    if condition not in CONDITIONS:
        raise ValueError(f"condition must be one of {CONDITIONS}")
    N = model.N
    t_grid = [np.asarray(t, dtype=float).reshape(-1) for t in t_grid]
    for t in t_grid:
        if t.shape != (N,) or np.any(t <= 0):
            raise ValueError(f"each t must hold {N} positive values")
    queries: list = []
    layout = [_yaglom_layout(int(n), N, t_grid, condition, queries) for n in ns]
    sample = hybrid_sample(model, queries, reps, seed, workers, pop_cap)
    return YaglomSweep([int(n) for n in ns], t_grid, condition, sample, layout)


def _direct_yaglom(model, n, t_grid, condition, reps, seed, workers, pop_cap) -> list[Estimate]:
    batch = simulate_full_batch(model, n, reps, seed, pop_cap, workers)
    Z = batch.Z
    cond = Z[:, 0] > 0 if condition == "type1" else np.any(Z > 0, axis=1)
    m = int(cond.sum())
    p = m / reps
    if m == 0 or p <= CONDITION_SE * math.sqrt(p * (1 - p) / reps):
        raise UnreliableConditioningError(f"only {m} of {reps} replicates satisfy the condition")
    out = []
    for t in t_grid:
        inside = np.all(Z <= np.power(float(n), t), axis=1)  # non-strict
        r = float(np.sum(inside & cond)) / m
        out.append(Estimate(r, math.sqrt(r * (1 - r) / m), reps, batch.capped_fraction))
    return out


# ---------------------------------------------------------------------------
# plug-in functional and direct baseline
# ---------------------------------------------------------------------------

SATURATION_EXPONENT = 36.0  # exp(-36) < 2.4e-16: the plug-in term is 1 to double precision


def corollary_F(model: RandomEnvModel, ns, batch: Type0Batch) -> list[Estimate]:
    """F(n) = E[1 - exp(-sum_i L_Ti Q_n^{(i)}(0))] for each n, from one batch.

    Trajectories stopped early (saturated, or censored at the horizon) only
    carry lower bounds on L_Ti; they are accepted when those bounds already
    make the exponent at least 36, and rejected otherwise.
    """
    ns = [int(v) for v in np.atleast_1d(ns)]
    if not ns:
        return []
    if batch.L_j.shape[1] != model.N:
        raise ValueError("batch does not match the model")
    path = survival_path(model.constant, max(ns))
    open_ = (batch.status == SATURATED) | (batch.status == CENSORED)
    out = []
    for n in ns:
        if n < 0:
            raise ValueError("n must be >= 0")
        expo = batch.L_j @ path[n]
        bad = open_ & (expo < SATURATION_EXPONENT)
        if np.any(bad & (batch.status == SATURATED)) or (np.any(bad) and batch.horizon < n):
            raise ValueError(
                f"{int(bad.sum())} trajectories stopped before their functionals were decisive at n={n}"
            )
        v = -np.expm1(-expo)
        se = float(v.std(ddof=1) / math.sqrt(len(v))) if len(v) > 1 else 0.0
        out.append(Estimate(float(v.mean()), se, batch.reps, batch.capped_fraction))
    return out


def direct_nonextinction(
    model: RandomEnvModel, n: int, reps: int, seed, condition: str = "any",
    workers: int = 1, pop_cap: float = DEFAULT_POP_CAP,
) -> Estimate:
    """Fraction of simulated replicates with Z_n != 0 (``any``), Z_n1 > 0
    (``type1``) or (X_n, Z_n) != 0 (``any_or_type0``), with binomial SE."""
    if reps < 1:
        raise ValueError("reps must be positive")
    batch = simulate_full_batch(model, n, reps, seed, pop_cap, workers)
    if condition == "any":
        hit = np.any(batch.Z > 0, axis=1)
    elif condition == "type1":
        hit = batch.Z[:, 0] > 0
    elif condition == "any_or_type0":
        hit = np.any(batch.Z > 0, axis=1) | (batch.X > 0)
    else:
        raise ValueError("condition must be 'any', 'type1' or 'any_or_type0'")
    p = float(hit.mean())
    return Estimate(p, math.sqrt(p * (1 - p) / reps), int(reps), batch.capped_fraction)
