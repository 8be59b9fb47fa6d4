"""Simulation of the random environment, the type-0 lineage and the full process."""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from functools import partial
from typing import Sequence

import numpy as np

from bplab import _kernels as K
from bplab.laws import IndependentProduct, Poisson, Geometric
from bplab.model import ConstantEnvModel, EnvironmentState, RandomEnvModel
from bplab.parallel import map_blocks
from bplab.rng import CONSTANT_STREAM, TYPE0_STREAM, TYPES_STREAM, as_streams

DEFAULT_POP_CAP = 1e8
MAX_POP_CAP = 1e15  # exact aggregated draws stay within int64 / double range


def _check_cap(pop_cap: float) -> float:
    pop_cap = float(pop_cap)
    if not 1.0 <= pop_cap <= MAX_POP_CAP:
        raise ValueError(f"pop_cap must lie in [1, {MAX_POP_CAP:g}], got {pop_cap:g}")
    return pop_cap


def sample_environment(model: RandomEnvModel, rng: np.random.Generator) -> EnvironmentState:
    """Draw one environment state."""
    if model.is_family:
        template = model.states[0].law0
        mean = math.exp(model.sigma * rng.standard_normal())
        first = template.components[0]
        comp = Poisson(mean) if isinstance(first, Poisson) else Geometric(mean)
        return EnvironmentState(IndependentProduct([comp, *template.components[1:]]))
    idx = rng.choice(len(model.states), p=model.weights)
    return model.states[idx]


# ---------------------------------------------------------------------------
# single trajectories
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Functionals:
    T: int | None  # None when censored at the horizon
    S: float  # sum of X_k, k < T
    A: float  # max of X_k, k < T
    L: float  # total type 1..N immigrants
    L_j: tuple  # per type
    B: float  # max_k ||Y_k||
    B_j: tuple


@dataclass(frozen=True)
class Type0Trajectory:
    """X_0..X_len and Y_1..Y_len (``Y[k - 1]`` is Y_k)."""

    X: np.ndarray
    Y: np.ndarray
    T: int | None
    censored: bool
    capped: bool
    functionals: Functionals


def trajectory_functionals(traj: Type0Trajectory) -> Functionals:
    """Recompute S, A, L, B and their per-type versions from the stored sequences."""
    X, Y = np.asarray(traj.X, dtype=float), np.asarray(traj.Y, dtype=float)
    length = len(Y)
    if len(X) != length + 1:
        raise ValueError("X must be one longer than Y")
    T = None
    for k in range(1, len(X)):
        if X[k] == 0:
            T = k
            break
    if T is not None and T != length:
        raise ValueError("trajectory continues after extinction")
    past = X[:length]
    norms = Y.sum(axis=1) if length else np.zeros(0)
    N = Y.shape[1] if Y.ndim == 2 else 0
    return Functionals(
        T=T,
        S=float(past.sum()),
        A=float(past.max()) if length else 0.0,
        L=float(norms.sum()),
        L_j=tuple(float(v) for v in (Y.sum(axis=0) if length else np.zeros(N))),
        B=float(norms.max()) if length else 0.0,
        B_j=tuple(float(v) for v in (Y.max(axis=0) if length else np.zeros(N))),
    )


def simulate_type0(
    model: RandomEnvModel, horizon: int, rng: np.random.Generator, pop_cap: float = DEFAULT_POP_CAP
) -> Type0Trajectory:
    """Simulate type-0 generations 1..min(T, horizon), one environment per generation."""
    if horizon < 0:
        raise ValueError("horizon must be >= 0")
    X, Y, length, capped = K.type0_path(rng, model.packed(), int(horizon), _check_cap(pop_cap))
    Y = Y[1:]
    censored = bool(X[-1] > 0)
    traj = Type0Trajectory(X, Y, None, censored, bool(capped), None)  # type: ignore[arg-type]
    f = trajectory_functionals(traj)
    return Type0Trajectory(X, Y, f.T, censored, bool(capped), f)


# ---------------------------------------------------------------------------
# batches
# ---------------------------------------------------------------------------

EXTINCT, CENSORED, SATURATED = 0, 1, 2


@dataclass
class Type0Batch:
    """Path functionals of many type-0 trajectories, replicate-ordered.

    ``status`` is EXTINCT (T = gens), CENSORED (reached the horizon) or
    SATURATED (stopped once every tracked functional exceeded ``stop_at``;
    the stored values are then lower bounds).
    """

    gens: np.ndarray
    status: np.ndarray
    S: np.ndarray
    A: np.ndarray
    L: np.ndarray
    B: np.ndarray
    capped: np.ndarray
    L_j: np.ndarray
    B_j: np.ndarray
    horizon: int
    stop_at: float

    @property
    def reps(self) -> int:
        return len(self.gens)

    @property
    def capped_fraction(self) -> float:
        return float(self.capped.mean()) if self.reps else 0.0

    def alive_after(self, n: int) -> np.ndarray:
        """Indicator of X_n > 0 (requires n <= horizon and no saturation stop before n)."""
        if n > self.horizon:
            raise ValueError("n beyond the simulated horizon")
        undecided = (self.status == SATURATED) & (self.gens < n)
        if np.any(undecided):
            raise ValueError("some trajectories stopped before n; rerun with stop_at=inf")
        return (self.status != EXTINCT) | (self.gens > n)


def _type0_task(task, model, horizon, pop_cap, stop_at, streams):
    block, count = task
    gen = streams.generator(TYPE0_STREAM, block)
    return K.type0_functionals_block(gen, model.packed(), count, horizon, pop_cap, stop_at)


def simulate_type0_batch(
    model: RandomEnvModel,
    reps: int,
    horizon: int,
    seed,
    pop_cap: float = DEFAULT_POP_CAP,
    stop_at: float = math.inf,
    workers: int = 1,
) -> Type0Batch:
    streams = as_streams(seed)
    fn = partial(
        _type0_task, model=model, horizon=int(horizon), pop_cap=_check_cap(pop_cap),
        stop_at=float(stop_at), streams=streams,
    )
    parts = map_blocks(fn, streams.blocks(reps), workers)
    N = model.N
    res = np.concatenate(parts) if parts else np.zeros((0, 7 + 2 * N))
    return Type0Batch(
        gens=res[:, 0].astype(np.int64),
        status=res[:, 1].astype(np.int64),
        S=res[:, 2],
        A=res[:, 3],
        L=res[:, 4],
        B=res[:, 5],
        capped=res[:, 6].astype(bool),
        L_j=res[:, 7 : 7 + N],
        B_j=res[:, 7 + N : 7 + 2 * N],
        horizon=int(horizon),
        stop_at=float(stop_at),
    )


def write_trajectory_dump(batch: Type0Batch, path) -> None:
    """CSV: replicate, T, censored, S_T, A_T, L_T1..L_TN, B_T."""
    N = batch.L_j.shape[1]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["replicate", "T", "censored", "S_T", "A_T", *[f"L_T{j + 1}" for j in range(N)], "B_T"])
        for r in range(batch.reps):
            ext = batch.status[r] == EXTINCT
            w.writerow(
                [r, int(batch.gens[r]) if ext else "", int(not ext), f"{batch.S[r]:.12g}", f"{batch.A[r]:.12g}",
                 *[f"{v:.12g}" for v in batch.L_j[r]], f"{batch.B[r]:.12g}"]
            )


@dataclass(frozen=True)
class FullState:
    X: float
    Z: np.ndarray
    capped: bool = False


def simulate_full(model: RandomEnvModel, n: int, rng, pop_cap: float = DEFAULT_POP_CAP) -> FullState:
    """(X_n, Z_n) of the full (N+1)-type process started from (1, 0).

    ``rng`` is a Generator, or a pair (type-0 generator, types 1..N generator).
    """
    if n < 0:
        raise ValueError("n must be >= 0")
    g0, g1 = rng if isinstance(rng, (tuple, list)) else (rng, rng)
    X, Z, capped = K.full_block(g0, g1, model.packed(), model.constant.packed(), 1, int(n), _check_cap(pop_cap))
    return FullState(float(X[0]), Z[0].copy(), bool(capped[0]))


@dataclass
class FullBatch:
    X: np.ndarray
    Z: np.ndarray
    capped: np.ndarray
    n: int

    @property
    def capped_fraction(self) -> float:
        return float(self.capped.mean()) if len(self.X) else 0.0


def _full_task(task, model, n, pop_cap, streams):
    block, count = task
    g0 = streams.generator(TYPE0_STREAM, block)
    g1 = streams.generator(TYPES_STREAM, block)
    return K.full_block(g0, g1, model.packed(), model.constant.packed(), count, n, pop_cap)


def simulate_full_batch(
    model: RandomEnvModel, n: int, reps: int, seed, pop_cap: float = DEFAULT_POP_CAP, workers: int = 1
) -> FullBatch:
    streams = as_streams(seed)
    fn = partial(_full_task, model=model, n=int(n), pop_cap=_check_cap(pop_cap), streams=streams)
    parts = map_blocks(fn, streams.blocks(reps), workers)
    X = np.concatenate([p[0] for p in parts])
    Z = np.concatenate([p[1] for p in parts])
    capped = np.concatenate([p[2] for p in parts]).astype(bool)
    return FullBatch(X, Z, capped, int(n))


def _constant_task(task, model, n, start, pop_cap, streams):
    block, count = task
    gen = streams.generator(CONSTANT_STREAM, block)
    return K.constant_block(gen, model.packed(), count, n, start, pop_cap)


def simulate_constant_batch(
    model: ConstantEnvModel, n: int, start: int, reps: int, seed,
    pop_cap: float = DEFAULT_POP_CAP, workers: int = 1,
) -> np.ndarray:
    """Z_n for replicates of the constant-environment process from e_start (0-based)."""
    streams = as_streams(seed)
    fn = partial(_constant_task, model=model, n=int(n), start=int(start), pop_cap=_check_cap(pop_cap), streams=streams)
    return np.concatenate(map_blocks(fn, streams.blocks(reps), workers))
