"""Generating-function iteration and exact moment recursions, types 1..N.

Everything is carried in deficiency space, q = 1 - H, so values near 1
never lose precision.  ``Q_n(s)`` is produced by n one-step compositions
``q -> 1 - h(1 - q)`` starting from ``Q_0 = 1 - s``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from bplab import _kernels as K
from bplab.laws import deficiency_eval, pgf_eval  # noqa: F401  (re-exported)
from bplab.model import ConstantEnvModel


@dataclass(frozen=True)
class DeficiencyVector:
    q: np.ndarray
    n: int


@dataclass(frozen=True)
class MomentTables:
    mean: np.ndarray  # m_il(n)
    second: np.ndarray  # b_ikl(n)
    n: int


def _initial_deficiency(model: ConstantEnvModel, s, q0) -> np.ndarray:
    if (s is None) == (q0 is None):
        raise ValueError("give exactly one of s or q0")
    if q0 is None:
        s = np.asarray(s, dtype=float).reshape(-1)
        if s.shape != (model.N,):
            raise ValueError(f"s must have length {model.N}")
        if np.any(s < 0) or np.any(s > 1):
            raise ValueError("s must lie in [0, 1]^N")
        q0 = 1.0 - s  # s == 1 gives an exact zero
    q0 = np.ascontiguousarray(q0, dtype=float).reshape(-1)
    if q0.shape != (model.N,):
        raise ValueError(f"q0 must have length {model.N}")
    if np.any(q0 < 0) or np.any(q0 > 1):
        raise ValueError("q0 must lie in [0, 1]^N")
    return q0


def iterate_deficiency(model: ConstantEnvModel, n: int, s=None, *, q0=None) -> DeficiencyVector:
    """Q_n(s) = 1 - H_n(s) for every start type.

    Pass ``q0 = 1 - s`` directly when the components of ``1 - s`` are below
    double resolution (e.g. ``n**-t`` for large t).
    """
    if n < 0:
        raise ValueError("n must be >= 0")
    q = _initial_deficiency(model, s, q0)
    return DeficiencyVector(K.iterate_final(model.packed(), q, int(n)), int(n))


def deficiency_path(model: ConstantEnvModel, n: int, s=None, *, q0=None) -> np.ndarray:
    """Array of shape (n + 1, N) whose row m is Q_m(s)."""
    if n < 0:
        raise ValueError("n must be >= 0")
    q = _initial_deficiency(model, s, q0)
    return K.iterate_path(model.packed(), q, int(n))


def survival_path(model: ConstantEnvModel, n: int) -> np.ndarray:
    """Rows m = 0..n of P(Z_m != 0 | Z_0 = e_i) = Q_m(0)."""
    return deficiency_path(model, n, q0=np.ones(model.N))


def mean_power(model: ConstantEnvModel, n: int) -> np.ndarray:
    """m_il(n) = (M^n)_il by repeated multiplication."""
    if n < 0:
        raise ValueError("n must be >= 0")
    out = np.eye(model.N)
    for _ in range(n):
        out = model.M @ out
    return out


def moment_tables(model: ConstantEnvModel, n: int) -> MomentTables:
    """Mean and second factorial moment tables at horizon n in one sweep."""
    if n < 0:
        raise ValueError("n must be >= 0")
    if not np.all(np.isfinite(model.b)):
        raise ValueError("second moments must be finite")
    mn, bn = K.moment_recursion(model.M, model.b, int(n))
    return MomentTables(mn, bn, int(n))


def second_moment_table(model: ConstantEnvModel, n: int) -> np.ndarray:
    """b_ikl(n) = E[Z_nk Z_nl - delta_kl Z_nl | Z_0 = e_i]."""
    return moment_tables(model, n).second


@dataclass(frozen=True)
class SandwichResult:
    holds: bool
    lower_margin: np.ndarray  # Q - (M - B), one entry per start type
    upper_margin: np.ndarray  # M - Q
    q: np.ndarray
    first_order: np.ndarray  # M_i(n; s)
    second_order: np.ndarray  # B_i(n; s)


def sandwich_check(model: ConstantEnvModel, n: int, s=None, *, q0=None, rtol: float = 0.0) -> SandwichResult:
    """Check M_i(n;s) - B_i(n;s) <= Q_n^{(i)}(s) <= M_i(n;s) for every start type.

    ``M_i = sum_l m_il(n)(1 - s_l)``, ``B_i = 1/2 sum_kl b_ikl(n)(1 - s_k)(1 - s_l)``.
    ``rtol`` allows a violation of that size relative to ``M_i`` (rounding).
    """
    q0 = _initial_deficiency(model, s, q0)
    tables = moment_tables(model, n)
    first = tables.mean @ q0
    second = 0.5 * np.einsum("ikl,k,l->i", tables.second, q0, q0)
    q = iterate_deficiency(model, n, q0=q0).q
    lower = q - (first - second)
    upper = first - q
    slack = rtol * first
    holds = bool(np.all(lower >= -slack) and np.all(upper >= -slack))
    return SandwichResult(holds, lower, upper, q, first, second)
