"""Series diagnostics and closed-form limit laws.

Fits and verdicts here are deliberately simple: log-log least squares,
plateaus of ``p(x) log x``, and max/min envelope ratios.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from bplab.gf import iterate_deficiency
from bplab.model import ConstantEnvModel


class InsufficientRangeError(ValueError):
    """The abscissae do not span enough decades."""


class BoundaryRegimeError(ValueError):
    """The point lies on a regime boundary where no limit is stated."""


class ConditionViolatedError(ValueError):
    """An input falls outside the hypotheses of the corresponding statement."""


# ---------------------------------------------------------------------------
# fits and plateaus
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SeriesFit:
    points: tuple
    slope: float
    intercept: float
    max_residual: float


def _xy(points) -> tuple[np.ndarray, np.ndarray]:
    arr = np.asarray(points, dtype=float)
    if arr.ndim != 2 or arr.shape[1] != 2:
        raise ValueError("points must be (x, y) pairs")
    return arr[:, 0], arr[:, 1]


def fit_log_slope(points) -> SeriesFit:
    """Least-squares line through (log x, log y)."""
    x, y = _xy(points)
    if len(x) < 3:
        raise ValueError("at least 3 points are needed")
    if np.any(x <= 0) or np.any(np.diff(x) <= 0):
        raise ValueError("x must be positive and strictly increasing")
    if np.any(y <= 0):
        raise ValueError("y must be positive")
    lx, ly = np.log(x), np.log(y)
    slope, intercept = np.polyfit(lx, ly, 1)
    resid = ly - (slope * lx + intercept)
    pts = tuple((float(a), float(b)) for a, b in zip(x, y))
    return SeriesFit(pts, float(slope), float(intercept), float(np.max(np.abs(resid))))


@dataclass(frozen=True)
class Plateau:
    value: float  # K-hat
    dispersion: float  # max/min of p(x) log x
    scaled: tuple  # p(x) log x per grid point


MIN_DECADES = 3.0


def plateau_estimate(points, trim: int = 0) -> Plateau:
    """K-hat = mean of p(x) log x; ``trim`` drops that many extremes at each end."""
    x, p = _xy(points)
    if len(x) == 0 or np.any(x <= 1):
        raise ValueError("x must exceed 1")
    if math.log10(x.max() / x.min()) < MIN_DECADES - 1e-9:
        raise InsufficientRangeError(f"grid spans {math.log10(x.max() / x.min()):.2f} decades, need 3")
    scaled = p * np.log(x)
    kept = np.sort(scaled)[trim : len(scaled) - trim] if trim else scaled
    if len(kept) == 0:
        raise ValueError("trim removes every point")
    lo = scaled.min()
    disp = float(scaled.max() / lo) if lo > 0 else math.inf
    return Plateau(float(kept.mean()), disp, tuple(float(v) for v in scaled))


# ---------------------------------------------------------------------------
# regime exponents and envelopes
# ---------------------------------------------------------------------------


def regime_exponent(t1: float, t2: float) -> float:
    """Decay exponent of 1 - H_n^{(1,2)}(s) with 1 - s_l = n^{-t_l}, N = 2."""
    if t1 <= 0 or t2 <= 0:
        raise ValueError("t1 and t2 must be positive")
    if t2 in (1.0, 2.0) or (t2 >= 2 and t1 == 1.0):
        raise BoundaryRegimeError(f"({t1:g}, {t2:g}) lies on a regime boundary")
    if t2 < 1:
        return 0.5
    if t2 < 2:
        return t2 / 2
    if t1 < 1:
        return 1.0
    return 1.0 + min(t1 - 1, t2 - 2)


@dataclass(frozen=True)
class ExponentN:
    gamma: float
    two_sided: bool  # False: only the upper bound n^{-gamma} is asserted


def regime_exponent_N(i: int, t: Sequence[float]) -> ExponentN:
    """min over l = i..N of (t_l - l + i), types numbered from 1."""
    t = [float(v) for v in t]
    N = len(t)
    if not 1 <= i <= N:
        raise ValueError(f"type index must lie in 1..{N}")
    gamma = min(t[l - 1] - l + i for l in range(i, N + 1))
    return ExponentN(float(gamma), gamma >= 1.0)


@dataclass(frozen=True)
class RegimeVerdict:
    label: str
    gamma: float
    ratios: tuple  # y_n n^gamma
    max_min_ratio: float
    threshold: float
    passed: bool


def envelope_check(ns, ys, gamma: float, threshold: float = 10.0, label: str = "") -> RegimeVerdict:
    """Pass when y_n n^gamma stays within a factor ``threshold`` over the grid."""
    ns = np.asarray(ns, dtype=float)
    ys = np.asarray(ys, dtype=float)
    if ns.shape != ys.shape or len(ns) == 0:
        raise ValueError("ns and ys must be non-empty and of equal length")
    if np.any(ys <= 0):
        raise ValueError("y must be positive")
    r = ys * ns**gamma
    mm = float(r.max() / r.min())
    return RegimeVerdict(label, float(gamma), tuple(float(v) for v in r), mm, float(threshold), mm <= threshold)


# ---------------------------------------------------------------------------
# limit laws
# ---------------------------------------------------------------------------


def limit_cdf_G(t: Sequence[float]) -> float:
    """Limit CDF of (log Z_nl / log n)_l given Z_n1 > 0."""
    t = np.asarray(t, dtype=float).reshape(-1)
    if len(t) == 0 or np.any(t <= 0):
        raise ValueError("t components must be positive")
    m = float(np.min(t - np.arange(1, len(t) + 1)))
    return 1.0 - 1.0 / (1.0 + max(0.0, m))


def regime_constant_C(t1: float, t2: float) -> float:
    """C(t1, t2); coincides with the two-type decay exponent."""
    if t1 < 0 or t2 < 0:
        raise ValueError("t1 and t2 must be non-negative")
    if t1 == 0 or t2 == 0:
        # the tables extend to zero coordinates with the same formulas
        if t2 in (1.0, 2.0):
            raise BoundaryRegimeError(f"({t1:g}, {t2:g}) lies on a regime boundary")
        if t2 < 1:
            return 0.5
        if t2 < 2:
            return t2 / 2
        return 1.0
    return regime_exponent(t1, t2)


def limit_cdf_A(t1: float, t2: float) -> float:
    """Limit CDF of (log Z_n1, log Z_n2) / log n given Z_n != 0, N = 2."""
    c = regime_constant_C(t1, t2)
    if t2 < 1:
        return 0.0
    return 1.0 - 1.0 / (2.0 * c)


# ---------------------------------------------------------------------------
# single-term approximation
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SingleTermVerdict:
    ns: tuple
    ratios: tuple
    final_in_band: bool
    monotone: bool
    passed: bool


BAND = (0.8, 1.25)
TREND_SLACK = 0.01


def lemma_singleterm_check(model: ConstantEnvModel, r: int, t_tail: Sequence[float], n_grid) -> SingleTermVerdict:
    """Ratio Q_n^{(1)}(0^{(r)}, s_{r+1}) / Q_n^{(1)}(0^{(r)}, 1) along ``n_grid``.

    ``t_tail`` holds t_{r+1}, .., t_N and 1 - s_l = n^{-t_l}.  The
    denominator is the probability that one of types 1..r is present at n.
    Verdict: last ratio inside [0.8, 1.25] and |log ratio| non-increasing
    along the grid up to a slack of 0.01.
    """
    N = model.N
    t_tail = [float(v) for v in t_tail]
    if not 1 <= r <= N or len(t_tail) != N - r:
        raise ValueError(f"need 1 <= r <= {N} and {N - r} tail exponents")
    if t_tail:
        m = min(t_tail[j] - (r + 1 + j) + 1 for j in range(len(t_tail)))
        if not m > 2.0 ** (-(r - 1)):
            raise ConditionViolatedError(f"min(t_l - l + 1) = {m:g} must exceed 2^-(r-1) = {2.0 ** -(r - 1):g}")
    ratios = []
    for n in n_grid:
        head = np.ones(N)
        q_num = head.copy()
        q_num[r:] = np.power(float(n), -np.asarray(t_tail)) if t_tail else 0.0
        q_den = head.copy()
        q_den[r:] = 0.0
        num = iterate_deficiency(model, int(n), q0=q_num).q[0]
        den = iterate_deficiency(model, int(n), q0=q_den).q[0]
        ratios.append(float(num / den))
    dev = np.abs(np.log(ratios))
    monotone = bool(np.all(np.diff(dev) <= TREND_SLACK))
    band = bool(BAND[0] <= ratios[-1] <= BAND[1])
    return SingleTermVerdict(tuple(int(n) for n in n_grid), tuple(ratios), band, monotone, band and monotone)
