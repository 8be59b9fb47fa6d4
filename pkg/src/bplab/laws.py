"""Offspring laws with exact pgf, deficiency, factorial moments and sampling.

A law describes the joint distribution of a child-count vector.  Two
variants exist: an explicit finite table, and an independent product of
univariate parametric laws.  Every law can be packed into flat arrays for
the compiled kernels (see :mod:`bplab._kernels`).
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence, Union

import numpy as np

from bplab import _kernels as K

PROB_TOL = 1e-12


class MomentUndefinedError(ValueError):
    """Raised when a law cannot represent a finite second moment."""


class LawError(ValueError):
    """Raised for malformed law parameters."""


# ---------------------------------------------------------------------------
# univariate components
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Deterministic:
    k: int

    kind = K.DETERMINISTIC

    def __post_init__(self):
        if int(self.k) != self.k or self.k < 0:
            raise LawError(f"Deterministic count must be a non-negative integer, got {self.k}")

    @property
    def param(self) -> float:
        return float(self.k)

    @property
    def mean(self) -> float:
        return float(self.k)

    @property
    def second_factorial(self) -> float:
        return float(self.k * (self.k - 1))

    def pgf(self, s: float) -> float:
        return s ** self.k

    def sample(self, rng: np.random.Generator) -> int:
        return int(self.k)


@dataclass(frozen=True)
class Bernoulli:
    p: float

    kind = K.BERNOULLI

    def __post_init__(self):
        if not 0.0 <= self.p <= 1.0:
            raise LawError(f"Bernoulli p must lie in [0, 1], got {self.p}")

    @property
    def param(self) -> float:
        return float(self.p)

    @property
    def mean(self) -> float:
        return float(self.p)

    @property
    def second_factorial(self) -> float:
        return 0.0

    def pgf(self, s: float) -> float:
        return 1.0 - self.p + self.p * s

    def sample(self, rng: np.random.Generator) -> int:
        return int(rng.random() < self.p)


@dataclass(frozen=True)
class Poisson:
    lam: float

    kind = K.POISSON

    def __post_init__(self):
        if not (self.lam >= 0.0 and math.isfinite(self.lam)):
            raise LawError(f"Poisson rate must be finite and >= 0, got {self.lam}")

    @property
    def param(self) -> float:
        return float(self.lam)

    @property
    def mean(self) -> float:
        return float(self.lam)

    @property
    def second_factorial(self) -> float:
        return float(self.lam) ** 2

    def pgf(self, s: float) -> float:
        return math.exp(self.lam * (s - 1.0))

    def sample(self, rng: np.random.Generator) -> int:
        return int(rng.poisson(self.lam))


@dataclass(frozen=True)
class Geometric:
    """Geometric law on {0, 1, ...} parameterized by its mean."""

    mean_value: float

    kind = K.GEOMETRIC

    def __post_init__(self):
        if not (self.mean_value >= 0.0 and math.isfinite(self.mean_value)):
            raise LawError(f"Geometric mean must be finite and >= 0, got {self.mean_value}")

    @property
    def param(self) -> float:
        return float(self.mean_value)

    @property
    def mean(self) -> float:
        return float(self.mean_value)

    @property
    def second_factorial(self) -> float:
        return 2.0 * float(self.mean_value) ** 2

    def pgf(self, s: float) -> float:
        return 1.0 / (1.0 + self.mean_value * (1.0 - s))

    def sample(self, rng: np.random.Generator) -> int:
        if self.mean_value == 0.0:
            return 0
        return int(rng.geometric(1.0 / (1.0 + self.mean_value))) - 1


@dataclass(frozen=True)
class LinearFractional:
    """Critical linear-fractional law: mean 1, second factorial moment 2b.

    ``1 - h(s) = (1 - s) / (1 + b (1 - s))``; P(0) = b/(1+b) and, for
    k >= 1, P(k) = (1+b)^-2 (b/(1+b))^(k-1).
    """

    b: float

    kind = K.LINEAR_FRACTIONAL

    def __post_init__(self):
        if not (self.b > 0.0 and math.isfinite(self.b)):
            raise LawError(f"LinearFractional b must be finite and > 0, got {self.b}")

    @property
    def param(self) -> float:
        return float(self.b)

    @property
    def mean(self) -> float:
        return 1.0

    @property
    def second_factorial(self) -> float:
        return 2.0 * float(self.b)

    def pgf(self, s: float) -> float:
        return 1.0 - (1.0 - s) / (1.0 + self.b * (1.0 - s))

    def sample(self, rng: np.random.Generator) -> int:
        if rng.random() < self.b / (1.0 + self.b):
            return 0
        return int(rng.geometric(1.0 / (1.0 + self.b)))


Component = Union[Deterministic, Bernoulli, Poisson, Geometric, LinearFractional]

_COMPONENT_NAMES = {
    "deterministic": (Deterministic, "k"),
    "bernoulli": (Bernoulli, "p"),
    "poisson": (Poisson, "lam"),
    "geometric": (Geometric, "mean"),
    "linear_fractional": (LinearFractional, "b"),
}


# ---------------------------------------------------------------------------
# multivariate laws
# ---------------------------------------------------------------------------


class OffspringLaw:
    """Base class; concrete laws are :class:`IndependentProduct` and :class:`ExplicitTable`."""

    arity: int

    def pack(self, width: int, offset: int = 0, n_support: int | None = None):
        """Return kernel arrays ``(kinds, pars, is_table, support, probs, nsup)``.

        The law's child coordinates are written to columns
        ``offset .. offset + arity - 1`` of a row of length ``width``; other
        columns get a zero-count placeholder so they never contribute.
        """
        raise NotImplementedError

    def to_dict(self) -> dict:
        raise NotImplementedError


class IndependentProduct(OffspringLaw):
    """Child counts of each type drawn independently from univariate laws."""

    def __init__(self, components: Sequence[Component]):
        if len(components) == 0:
            raise LawError("IndependentProduct needs at least one component")
        self.components = tuple(components)
        self.arity = len(self.components)

    def __repr__(self) -> str:
        return f"IndependentProduct({list(self.components)!r})"

    def __eq__(self, other) -> bool:
        return isinstance(other, IndependentProduct) and self.components == other.components

    def __hash__(self) -> int:
        return hash(self.components)

    def pgf(self, s: np.ndarray) -> float:
        return float(np.prod([c.pgf(float(x)) for c, x in zip(self.components, s)]))

    def moments(self) -> tuple[np.ndarray, np.ndarray]:
        mean = np.array([c.mean for c in self.components], dtype=float)
        second = np.outer(mean, mean)
        np.fill_diagonal(second, [c.second_factorial for c in self.components])
        return mean, second

    def sample(self, rng: np.random.Generator) -> np.ndarray:
        return np.array([c.sample(rng) for c in self.components], dtype=np.int64)

    def pack(self, width, offset=0, n_support=None):
        n_support = 1 if n_support is None else n_support
        kinds = np.full(width, K.DETERMINISTIC, dtype=np.int64)
        pars = np.zeros(width)
        for j, c in enumerate(self.components):
            kinds[offset + j] = c.kind
            pars[offset + j] = c.param
        support = np.zeros((n_support, width), dtype=np.int64)
        probs = np.zeros(n_support)
        return kinds, pars, 0, support, probs, 0

    def to_dict(self) -> dict:
        out = []
        for c in self.components:
            for name, (cls, key) in _COMPONENT_NAMES.items():
                if isinstance(c, cls):
                    out.append({"dist": name, key: c.param if key != "k" else int(c.k)})
        return {"type": "product", "components": out}


class ExplicitTable(OffspringLaw):
    """Finite-support law given as (child-count vector, probability) pairs."""

    def __init__(self, support, probs):
        support = np.asarray(support, dtype=np.int64)
        probs = np.asarray(probs, dtype=float)
        if support.ndim == 1:
            support = support[:, None]
        if support.ndim != 2 or support.shape[0] != probs.shape[0] or support.shape[0] == 0:
            raise LawError("table support must be a non-empty (K, arity) array matching probs")
        if np.any(support < 0):
            raise LawError("table support must hold non-negative counts")
        if np.any(probs < 0) or not np.all(np.isfinite(probs)):
            raise LawError("table probabilities must be finite and non-negative")
        if abs(probs.sum() - 1.0) > PROB_TOL:
            raise LawError(f"table probabilities sum to {probs.sum()!r}, not 1")
        self.support = support
        self.probs = probs
        self.arity = support.shape[1]
        self._cum = np.cumsum(probs)

    @classmethod
    def from_mapping(cls, table: dict) -> "ExplicitTable":
        keys = list(table)
        return cls([list(k) if np.ndim(k) else [k] for k in keys], [table[k] for k in keys])

    def __repr__(self) -> str:
        rows = {tuple(int(x) for x in k): float(p) for k, p in zip(self.support, self.probs)}
        return f"ExplicitTable({rows!r})"

    def __eq__(self, other) -> bool:
        return (
            isinstance(other, ExplicitTable)
            and np.array_equal(self.support, other.support)
            and np.array_equal(self.probs, other.probs)
        )

    def __hash__(self) -> int:
        return hash((self.support.tobytes(), self.probs.tobytes()))

    def pgf(self, s: np.ndarray) -> float:
        s = np.asarray(s, dtype=float)
        return float(np.sum(self.probs * np.prod(s[None, :] ** self.support, axis=1)))

    def moments(self) -> tuple[np.ndarray, np.ndarray]:
        x = self.support.astype(float)
        mean = self.probs @ x
        second = np.einsum("k,ki,kj->ij", self.probs, x, x) - np.diag(mean)
        return mean, second

    def sample(self, rng: np.random.Generator) -> np.ndarray:
        idx = int(np.searchsorted(self._cum, rng.random() * self._cum[-1], side="right"))
        return self.support[min(idx, len(self.probs) - 1)].copy()

    def pack(self, width, offset=0, n_support=None):
        n = len(self.probs)
        n_support = n if n_support is None else n_support
        kinds = np.full(width, K.DETERMINISTIC, dtype=np.int64)
        pars = np.zeros(width)
        support = np.zeros((n_support, width), dtype=np.int64)
        support[:n, offset : offset + self.arity] = self.support
        probs = np.zeros(n_support)
        probs[:n] = self.probs
        return kinds, pars, 1, support, probs, n

    def to_dict(self) -> dict:
        return {
            "type": "table",
            "support": self.support.tolist(),
            "probs": [float(p) for p in self.probs],
        }


def law_from_dict(spec: dict) -> OffspringLaw:
    """Build a law from its JSON form (see README for the schema)."""
    kind = spec.get("type")
    if kind == "table":
        extra = set(spec) - {"type", "support", "probs"}
        if extra:
            raise LawError(f"unknown table-law field(s): {sorted(extra)}")
        return ExplicitTable(spec["support"], spec["probs"])
    if kind == "product":
        extra = set(spec) - {"type", "components"}
        if extra:
            raise LawError(f"unknown product-law field(s): {sorted(extra)}")
        comps = []
        for c in spec["components"]:
            name = c.get("dist")
            if name not in _COMPONENT_NAMES:
                raise LawError(f"unknown component distribution {name!r}")
            cls, key = _COMPONENT_NAMES[name]
            extra = set(c) - {"dist", key}
            if extra:
                raise LawError(f"unknown field(s) {sorted(extra)} for {name}")
            comps.append(cls(c[key]))
        return IndependentProduct(comps)
    raise LawError(f"law type must be 'table' or 'product', got {kind!r}")


# ---------------------------------------------------------------------------
# operations
# ---------------------------------------------------------------------------


def law_moments(law: OffspringLaw) -> tuple[np.ndarray, np.ndarray]:
    """Exact mean vector and second factorial moment matrix.

    ``second[k, l] = E[eta_k eta_l - delta_kl eta_l]``.
    """
    mean, second = law.moments()
    if not (np.all(np.isfinite(mean)) and np.all(np.isfinite(second))):
        raise MomentUndefinedError(f"{law!r} has no finite second moment")
    return mean, second


def _check_dim(law: OffspringLaw, v) -> np.ndarray:
    v = np.atleast_1d(np.asarray(v, dtype=float))
    if v.shape != (law.arity,):
        raise ValueError(f"expected a vector of length {law.arity}, got shape {v.shape}")
    return v


def pgf_eval(law: OffspringLaw, s) -> float:
    """h(s) = E[prod s_k^eta_k] for s in [0, 1]^arity."""
    return law.pgf(_check_dim(law, s))


def deficiency_eval(law: OffspringLaw, q) -> float:
    """1 - h(1 - q), evaluated without forming 1 - q.

    Each term is computed in closed form with ``log1p``/``expm1`` so that
    the result keeps full relative precision for tiny ``q``.
    """
    q = _check_dim(law, q)
    kinds, pars, is_table, support, probs, nsup = law.pack(law.arity)
    return float(K.law_deficiency(kinds, pars, is_table, support, probs, nsup, q))


def sample_offspring(law: OffspringLaw, rng: np.random.Generator) -> np.ndarray:
    """One exact draw of the child-count vector."""
    return law.sample(rng)
