"""Constant-environment and random-environment models, and their validation."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from bplab import _kernels as K
from bplab.laws import (
    ExplicitTable,
    Geometric,
    IndependentProduct,
    LinearFractional,
    OffspringLaw,
    Poisson,
    law_from_dict,
    law_moments,
)

DEFAULT_TOL = 1e-9


class ModelError(ValueError):
    """Structurally malformed model (wrong arities, bad weights, unknown fields)."""


# ---------------------------------------------------------------------------
# validation reports
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Check:
    name: str
    passed: bool
    value: float | str
    detail: str = ""


@dataclass
class ValidationReport:
    subject: str
    checks: list[Check] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return all(c.passed for c in self.checks)

    @property
    def failures(self) -> list[Check]:
        return [c for c in self.checks if not c.passed]

    def add(self, name, passed, value, detail=""):
        self.checks.append(Check(name, bool(passed), value, detail))

    def extend(self, other: "ValidationReport", prefix: str):
        for c in other.checks:
            self.checks.append(Check(f"{prefix}{c.name}", c.passed, c.value, c.detail))

    def lines(self) -> list[str]:
        out = [f"validation of {self.subject}: {'PASS' if self.ok else 'FAIL'}"]
        for c in self.checks:
            v = f"{c.value:.6g}" if isinstance(c.value, float) else str(c.value)
            tail = f" ({c.detail})" if c.detail else ""
            out.append(f"  [{'pass' if c.passed else 'FAIL'}] {c.name}: {v}{tail}")
        return out

    def to_dict(self) -> dict:
        return {
            "subject": self.subject,
            "ok": self.ok,
            "checks": [
                {"name": c.name, "passed": c.passed, "value": c.value, "detail": c.detail}
                for c in self.checks
            ],
        }


# ---------------------------------------------------------------------------
# packing helpers
# ---------------------------------------------------------------------------


def pack_laws(laws: Sequence[OffspringLaw], width: int, offsets: Sequence[int]) -> K.LawPack:
    kmax = max([len(l.probs) if isinstance(l, ExplicitTable) else 1 for l in laws])
    rows = [law.pack(width, off, kmax) for law, off in zip(laws, offsets)]
    means = np.zeros((len(laws), width))
    for i, (law, off) in enumerate(zip(laws, offsets)):
        means[i, off : off + law.arity] = law_moments(law)[0]
    return K.LawPack(
        np.ascontiguousarray(np.stack([r[0] for r in rows])),
        np.ascontiguousarray(np.stack([r[1] for r in rows])),
        np.array([r[2] for r in rows], dtype=np.int64),
        np.ascontiguousarray(np.stack([r[3] for r in rows])),
        np.ascontiguousarray(np.stack([r[4] for r in rows])),
        np.array([r[5] for r in rows], dtype=np.int64),
        means,
    )


# ---------------------------------------------------------------------------
# constant environment, types 1..N
# ---------------------------------------------------------------------------


class ConstantEnvModel:
    """Types 1..N in a constant environment.

    ``laws[i]`` (0-based) covers children of types i+1..N, so it has arity
    N - i.  The mean matrix ``M`` and the second factorial moments
    ``b[i, k, l] = E[eta_ik eta_il - delta_kl eta_il]`` are derived from the
    laws.
    """

    def __init__(self, laws: Sequence[OffspringLaw]):
        self.laws = tuple(laws)
        self.N = N = len(self.laws)
        if N == 0:
            raise ModelError("a constant-environment model needs at least one type")
        for i, law in enumerate(self.laws):
            if law.arity != N - i:
                raise ModelError(
                    f"law of type {i + 1} must cover types {i + 1}..{N} "
                    f"(arity {N - i}), got arity {law.arity}"
                )
        M = np.zeros((N, N))
        b = np.zeros((N, N, N))
        for i, law in enumerate(self.laws):
            mean, second = law_moments(law)
            M[i, i:] = mean
            b[i, i:, i:] = second
        self.M = M
        self.b = b
        # b_i = Var(eta_ii) / 2
        self.b_half_var = np.array(
            [(b[i, i, i] + M[i, i] - M[i, i] ** 2) / 2.0 for i in range(N)]
        )
        self._packed = None

    def __repr__(self) -> str:
        return f"ConstantEnvModel(N={self.N}, laws={list(self.laws)!r})"

    def packed(self) -> K.LawPack:
        if self._packed is None:
            self._packed = pack_laws(self.laws, self.N, list(range(self.N)))
        return self._packed

    def to_dict(self) -> list:
        return [law.to_dict() for law in self.laws]


def validate_constant_model(model: ConstantEnvModel, tol: float = DEFAULT_TOL) -> ValidationReport:
    """Check the decomposable-critical structure of the mean matrix.

    Failures are reported, never raised.
    """
    rep = ValidationReport(f"constant-environment model (N={model.N})")
    M, N = model.M, model.N
    lower = float(np.max(np.abs(np.tril(M, -1)))) if N > 1 else 0.0
    rep.add("triangular structure m_ij = 0 for j < i", lower == 0.0, lower)
    for i in range(N):
        rep.add(
            f"criticality m_{i + 1}{i + 1} = 1",
            abs(M[i, i] - 1.0) <= tol,
            float(M[i, i]),
            f"tolerance {tol:g}",
        )
    for i in range(N - 1):
        rep.add(
            f"m_{i + 1},{i + 2} > 0 (complete type ordering)",
            M[i, i + 1] > 0.0,
            float(M[i, i + 1]),
        )
    finite = bool(np.all(np.isfinite(model.b)))
    rep.add("finite second moments", finite, "yes" if finite else "no")
    for i in range(N):
        bi = float(model.b_half_var[i])
        rep.add(f"b_{i + 1} = Var(eta_{i + 1}{i + 1})/2 in (0, inf)", 0.0 < bi < math.inf, bi)
    return rep


# ---------------------------------------------------------------------------
# random environment for type 0
# ---------------------------------------------------------------------------


class EnvironmentState:
    """One environment: the joint law of (xi_0, xi_1, ..., xi_N)."""

    def __init__(self, law0: OffspringLaw):
        self.law0 = law0
        mean, second = law_moments(law0)
        self.mu1 = float(mean[0])
        self.mu2 = float(second[0, 0])
        self.theta = mean[1:].copy()
        self.Theta1 = float(self.theta.sum())

    def __repr__(self) -> str:
        return f"EnvironmentState(mu1={self.mu1:g}, theta={self.theta.tolist()})"


class RandomEnvModel:
    """Type-0 reproduction in an i.i.d. random environment plus types 1..N.

    The environment is either a finite mixture ``states = [(weight, state)]``
    or, when ``sigma`` is given, the log-normal family: ``law0`` is a product
    law whose type-0 component is Poisson or Geometric with mean
    ``exp(sigma * Z)``, Z standard normal.
    """

    def __init__(self, constant: ConstantEnvModel, states=None, sigma=None, law0=None):
        self.constant = constant
        self.N = constant.N
        if sigma is None:
            if not states:
                raise ModelError("a finite mixture needs at least one state")
            weights = np.array([float(w) for w, _ in states])
            if np.any(weights <= 0) or abs(weights.sum() - 1.0) > 1e-12:
                raise ModelError(f"state weights must be positive and sum to 1, got {weights.tolist()}")
            self.weights = weights
            self.states = [s if isinstance(s, EnvironmentState) else EnvironmentState(s) for _, s in states]
            self.sigma = None
        else:
            if not (sigma > 0 and math.isfinite(sigma)):
                raise ModelError(f"sigma must be finite and > 0, got {sigma}")
            if not isinstance(law0, IndependentProduct) or not isinstance(
                law0.components[0], (Poisson, Geometric)
            ):
                raise ModelError("the log-normal family needs a product law0 with a Poisson or Geometric type-0 component")
            self.sigma = float(sigma)
            self.weights = np.array([1.0])
            self.states = [EnvironmentState(law0)]
        for st in self.states:
            if st.law0.arity != self.N + 1:
                raise ModelError(f"law0 must have arity N+1 = {self.N + 1}, got {st.law0.arity}")
        self._packed = None

    @property
    def is_family(self) -> bool:
        return self.sigma is not None

    def packed(self) -> K.EnvPack:
        if self._packed is None:
            laws = pack_laws([s.law0 for s in self.states], self.N + 1, [0] * len(self.states))
            cumw = np.cumsum(self.weights)
            cumw[-1] = 1.0
            self._packed = K.EnvPack(laws, cumw, float(self.sigma or 0.0))
        return self._packed

    def expectations(self) -> dict[str, float]:
        """Exact environment averages used by the hypotheses."""
        if self.is_family:
            sig = self.sigma
            ratio = 1.0 if isinstance(self.states[0].law0.components[0], Poisson) else 2.0
            return {
                "E log mu1": 0.0,
                "E log^2 mu1": sig**2,
                "E mu1^-1": math.exp(sig**2 / 2.0),
                "E mu2 mu1^-2 (1+log+ mu1)": ratio * (1.0 + sig / math.sqrt(2.0 * math.pi)),
            }
        w = self.weights
        mu1 = np.array([s.mu1 for s in self.states])
        mu2 = np.array([s.mu2 for s in self.states])
        with np.errstate(divide="ignore", invalid="ignore"):
            logs = np.where(mu1 > 0, np.log(np.where(mu1 > 0, mu1, 1.0)), -np.inf)
            inv = np.where(mu1 > 0, 1.0 / np.where(mu1 > 0, mu1, 1.0), np.inf)
            aff = np.where(
                mu1 > 0,
                mu2 / np.where(mu1 > 0, mu1, 1.0) ** 2 * (1.0 + np.maximum(0.0, logs)),
                np.inf,
            )
            e_log = float(np.sum(w * logs))
            e_log2 = float(np.sum(w * logs**2))
        return {
            "E log mu1": e_log,
            "E log^2 mu1": e_log2,
            "E mu1^-1": float(np.sum(w * inv)),
            "E mu2 mu1^-2 (1+log+ mu1)": float(np.sum(w * aff)),
        }

    def to_dict(self) -> dict:
        if self.is_family:
            return {"family": "lognormal", "sigma": self.sigma, "law0": self.states[0].law0.to_dict()}
        return {
            "states": [
                {"weight": float(w), "law0": s.law0.to_dict()} for w, s in zip(self.weights, self.states)
            ]
        }


def validate_random_env_model(model: RandomEnvModel, tol: float = DEFAULT_TOL) -> ValidationReport:
    """Report on environment criticality, the moment conditions and the embedded constant model."""
    rep = ValidationReport(f"random-environment model (N={model.N})")
    ex = model.expectations()
    rep.add(
        "weights positive and summing to 1",
        bool(np.all(model.weights > 0) and abs(model.weights.sum() - 1.0) <= 1e-12),
        float(model.weights.sum()),
    )
    mu_min = min(s.mu1 for s in model.states) if not model.is_family else math.inf
    rep.add("mu1 > 0 in every state", mu_min > 0, float(mu_min) if math.isfinite(mu_min) else "lognormal")
    e_log = ex["E log mu1"]
    rep.add("|E log mu1| <= tol (critical environment)", abs(e_log) <= tol, e_log, f"tolerance {tol:g}")
    e_log2 = ex["E log^2 mu1"]
    rep.add("E log^2 mu1 in (0, inf)", 0.0 < e_log2 < math.inf, e_log2)
    th = min(float(s.theta[0]) for s in model.states)
    rep.add("P(theta_1 > 0) = 1", th > 0.0, th, "smallest theta_1 over states")
    rep.add("E[mu1^-1] < inf", math.isfinite(ex["E mu1^-1"]), ex["E mu1^-1"])
    v = ex["E mu2 mu1^-2 (1+log+ mu1)"]
    rep.add("E[mu2 mu1^-2 (1 + max(0, log mu1))] < inf", math.isfinite(v), v)
    rep.extend(validate_constant_model(model.constant, tol), "types 1..N: ")
    return rep


# ---------------------------------------------------------------------------
# JSON model documents
# ---------------------------------------------------------------------------

_MODEL_FIELDS = {"id", "N", "type_laws", "env"}
_ENV_FIELDS = {"states", "family", "sigma", "law0"}


@dataclass
class ModelSpec:
    """A parsed model document: the constant part and an optional environment."""

    id: str
    constant: ConstantEnvModel
    env: RandomEnvModel | None = None

    @property
    def N(self) -> int:
        return self.constant.N

    def validate(self, tol: float = DEFAULT_TOL) -> ValidationReport:
        if self.env is not None:
            rep = validate_random_env_model(self.env, tol)
        else:
            rep = validate_constant_model(self.constant, tol)
        rep.subject = f"model {self.id!r}: {rep.subject}"
        return rep

    def to_dict(self) -> dict:
        d = {"id": self.id, "N": self.N, "type_laws": self.constant.to_dict()}
        if self.env is not None:
            d["env"] = self.env.to_dict()
        return d


def model_from_dict(d: dict) -> ModelSpec:
    extra = set(d) - _MODEL_FIELDS
    if extra:
        raise ModelError(f"unknown model field(s): {sorted(extra)}")
    for key in ("id", "N", "type_laws"):
        if key not in d:
            raise ModelError(f"model is missing field {key!r}")
    laws = [law_from_dict(x) for x in d["type_laws"]]
    if len(laws) != d["N"]:
        raise ModelError(f"N = {d['N']} but {len(laws)} type laws given")
    constant = ConstantEnvModel(laws)
    env = None
    if d.get("env") is not None:
        e = d["env"]
        extra = set(e) - _ENV_FIELDS
        if extra:
            raise ModelError(f"unknown env field(s): {sorted(extra)}")
        if "family" in e:
            if e["family"] != "lognormal":
                raise ModelError(f"unknown environment family {e['family']!r}")
            env = RandomEnvModel(constant, sigma=e["sigma"], law0=law_from_dict(e["law0"]))
        else:
            states = []
            for st in e["states"]:
                extra = set(st) - {"weight", "law0"}
                if extra:
                    raise ModelError(f"unknown state field(s): {sorted(extra)}")
                states.append((st["weight"], EnvironmentState(law_from_dict(st["law0"]))))
            env = RandomEnvModel(constant, states)
    return ModelSpec(str(d["id"]), constant, env)


# convenience constructors used by tests and examples

def single_type_lf(b: float = 1.0) -> ConstantEnvModel:
    return ConstantEnvModel([IndependentProduct([LinearFractional(b)])])
