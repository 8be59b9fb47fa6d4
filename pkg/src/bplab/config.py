"""Experiment configuration documents (JSON)."""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

from bplab import models as shipped
from bplab.envsim import DEFAULT_POP_CAP, MAX_POP_CAP
from bplab.model import DEFAULT_TOL, ModelError, ModelSpec, ValidationReport, model_from_dict

KINDS = (
    "exact-survival", "moments", "sandwich", "regimes", "simulate", "hybrid", "yaglom", "tails", "verify-all",
)
ENV_KINDS = ("simulate", "hybrid", "yaglom", "tails")
FORMATS = ("csv", "json")

FIELDS = {
    "model", "kind", "horizons", "t_grid", "s", "condition", "mode", "reps", "seed", "workers", "pop_cap",
    "stop_at", "x_grid", "lambda_grid", "output", "format", "dump", "scale", "tolerance",
}


class ConfigError(ValueError):
    """Malformed or inconsistent configuration document."""


class ValidationFailure(ConfigError):
    """The embedded model fails its hypothesis checks."""

    def __init__(self, report: ValidationReport):
        self.report = report
        lines = "; ".join(f"{c.name} (value {c.value})" for c in report.failures)
        super().__init__(f"{report.subject} fails validation: {lines}")


@dataclass
class ExperimentConfig:
    kind: str
    seed: int
    model: ModelSpec | None = None
    horizons: list = field(default_factory=list)
    t_grid: list = field(default_factory=list)
    s: list | None = None
    condition: str = "type1"
    mode: str = "laplace"
    reps: int = 0
    workers: int = 1
    pop_cap: float = DEFAULT_POP_CAP
    stop_at: float = 1e8
    x_grid: list | None = None
    lambda_grid: list | None = None
    output: str | None = None
    format: str = "csv"
    dump: str | None = None
    scale: float = 1.0
    tolerance: float = DEFAULT_TOL
    report: ValidationReport | None = None

    def to_dict(self) -> dict:
        """Canonical form: every field explicit, the model inlined."""
        d = {
            "kind": self.kind,
            "seed": self.seed,
            "model": self.model.to_dict() if self.model is not None else None,
            "horizons": list(self.horizons),
            "t_grid": [list(t) for t in self.t_grid],
            "s": self.s,
            "condition": self.condition,
            "mode": self.mode,
            "reps": self.reps,
            "workers": self.workers,
            "pop_cap": self.pop_cap,
            "stop_at": self.stop_at,
            "x_grid": self.x_grid,
            "lambda_grid": self.lambda_grid,
            "output": self.output,
            "format": self.format,
            "dump": self.dump,
            "scale": self.scale,
            "tolerance": self.tolerance,
        }
        return d


def _int(d, key, default=None, minimum=None) -> int:
    v = d.get(key, default)
    if isinstance(v, bool) or not isinstance(v, int):
        if isinstance(v, float) and v.is_integer():
            v = int(v)
        else:
            raise ConfigError(f"{key!r} must be an integer, got {v!r}")
    if minimum is not None and v < minimum:
        raise ConfigError(f"{key!r} must be >= {minimum}, got {v}")
    return v


def _float(d, key, default) -> float:
    v = d.get(key, default)
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise ConfigError(f"{key!r} must be a number, got {v!r}")
    return float(v)


def _load_model(value, base: Path | None) -> ModelSpec:
    if isinstance(value, str):
        if value in shipped.NAMES:
            return shipped.load(value)
        path = Path(value)
        if base is not None and not path.is_absolute():
            path = base / path
        try:
            value = json.loads(path.read_text())
        except FileNotFoundError as exc:
            raise ConfigError(f"model {value!r} is neither a shipped model nor a readable file") from exc
        except json.JSONDecodeError as exc:
            raise ConfigError(f"model file {path} is not valid JSON: {exc}") from exc
    if not isinstance(value, dict):
        raise ConfigError("'model' must be a shipped model name, a file path or an inline document")
    try:
        return model_from_dict(value)
    except (ModelError, ValueError, KeyError, TypeError) as exc:
        raise ConfigError(f"malformed model: {exc}") from exc


def config_from_dict(d: dict, base: Path | None = None, validate: bool = True) -> ExperimentConfig:
    if not isinstance(d, dict):
        raise ConfigError("a config must be a JSON object")
    unknown = sorted(set(d) - FIELDS)
    if unknown:
        raise ConfigError(f"unknown field(s): {', '.join(repr(u) for u in unknown)}")
    kind = d.get("kind")
    if kind not in KINDS:
        raise ConfigError(f"'kind' must be one of {', '.join(KINDS)}, got {kind!r}")
    if "seed" not in d or d["seed"] is None:
        raise ConfigError("'seed' is required (there is no default seed)")
    cfg = ExperimentConfig(kind=kind, seed=_int(d, "seed", minimum=0))
    if d.get("model") is not None:
        cfg.model = _load_model(d["model"], base)
    elif kind != "verify-all":
        raise ConfigError(f"'model' is required for kind {kind!r}")

    cfg.horizons = [int(n) for n in d.get("horizons") or []]
    if any(n < 0 for n in cfg.horizons):
        raise ConfigError("horizons must be non-negative")
    if kind in ("regimes", "yaglom", "tails") and any(n < 2 for n in cfg.horizons):
        raise ConfigError(f"kind {kind!r} reads off n^-t or log n and needs horizons >= 2")
    cfg.t_grid = [[float(x) for x in (t if isinstance(t, list) else [t])] for t in d.get("t_grid") or []]
    cfg.s = None if d.get("s") is None else [float(x) for x in d["s"]]
    cfg.condition = d.get("condition", "type1")
    if cfg.condition not in ("type1", "any"):
        raise ConfigError("'condition' must be 'type1' or 'any'")
    cfg.mode = d.get("mode", "laplace")
    if cfg.mode not in ("laplace", "direct"):
        raise ConfigError("'mode' must be 'laplace' or 'direct'")
    cfg.reps = _int(d, "reps", 0, minimum=0)
    cfg.workers = _int(d, "workers", 1, minimum=1)
    cfg.pop_cap = _float(d, "pop_cap", DEFAULT_POP_CAP)
    if not 1.0 <= cfg.pop_cap <= MAX_POP_CAP:
        raise ConfigError(f"'pop_cap' must lie in [1, {MAX_POP_CAP:g}]")
    cfg.stop_at = _float(d, "stop_at", 1e8)
    cfg.x_grid = None if d.get("x_grid") is None else [float(x) for x in d["x_grid"]]
    cfg.lambda_grid = None if d.get("lambda_grid") is None else [float(x) for x in d["lambda_grid"]]
    cfg.output = d.get("output")
    cfg.format = d.get("format", "csv")
    if cfg.format not in FORMATS:
        raise ConfigError("'format' must be csv or json")
    cfg.dump = d.get("dump")
    cfg.scale = _float(d, "scale", 1.0)
    if not (cfg.scale > 0 and math.isfinite(cfg.scale)):
        raise ConfigError("'scale' must be positive")
    cfg.tolerance = _float(d, "tolerance", DEFAULT_TOL)

    needs = {
        "exact-survival": ("horizons",),
        "moments": ("horizons",),
        "sandwich": ("horizons",),
        "regimes": ("horizons", "t_grid"),
        "simulate": ("horizons", "reps"),
        "hybrid": ("horizons", "reps"),
        "yaglom": ("horizons", "t_grid", "reps"),
        "tails": ("reps",),
        "verify-all": (),
    }[kind]
    for key in needs:
        if not getattr(cfg, key):
            raise ConfigError(f"kind {kind!r} needs a non-empty {key!r}")
    if kind in ENV_KINDS and cfg.model.env is None:
        raise ConfigError(f"kind {kind!r} needs a model with an 'env' section")
    if cfg.model is not None:
        N = cfg.model.N
        if kind == "regimes" and N != 2:
            raise ConfigError("kind 'regimes' is defined for N = 2")
        for t in cfg.t_grid:
            if len(t) != N or min(t) <= 0:
                raise ConfigError(f"each t must hold {N} positive values")
        if cfg.s is not None and (len(cfg.s) != N or min(cfg.s) < 0 or max(cfg.s) > 1):
            raise ConfigError(f"'s' must hold {N} values in [0, 1]")
        cfg.report = cfg.model.validate(cfg.tolerance)
        if validate and not cfg.report.ok:
            raise ValidationFailure(cfg.report)
    return cfg


def parse_config(path, validate: bool = True) -> ExperimentConfig:
    """Read and check a config file.  I/O errors propagate as OSError."""
    path = Path(path)
    text = path.read_text()
    try:
        d = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path} is not valid JSON: {exc}") from exc
    return config_from_dict(d, base=path.parent, validate=validate)
