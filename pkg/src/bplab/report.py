"""Result tables and their CSV / JSON serialization."""
from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field

COLUMNS = (
    "experiment", "model", "params", "value", "std_error", "reps", "capped_fraction", "verdict", "diagnostics",
)


def fmt_number(v) -> str:
    """12 significant digits; empty for missing values."""
    if v is None:
        return ""
    if isinstance(v, bool):
        return str(v).lower()
    if isinstance(v, int):
        return str(v)
    v = float(v)
    if math.isnan(v):
        return "nan"
    if math.isinf(v):
        return "inf" if v > 0 else "-inf"
    return format(v, ".12g")


def fmt_params(params: dict) -> str:
    """``name=value;...`` in insertion order."""
    parts = []
    for k, v in params.items():
        if isinstance(v, (list, tuple)):
            val = "(" + ",".join(fmt_number(x) if not isinstance(x, str) else x for x in v) + ")"
        elif isinstance(v, str):
            val = v
        else:
            val = fmt_number(v)
        parts.append(f"{k}={val}")
    return ";".join(parts)


@dataclass
class ResultRow:
    experiment: str
    model: str
    params: dict = field(default_factory=dict)
    value: float | None = None
    std_error: float | None = None
    reps: int | None = None
    capped_fraction: float | None = None
    verdict: str = ""
    diagnostics: str = ""

    def cells(self) -> list[str]:
        return [
            self.experiment,
            self.model,
            fmt_params(self.params),
            fmt_number(self.value),
            fmt_number(self.std_error),
            fmt_number(self.reps),
            fmt_number(self.capped_fraction),
            self.verdict,
            self.diagnostics,
        ]


@dataclass
class ResultTable:
    """Rows plus run metadata.  Metadata is logged, never written into the
    result file, so the file depends only on the config and the seed."""

    rows: list = field(default_factory=list)
    metadata: dict = field(default_factory=dict)

    def add(self, *args, **kwargs) -> ResultRow:
        row = ResultRow(*args, **kwargs)
        self.rows.append(row)
        return row

    def max_capped_fraction(self) -> float:
        vals = [r.capped_fraction for r in self.rows if r.capped_fraction is not None]
        return max(vals) if vals else 0.0


def _json_number(v):
    if v is None:
        return None
    if isinstance(v, int) and not isinstance(v, bool):
        return v
    v = float(v)
    if not math.isfinite(v):
        return fmt_number(v)
    return float(fmt_number(v))  # shortest repr of the rounded value


def row_object(row: ResultRow) -> dict:
    cells = dict(zip(COLUMNS, row.cells()))
    for key in ("value", "std_error", "reps", "capped_fraction"):
        cells[key] = _json_number(getattr(row, key))
    return cells


def render(table: ResultTable, fmt: str = "csv") -> str:
    if fmt == "csv":
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(COLUMNS)
        for row in table.rows:
            w.writerow(row.cells())
        return buf.getvalue()
    if fmt == "json":
        objs = [row_object(row) for row in table.rows]
        return json.dumps(objs, indent=2) + "\n"
    raise ValueError("format must be csv or json")


def emit_results(table: ResultTable, path, fmt: str = "csv") -> None:
    text = render(table, fmt)
    with open(path, "w", newline="") as fh:
        fh.write(text)
