"""Structured verification results and their serialization."""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import __version__

SCHEMA_VERSION = "flab.report/1"

# Convention notes attached to every report that touches holomorphic curvature.
H_NORMALIZATION = (
    "holomorphic curvature H uses the normalization in which H equals the flag "
    "curvature K(y, Jy) (twice the value of the unscaled Chern-Finsler contraction); Fubini-Study "
    "has H = 4"
)


def summarize(residuals):
    """Max / mean / quantile summary of a residual sample (NaNs ignored)."""
    r = np.asarray(residuals, dtype=float).ravel()
    r = r[np.isfinite(r)]
    if r.size == 0:
        return {"count": 0, "max": math.nan, "mean": math.nan, "q50": math.nan,
                "q90": math.nan, "q99": math.nan}
    q50, q90, q99 = np.quantile(r, [0.5, 0.9, 0.99])
    return {
        "count": int(r.size),
        "max": float(r.max()),
        "mean": float(r.mean()),
        "q50": float(q50),
        "q90": float(q90),
        "q99": float(q99),
    }


@dataclass
class Report:
    """Outcome of one check.

    ``passed`` is derived: max residual strictly below ``tolerance`` and no
    more than 1% of samples unevaluable.  ``status`` refines it for the CLI
    ("pass", "fail", "hypothesis unverified", "error").  Wall-clock runtime is
    kept out of the serialized form so that equal seeds give equal bytes.
    """

    check: str
    metric: str
    params: dict = field(default_factory=dict)
    seed: int | None = None
    samples: int = 0
    residuals: list = field(default_factory=list)
    tolerance: float = 0.0
    failures: int = 0
    notes: list = field(default_factory=list)
    details: dict = field(default_factory=dict)
    rows: list = field(default_factory=list)
    hypothesis_ok: bool = True
    runtime: float = field(default=0.0, compare=False)

    @property
    def summary(self):
        return summarize(self.residuals)

    @property
    def max_residual(self):
        return self.summary["max"]

    @property
    def passed(self):
        if not self.hypothesis_ok:
            return False
        if self.samples and self.failures > 0.01 * self.samples:
            return False
        m = self.max_residual
        return bool(np.isfinite(m) and m < self.tolerance)

    @property
    def status(self):
        if not self.hypothesis_ok:
            return "hypothesis unverified"
        if self.samples and self.failures > 0.01 * self.samples:
            return "error"
        return "pass" if self.passed else "fail"

    def to_dict(self):
        d = asdict(self)
        d.pop("runtime")
        d.pop("residuals")
        d["summary"] = self.summary
        d["passed"] = self.passed
        d["status"] = self.status
        d["schema"] = SCHEMA_VERSION
        d["version"] = __version__
        return _clean(d)

    def to_json(self):
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"


def _clean(obj):
    """Make ``obj`` JSON-safe: numpy scalars, complex as [re, im], nan as null."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, (complex, np.complexfloating)):
        return [_clean(float(obj.real)), _clean(float(obj.imag))]
    if isinstance(obj, (np.floating, float)):
        f = float(obj)
        return f if math.isfinite(f) else None
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def to_jsonable(obj):
    return _clean(obj)


def rows_to_csv(rows):
    if not rows:
        return ""
    buf = io.StringIO()
    cols = list(rows[0].keys())
    w = csv.DictWriter(buf, fieldnames=cols, lineterminator="\n")
    w.writeheader()
    for row in rows:
        w.writerow({k: _fmt(row.get(k)) for k in cols})
    return buf.getvalue()


def _fmt(v):
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return v


def plotdata(columns, marker="# pole"):
    """Whitespace-separated (x, y...) columns; non-finite rows become a marker line."""
    names = list(columns.keys())
    data = np.column_stack([np.asarray(columns[k], dtype=float) for k in names])
    lines = ["# " + " ".join(names)]
    for row in data:
        if not np.all(np.isfinite(row)):
            lines.append(f"{marker} at {names[0]}={row[0]!r}")
            continue
        lines.append(" ".join(repr(float(v)) for v in row))
    return "\n".join(lines) + "\n"


def emit(report, fmt, path=None):
    """Serialize ``report`` as json, csv or plotdata; write to ``path`` if given."""
    if fmt == "json":
        text = report.to_json()
    elif fmt == "csv":
        text = rows_to_csv(report.rows)
    elif fmt == "plotdata":
        cols = report.details.get("plot")
        if not cols:
            raise ValueError(f"report {report.check!r} carries no plot columns")
        text = plotdata(cols)
    else:
        raise ValueError(f"unknown format {fmt!r}")
    if path is not None:
        Path(path).write_text(text)
    return text
