"""Per-iteration logs, the fixed CSV schema and log-log rate fits."""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

__all__ = ["CSV_COLUMNS", "ConvergenceLog", "rate_fit", "format_float"]

CSV_COLUMNS = ("k", "elapsed_s", "tau", "sigma", "theta", "inner_steps", "ek", "gap",
               "subopt", "infeas", "grad_x_evals", "grad_y_evals")

_RECORD_FIELD = {"elapsed_s": "elapsed"}


def format_float(v):
    """Shortest round-trip text of a float; empty for missing values."""
    if v is None:
        return ""
    v = float(v)
    if math.isnan(v):
        return ""
    return repr(v)


@dataclass
class ConvergenceLog:
    """Ordered rows of the CSV schema plus a free-form summary dict.

    Rows are dicts keyed by :data:`CSV_COLUMNS`; missing metrics are None.
    """

    rows: list = field(default_factory=list)
    summary: dict = field(default_factory=dict)

    def __post_init__(self):
        ks = [r["k"] for r in self.rows]
        if any(b <= a for a, b in zip(ks, ks[1:])):
            raise ValueError("iteration indices must be strictly increasing")

    @classmethod
    def from_report(cls, report, timing=True, summary=None):
        rows = []
        for r in report.records:
            row = {}
            for col in CSV_COLUMNS:
                row[col] = getattr(r, _RECORD_FIELD.get(col, col))
            if not timing:
                row["elapsed_s"] = None
            rows.append(row)
        return cls(rows=rows, summary=dict(summary or {}))

    def __len__(self):
        return len(self.rows)

    def column(self, name):
        return np.array([np.nan if r[name] is None else float(r[name]) for r in self.rows])

    def to_csv_text(self):
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(CSV_COLUMNS)
        for r in self.rows:
            out = []
            for col in CSV_COLUMNS:
                v = r[col]
                if col in ("k", "inner_steps", "grad_x_evals", "grad_y_evals") and v is not None:
                    out.append(str(int(v)))
                else:
                    out.append(format_float(v))
            w.writerow(out)
        return buf.getvalue()

    def to_csv(self, path):
        with open(path, "w", encoding="utf-8", newline="") as fh:
            fh.write(self.to_csv_text())

    @classmethod
    def from_csv(cls, path):
        with open(path, newline="", encoding="utf-8") as fh:
            reader = csv.DictReader(fh)
            missing = set(CSV_COLUMNS) - set(reader.fieldnames or ())
            if missing:
                raise ValueError(f"{path}: missing CSV columns {sorted(missing)}")
            rows = []
            for raw in reader:
                row = {}
                for col in CSV_COLUMNS:
                    cell = raw[col].strip()
                    if cell == "":
                        row[col] = None
                    elif col in ("k", "inner_steps", "grad_x_evals", "grad_y_evals"):
                        row[col] = int(cell)
                    else:
                        row[col] = float(cell)
                rows.append(row)
        return cls(rows=rows)


def rate_fit(log, metric="gap", k_range: Optional[tuple] = None):
    """Least-squares slope of ``log(metric)`` against ``log(K)``.

    ``K = k + 1`` is the number of completed iterations. ``log`` may be a
    :class:`ConvergenceLog`, a solver report, or a 1-D array indexed by k.
    ``k_range = (K_lo, K_hi)`` is inclusive. Raises ValueError on
    nonpositive or missing metric values in range.
    """
    if isinstance(log, ConvergenceLog):
        ks = log.column("k") + 1.0
        vals = log.column(metric)
    elif hasattr(log, "records"):
        ks = np.array([r.k for r in log.records], dtype=float) + 1.0
        vals = log.column(metric)
    else:
        vals = np.asarray(log, dtype=float)
        ks = np.arange(1, vals.size + 1, dtype=float)
    if k_range is not None:
        lo, hi = k_range
        sel = (ks >= lo) & (ks <= hi)
        ks, vals = ks[sel], vals[sel]
    if ks.size < 2:
        raise ValueError("need at least two points in range to fit a slope")
    if not np.all(np.isfinite(vals)) or np.any(vals <= 0.0):
        raise ValueError(f"metric {metric!r} has nonpositive or missing values in range")
    slope, _ = np.polyfit(np.log(ks), np.log(vals), 1)
    return float(slope)
