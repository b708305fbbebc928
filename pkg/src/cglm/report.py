"""Writing and re-reading experiment reports.

``rows.csv`` holds one row per cell, ``report.json`` the config echo,
per-``n`` setup, aggregates and verdicts.  Wall-clock times go to a separate
``timings.csv`` so that the first two files are byte-identical across runs.
"""
from __future__ import annotations

import csv
import json
import math
import platform
from pathlib import Path

import matplotlib
import numpy as np
import scipy

from .experiment import ROW_FIELDS, ROW_SCHEMA, ExperimentReport, compute_aggregates

__all__ = ["emit_outputs", "load_report", "read_rows", "json_safe", "ReportMismatch",
           "REQUIRED_KEYS", "validate_report_json"]

SCHEMA_VERSION = 1
REQUIRED_KEYS = ("schema_version", "name", "config", "setups", "aggregates", "verdicts",
                 "passed", "versions")


class ReportMismatch(ValueError):
    """Aggregates in ``report.json`` disagree with those recomputed from ``rows.csv``."""


def json_safe(x):
    """JSON-safe copy: NaN and infinities become ``None``, numpy scalars become floats."""
    if isinstance(x, dict):
        return {str(k): json_safe(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [json_safe(v) for v in x]
    if isinstance(x, (bool, np.bool_)):
        return bool(x)
    if isinstance(x, (int, np.integer)):
        return int(x)
    if isinstance(x, (float, np.floating)):
        x = float(x)
        return x if math.isfinite(x) else None
    return x


def _cell(v):
    if v is None:
        return ""
    if isinstance(v, float):
        return "" if math.isnan(v) else repr(v)
    return str(v)


def versions() -> dict:
    from importlib.metadata import PackageNotFoundError, version
    try:
        own = version("artifact")
    except PackageNotFoundError:
        own = "unknown"
    return {"python": platform.python_version(), "numpy": np.__version__,
            "scipy": scipy.__version__, "matplotlib": matplotlib.__version__, "artifact": own}


def _curve_rows(report: ExperimentReport, key: str):
    for n in sorted(int(k) for k in report.aggregates):
        a = report.aggregates[str(n)]
        yield [n, _cell(a[f"{key}_median"]), _cell(a[f"{key}_q1"]), _cell(a[f"{key}_q3"])]


def validate_report_json(obj: dict) -> None:
    missing = [k for k in REQUIRED_KEYS if k not in obj]
    if missing:
        raise ValueError(f"report.json lacks required keys {missing}")


def emit_outputs(report: ExperimentReport, output_dir, figures: bool = True) -> list[Path]:
    """Write rows, report, curve files, timings and (optionally) figures.

    Files written before a failure are removed again.
    """
    out = Path(output_dir)
    written: list[Path] = []
    try:
        out.mkdir(parents=True, exist_ok=True)

        def open_new(name):
            p = out / name
            written.append(p)
            return open(p, "w", newline="")

        with open_new("rows.csv") as fh:
            w = csv.writer(fh)
            w.writerow(ROW_FIELDS)
            for r in report.rows:
                w.writerow([_cell(r[k]) for k in ROW_FIELDS])
        doc = {"schema_version": SCHEMA_VERSION, "name": report.config.name,
               "config": report.config.raw, "setups": report.setups,
               "aggregates": report.aggregates, "verdicts": report.verdicts,
               "passed": report.passed, "versions": versions()}
        doc = json_safe(doc)
        validate_report_json(doc)
        with open_new("report.json") as fh:
            json.dump(doc, fh, indent=2, sort_keys=True)
            fh.write("\n")
        for name, key in (("curve_l1_vs_n.csv", "posterior_mean_l1_error"),
                          ("curve_dim_vs_n.csv", "mean_size")):
            with open_new(name) as fh:
                w = csv.writer(fh)
                w.writerow(["n", "median", "q1", "q3"])
                w.writerows(_curve_rows(report, key))
        with open_new("timings.csv") as fh:
            w = csv.writer(fh)
            w.writerow(["cell", "seconds"])
            w.writerows([c, f"{t:.6f}"] for c, t in report.timings)
        if figures:
            from .plotting import render_report_figures
            written.extend(render_report_figures(report, out))
    except OSError as exc:
        for p in written:
            p.unlink(missing_ok=True)
        raise OSError(f"writing report to {out}: {exc}") from exc
    except Exception:
        for p in written:
            p.unlink(missing_ok=True)
        raise
    return written


def _parse(value: str, typ):
    if value == "":
        return None
    return typ(value)


def read_rows(path) -> list[dict]:
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames != ROW_FIELDS:
            raise ValueError(f"{path}: unexpected columns {reader.fieldnames}")
        return [{k: _parse(r[k], t) for k, t in ROW_SCHEMA} for r in reader]


def _close(a, b, tol: float) -> bool:
    if isinstance(a, dict) and isinstance(b, dict):
        return a.keys() == b.keys() and all(_close(a[k], b[k], tol) for k in a)
    if a is None or b is None:
        return a is None and b is None
    if isinstance(a, (int, float)) and isinstance(b, (int, float)):
        return abs(a - b) <= tol * max(1.0, abs(a), abs(b))
    return a == b


def load_report(output_dir, tol: float = 1e-12) -> tuple[list[dict], dict]:
    """Read ``rows.csv`` and ``report.json`` and check that the stored
    aggregates are reproduced from the rows."""
    out = Path(output_dir)
    rows = read_rows(out / "rows.csv")
    doc = json.loads((out / "report.json").read_text())
    validate_report_json(doc)
    again = json_safe(compute_aggregates(rows, doc["config"]["verdicts"]["t1_margin"]))
    if not _close(again, doc["aggregates"], tol):
        raise ReportMismatch(f"aggregates in {out / 'report.json'} do not match rows.csv")
    return rows, doc
