"""CSV and aligned-text rendering of evaluation reports.

Each table is one (metric, group) pair with per-horizon rows followed by
``Mean`` and ``Median`` rows; columns are (method, engine[, pi_mode]).  For
error-type metrics the smallest value in each row is flagged with ``*``.
Missing cells are written as ``NA``.
"""

from __future__ import annotations

import csv
import io
import math
from pathlib import Path

import numpy as np

from .evaluation import INTERVAL_METRICS, POINT_METRICS, EvalReport

METRIC_ORDER = POINT_METRICS + INTERVAL_METRICS
LOWER_IS_BETTER = ("RMSFE", "MAFE", "CPD", "IS")
NA = "NA"


def _columns(rows, metric, group):
    seen = []
    for r in rows:
        if r["metric"] == metric and r["group"] == group:
            key = (r["method"], r["engine"], r["pi_mode"])
            if key not in seen:
                seen.append(key)
    return seen


def report_rows(report: EvalReport) -> list[dict]:
    """Long-format rows including Mean/Median summaries and best-value flags.

    Summaries run over every horizon present anywhere in the report for that
    metric; a column missing one of those horizons gets ``NA`` summaries.
    """
    rows = report.rows
    metrics = [m for m in METRIC_ORDER if any(r["metric"] == m for r in rows)]
    groups = list(dict.fromkeys(r["group"] for r in rows))
    lookup = {(r["metric"], r["method"], r["engine"], r["pi_mode"], r["group"], r["horizon"]): r["value"]
              for r in rows}
    out = []
    for metric in metrics:
        horizons = sorted({r["horizon"] for r in rows if r["metric"] == metric})
        for group in groups:
            cols = _columns(rows, metric, group)
            if not cols:
                continue
            table = {}
            for col in cols:
                vals = [lookup.get((metric, *col, group, h), math.nan) for h in horizons]
                complete = not any(math.isnan(v) for v in vals)
                summary = (float(np.mean(vals)), float(np.median(vals))) if complete else (math.nan, math.nan)
                table[col] = dict(zip(horizons, vals)) | {"Mean": summary[0], "Median": summary[1]}
            for label in list(horizons) + ["Mean", "Median"]:
                finite = [table[c][label] for c in cols if not math.isnan(table[c][label])]
                best = min(finite) if finite and metric in LOWER_IS_BETTER else None
                for col in cols:
                    v = table[col][label]
                    out.append(dict(metric=metric, group=group, method=col[0], engine=col[1],
                                    pi_mode=col[2], horizon=label, value=v,
                                    best=best is not None and not math.isnan(v) and v == best))
    return out


def _fmt(v: float) -> str:
    return NA if math.isnan(v) else f"{v:.6g}"


def render_csv(rows: list[dict]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["metric", "group", "method", "engine", "pi_mode", "horizon", "value", "best"])
    for r in rows:
        value = NA if math.isnan(r["value"]) else repr(float(r["value"]))
        w.writerow([r["metric"], r["group"], r["method"], r["engine"], r["pi_mode"], r["horizon"],
                    value, int(r["best"])])
    return buf.getvalue()


def render_text(rows: list[dict]) -> str:
    blocks = []
    keys = list(dict.fromkeys((r["metric"], r["group"]) for r in rows))
    for metric, group in keys:
        sub = [r for r in rows if r["metric"] == metric and r["group"] == group]
        cols = list(dict.fromkeys((r["method"], r["engine"], r["pi_mode"]) for r in sub))
        labels = list(dict.fromkeys(r["horizon"] for r in sub))
        cell = {(r["method"], r["engine"], r["pi_mode"], r["horizon"]): r for r in sub}
        point = metric in POINT_METRICS
        head = ["h"] + [f"{m}/{e}" if point else f"{m}/{e}/{pm}" for m, e, pm in cols]
        body = []
        for label in labels:
            line = [str(label)]
            for col in cols:
                r = cell.get((*col, label))
                if r is None:
                    line.append(NA)
                else:
                    line.append(_fmt(r["value"]) + ("*" if r["best"] else ""))
            body.append(line)
        widths = [max(len(row[k]) for row in [head] + body) for k in range(len(head))]
        fmt = lambda row: "  ".join(s.rjust(wd) for s, wd in zip(row, widths))  # noqa: E731
        blocks.append("\n".join([f"{metric} [{group}]", fmt(head), "  ".join("-" * wd for wd in widths)]
                                + [fmt(row) for row in body]))
    legend = "* smallest value in the row" if any(r["best"] for r in rows) else ""
    return "\n\n".join(blocks) + ("\n\n" + legend if legend else "") + "\n"


def render_report(report: EvalReport, out_dir=None) -> tuple[str, str]:
    """Render ``report`` to (csv_text, txt_text); write report.csv/.txt when ``out_dir`` is given."""
    rows = report_rows(report)
    csv_text, txt_text = render_csv(rows), render_text(rows)
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        (out / "report.csv").write_text(csv_text)
        (out / "report.txt").write_text(txt_text)
    return csv_text, txt_text


def read_report_csv(path) -> EvalReport:
    """Rebuild an EvalReport from the per-horizon rows of a report.csv."""
    rep = EvalReport()
    with open(path, newline="") as fh:
        for r in csv.DictReader(fh):
            if r["horizon"] in ("Mean", "Median") or r["value"] == NA:
                continue
            rep.add(r["metric"], r["method"], r["engine"], r["pi_mode"], r["group"],
                    int(r["horizon"]), float(r["value"]))
    return rep
