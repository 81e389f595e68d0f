"""CSV writers for effects, factors, forecasts and intervals, plus synthetic input files."""

from __future__ import annotations

import csv
from pathlib import Path
from typing import Sequence

import numpy as np

from .evaluation import BacktestResult
from .fanova import Decomposition
from .factor import FactorFit
from .panel import RAW, FunctionalPanel, PanelIndex


def _num(x: float) -> str:
    return repr(float(x))


def _writer(path):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fh = open(path, "w", newline="", encoding="utf-8")
    return fh, csv.writer(fh, lineterminator="\n")


def write_effects(path, dec: Decomposition, index: PanelIndex, ages) -> None:
    """Wide table: one row per grid point, one column per effect curve."""
    tw, ow = dec.two_way, dec.one_way
    header = ["age", "mu"]
    header += [f"alpha:{u}" for u in index.units]
    header += [f"delta:{g}" for g in index.groups]
    cols = [tw.mu, *tw.alpha, *tw.delta]
    if ow is not None:
        header += [f"theta:{g}" for g in index.groups]
        header += [f"eta:{g}:{u}" for g in index.groups for u in index.units]
        cols += [*ow.theta, *(ow.eta[g, i] for g in range(index.G) for i in range(index.N))]
    fh, w = _writer(path)
    with fh:
        w.writerow(header)
        for j, age in enumerate(ages):
            w.writerow([f"{age:g}"] + [_num(c[j]) for c in cols])


def write_factors(path, fits: Sequence[FactorFit], index: PanelIndex, ages) -> None:
    """Long table of scores (per year), loadings (per unit and age) and eigenvalues."""
    fh, w = _writer(path)
    with fh:
        w.writerow(["group", "factor", "kind", "unit", "index", "value"])
        for fit in fits:
            g = fit.group
            for k in range(fit.q):
                for t, year in enumerate(index.years[:fit.scores.shape[0]]):
                    w.writerow([g, k + 1, "score", "", year, _num(fit.scores[t, k])])
                for i, unit in enumerate(index.units):
                    for j, age in enumerate(ages):
                        w.writerow([g, k + 1, "loading", unit, f"{age:g}", _num(fit.loadings[i, k, j])])
            for k, ev in enumerate(fit.eigenvalues):
                w.writerow([g, k + 1, "eigenvalue", "", "", _num(ev)])


def write_forecasts(path, results: Sequence[BacktestResult], years: Sequence[int]) -> None:
    """One row per (config, horizon, target year, group, unit, age) on the original scale."""
    fh, w = _writer(path)
    seen = set()
    with fh:
        w.writerow(["method", "engine", "group", "unit", "horizon", "train_end", "target_year",
                    "age", "forecast", "actual"])
        for res in results:
            key = (res.config.method, res.config.engine)
            if key in seen:        # several pi_modes share the same point forecasts
                continue
            seen.add(key)
            for h, fc in sorted(res.forecasts.items()):
                for k, (o, ty) in enumerate(zip(fc.origins, fc.target_years)):
                    for g, group in enumerate(res.groups):
                        for i, unit in enumerate(res.units):
                            for j, age in enumerate(res.ages):
                                w.writerow([*key, group, unit, h, years[o - 1], ty, f"{age:g}",
                                            _num(fc.forecast[g, i, k, j]), _num(fc.actual[g, i, k, j])])


def write_intervals(path, results: Sequence[BacktestResult]) -> None:
    fh, w = _writer(path)
    with fh:
        w.writerow(["method", "engine", "pi_mode", "alpha", "group", "unit", "horizon", "target_year",
                    "age", "lower", "upper", "forecast", "actual"])
        for res in results:
            if not res.intervals:
                continue
            cfg = res.config
            for h, iv in sorted(res.intervals.items()):
                fc = res.forecasts[h]
                for k, ty in enumerate(iv.targets):
                    for g, group in enumerate(res.groups):
                        for i, unit in enumerate(res.units):
                            for j, age in enumerate(res.ages):
                                w.writerow([cfg.method, cfg.engine, cfg.pi_mode, cfg.alpha, group, unit, h,
                                            ty, f"{age:g}", _num(iv.lower[g, i, k, j]),
                                            _num(iv.upper[g, i, k, j]), _num(fc.forecast[g, i, k, j]),
                                            _num(fc.actual[g, i, k, j])])


def write_unit_csvs(directory, panel: FunctionalPanel, group_columns: dict | None = None) -> list[Path]:
    """Write one raw-rate CSV per unit (Year, Age, one column per group) plus manifest.txt.

    Log panels are exponentiated first.  ``group_columns`` maps group labels to
    column names (default: the labels themselves).
    """
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    vals = np.exp(panel.values) if panel.scale != RAW else np.asarray(panel.values)
    cols = group_columns or {g: g for g in panel.index.groups}
    paths = []
    for i, unit in enumerate(panel.index.units):
        path = directory / f"{unit}.csv"
        fh, w = _writer(path)
        with fh:
            w.writerow(["Year", "Age", *(cols[g] for g in panel.index.groups)])
            for t, year in enumerate(panel.index.years):
                for j, age in enumerate(panel.grid.points):
                    w.writerow([year, f"{age:g}", *(_num(vals[g, i, t, j]) for g in range(panel.index.G))])
        paths.append(path)
    (directory / "manifest.txt").write_text("\n".join(panel.index.units) + "\n", encoding="utf-8")
    return paths
