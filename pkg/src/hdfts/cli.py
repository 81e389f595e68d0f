"""Command-line interface: ``hdfts <subcommand> --config run.cfg --run-dir out/``.

Subcommands
-----------
decompose   fit the FANOVA decomposition and factor model on the full panel;
            writes effects.csv and factors.csv
backtest    expanding-window point forecasts; writes forecasts.csv and report
intervals   conformal intervals over the test window; writes intervals.csv,
            forecasts.csv and report
report      re-render report.txt from report.csv
reproduce   the full method x engine x interval grid with table-style output
            and soft checks of the expected orderings
simulate    write a synthetic input directory (CSV files, manifest, config)
"""

from __future__ import annotations

import argparse
import logging
import sys
import time
from dataclasses import replace
from pathlib import Path

from .config import ConfigError, RunConfig, load_config
from .evaluation import EvalReport, run_backtest
from .export import write_effects, write_factors, write_forecasts, write_intervals, write_unit_csvs
from .panel import PanelError, load_directory, to_log
from .pipeline import TWA_FFM, TWA_OWA_FFM, fit_pipeline
from .report import read_report_csv, render_report
from .simulate import simulate_panel
from .smoothing import smooth_panel

log = logging.getLogger("hdfts")

INTERVAL_MODES = ("split-sd", "split-quantile", "sequential")


class _OnceFilter(logging.Filter):
    """Let each distinct message through once; count the repeats."""

    def __init__(self):
        super().__init__()
        self.counts: dict[str, int] = {}

    def filter(self, record):
        msg = record.getMessage()
        self.counts[msg] = self.counts.get(msg, 0) + 1
        return self.counts[msg] == 1

    def summary(self):
        return {m: n for m, n in self.counts.items() if n > 1}


def _load(cfg: RunConfig):
    if not cfg.data:
        raise ConfigError("no data directory: set 'data' in the config or pass --data")
    raw = load_directory(cfg.data, schema=cfg.schema)
    smoothed = smooth_panel(to_log(raw), cfg.smoother)
    log.info("loaded %d groups x %d units x %d years x %d ages", *smoothed.shape)
    return smoothed


def _merge_report(run_dir: Path, new: EvalReport) -> EvalReport:
    """Combine with an existing report.csv; rows for the same cell are replaced."""
    path = run_dir / "report.csv"
    merged = EvalReport()
    keys = {(r["metric"], r["method"], r["engine"], r["pi_mode"], r["group"], r["horizon"]) for r in new.rows}
    if path.exists():
        for r in read_report_csv(path).rows:
            if (r["metric"], r["method"], r["engine"], r["pi_mode"], r["group"], r["horizon"]) not in keys:
                merged.rows.append(r)
    merged.rows.extend(new.rows)
    return merged


def _run(cfg: RunConfig, run_dir: Path, pi_modes) -> tuple:
    panel = _load(cfg)
    configs = cfg.backtests(pi_modes)
    t0 = time.perf_counter()
    results, report = run_backtest(panel, configs)
    log.info("%d backtests in %.1f s", len(configs), time.perf_counter() - t0)
    for res in results:
        by_reason: dict[str, list[int]] = {}
        for h, why in res.skipped:
            by_reason.setdefault(why, []).append(h)
        for why, hs in by_reason.items():
            log.warning("%s/%s/%s: h=%s skipped (%s)", res.config.method, res.config.engine,
                        res.config.pi_mode, ",".join(map(str, hs)), why)
    write_forecasts(run_dir / "forecasts.csv", results, panel.index.years)
    if any(res.intervals for res in results):
        write_intervals(run_dir / "intervals.csv", results)
    _, txt = render_report(_merge_report(run_dir, report), run_dir)
    return results, report, txt


def cmd_decompose(cfg: RunConfig, run_dir: Path, args) -> int:
    panel = _load(cfg)
    fitted = fit_pipeline(panel.values, panel.grid.points, cfg.pipeline(), panel.index.groups)
    write_effects(run_dir / "effects.csv", fitted.decomposition, panel.index, panel.grid.points)
    write_factors(run_dir / "factors.csv", fitted.factors, panel.index, panel.grid.points)
    for fit in fitted.factors:
        print(f"group {fit.group}: q = {fit.q}")
    print(f"wrote {run_dir / 'effects.csv'} and {run_dir / 'factors.csv'}")
    return 0


def cmd_backtest(cfg: RunConfig, run_dir: Path, args) -> int:
    _, _, txt = _run(cfg, run_dir, ("none",))
    print(txt)
    return 0


def cmd_intervals(cfg: RunConfig, run_dir: Path, args) -> int:
    modes = tuple(args.pi) if args.pi else tuple(m for m in cfg.pi_modes if m != "none")
    if not modes:
        raise ConfigError("no interval mode: set pi_mode in the config or pass --pi")
    _, _, txt = _run(cfg, run_dir, modes)
    print(txt)
    return 0


def cmd_report(cfg: RunConfig, run_dir: Path, args) -> int:
    path = run_dir / "report.csv"
    if not path.exists():
        print(f"error: {path} not found; run backtest or intervals first", file=sys.stderr)
        return 2
    _, txt = render_report(read_report_csv(path), run_dir)
    print(txt)
    return 0


def soft_checks(report: EvalReport, engines, groups) -> list[tuple[str, bool]]:
    """Orderings expected on real mortality data; reported, never enforced."""
    checks = []
    for engine in engines:
        for g in groups:
            a = report.summary("RMSFE", TWA_OWA_FFM, engine, "none", g)[0]
            b = report.summary("RMSFE", TWA_FFM, engine, "none", g)[0]
            checks.append((f"[{engine}/{g}] mean RMSFE TWA_OWA_FFM {a:.6g} <= TWA_FFM {b:.6g}", a <= b))
            for method in (TWA_OWA_FFM, TWA_FFM):
                sd = report.summary("CPD", method, engine, "split-sd", g)[0]
                seq = report.summary("CPD", method, engine, "sequential", g)[0]
                ecp = report.summary("ECP", method, engine, "sequential", g)[0]
                checks.append((f"[{method}/{engine}/{g}] mean CPD split-sd {sd:.4g} < sequential {seq:.4g}",
                               sd < seq))
                checks.append((f"[{method}/{engine}/{g}] mean sequential ECP {ecp:.4g} > 0.95", ecp > 0.95))
    return checks


def cmd_reproduce(cfg: RunConfig, run_dir: Path, args) -> int:
    cfg = replace(cfg, methods=(TWA_OWA_FFM, TWA_FFM),
                  engines=tuple(args.engine) if args.engine else ("ets", "arima"))
    results, report, txt = _run(cfg, run_dir, INTERVAL_MODES)
    print(txt)
    groups = results[0].groups
    lines = []
    for text, ok in soft_checks(report, cfg.engines, groups):
        lines.append(("ok       " if ok else "WARNING  ") + text)
        if not ok:
            log.warning("expected ordering not observed: %s", text)
    (run_dir / "checks.txt").write_text("\n".join(lines) + "\n")
    print("\n".join(lines))
    return 0


def cmd_simulate(args) -> int:
    out = Path(args.out)
    sp = simulate_panel(N=args.units, T=args.years, p=args.ages, sigma=args.sigma, seed=args.seed)
    write_unit_csvs(out, sp.panel, {"G1": "Female", "G2": "Male"})
    (out / "run.cfg").write_text(
        "data = .\n"
        "method = TWA_OWA_FFM, TWA_FFM\n"
        "engine = arima\n"
        "pi_mode = split-sd, sequential\n"
        "alpha = 0.05\n"
        "horizons = 1-10\n"
        "split = 0.6, 0.2, 0.2\n"
        "monotone_from = none\n"
        "lambda = 0\n"
    )
    print(f"wrote {args.units} unit files and run.cfg under {out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="hdfts", description=__doc__.split("\n\n")[0])
    ap.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = ap.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", "-c", help="key-value config file")
        p.add_argument("--data", help="input directory (overrides the config)")
        p.add_argument("--run-dir", "-o", default="run", help="output directory (default: ./run)")
        return p

    common(sub.add_parser("decompose", help="fit effects and factors on the full panel"))
    common(sub.add_parser("backtest", help="expanding-window point forecasts and errors"))
    p = common(sub.add_parser("intervals", help="conformal prediction intervals"))
    p.add_argument("--pi", action="append", choices=INTERVAL_MODES,
                   help="interval mode; repeatable (default: pi_mode from the config)")
    common(sub.add_parser("report", help="re-render report.txt from report.csv"))
    p = common(sub.add_parser("reproduce", help="full method/engine/interval grid with ordering checks"))
    p.add_argument("--engine", action="append", choices=("ets", "arima"),
                   help="restrict engines; repeatable (default: both)")

    p = sub.add_parser("simulate", help="write a synthetic input directory")
    p.add_argument("--out", required=True)
    p.add_argument("--units", type=int, default=10)
    p.add_argument("--years", type=int, default=40)
    p.add_argument("--ages", type=int, default=30)
    p.add_argument("--sigma", type=float, default=0.02)
    p.add_argument("--seed", type=int, default=0)
    return ap


COMMANDS = {
    "decompose": cmd_decompose,
    "backtest": cmd_backtest,
    "intervals": cmd_intervals,
    "report": cmd_report,
    "reproduce": cmd_reproduce,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    once = _OnceFilter()
    factor_log = logging.getLogger("hdfts.factor")
    factor_log.addFilter(once)
    try:
        if args.command == "simulate":
            return cmd_simulate(args)
        cfg = load_config(args.config) if args.config else RunConfig()
        if args.data:
            cfg = replace(cfg, data=args.data)
        run_dir = Path(args.run_dir)
        run_dir.mkdir(parents=True, exist_ok=True)
        return COMMANDS[args.command](cfg, run_dir, args)
    except (ConfigError, PanelError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    finally:
        factor_log.removeFilter(once)
        for msg, n in once.summary().items():
            log.warning("previous message repeated %d times in total: %s", n, msg)


if __name__ == "__main__":
    sys.exit(main())
