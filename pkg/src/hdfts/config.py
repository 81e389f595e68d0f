"""Key-value run configuration for the command-line interface.

A config file is plain ``key = value`` text (``#`` starts a comment), e.g.::

    data = data/rates
    method = TWA_OWA_FFM, TWA_FFM
    engine = arima
    pi_mode = split-sd, sequential
    alpha = 0.05
    horizons = 1-10
    split = 0.6, 0.2, 0.2
    first_train_end = 2013
    groups = F:Female, M:Male

List-valued keys (method, engine, pi_mode) expand into a grid of backtests.
"""

from __future__ import annotations

import configparser
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

from .evaluation import PI_MODES, BacktestConfig
from .factor import FactorSelectConfig
from .panel import CsvSchema
from .pipeline import ENGINES, METHODS, TWA_OWA_FFM, PipelineConfig
from .smoothing import SmootherConfig


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class RunConfig:
    data: Optional[str] = None
    methods: tuple = (TWA_OWA_FFM,)
    engines: tuple = ("ets",)
    pi_modes: tuple = ("none",)
    alpha: float = 0.05
    horizons: tuple = tuple(range(1, 11))
    proportions: tuple = (0.6, 0.2, 0.2)
    first_train_end: Optional[int] = None
    lam: object = "auto"
    penalty_order: int = 2
    monotone_from: Optional[float] = 65.0
    q_max: Optional[int] = None
    phi: Optional[float] = None
    q_override: Optional[int] = None
    ar_p_max: int = 3
    quantile_p_max: int = 2
    groups: Optional[tuple] = None      # ((label, csv column), ...)

    @property
    def schema(self) -> CsvSchema:
        return CsvSchema(dict(self.groups)) if self.groups else CsvSchema()

    @property
    def smoother(self) -> SmootherConfig:
        return SmootherConfig(self.lam, self.penalty_order, self.monotone_from)

    @property
    def factor(self) -> FactorSelectConfig:
        return FactorSelectConfig(self.q_max, self.phi, self.q_override)

    def pipeline(self, method: str | None = None, engine: str | None = None) -> PipelineConfig:
        return PipelineConfig(method or self.methods[0], engine or self.engines[0], self.factor, self.ar_p_max)

    def backtests(self, pi_modes=None) -> list[BacktestConfig]:
        """One BacktestConfig per (method, engine, pi_mode) combination."""
        out = []
        for method in self.methods:
            for engine in self.engines:
                for pm in (pi_modes or self.pi_modes):
                    out.append(BacktestConfig(self.first_train_end, self.horizons, method, engine, pm,
                                              self.alpha, self.proportions, self.factor,
                                              self.ar_p_max, self.quantile_p_max))
        return out


def _list(v: str) -> tuple:
    return tuple(x.strip() for x in v.split(",") if x.strip())


def _horizons(v: str) -> tuple:
    out = []
    for part in _list(v):
        if "-" in part:
            a, b = (int(x) for x in part.split("-", 1))
            out.extend(range(a, b + 1))
        else:
            out.append(int(part))
    return tuple(out)


def _groups(v: str) -> tuple:
    pairs = []
    for item in _list(v):
        label, sep, column = item.partition(":")
        if not sep or not label.strip() or not column.strip():
            raise ConfigError(f"groups: expected label:column pairs, got {item!r}")
        pairs.append((label.strip(), column.strip()))
    return tuple(pairs)


def _optional(conv):
    return lambda v: None if v.strip().lower() in ("", "none", "null") else conv(v)


def _choice(allowed, name):
    def parse(v):
        items = _list(v)
        bad = [x for x in items if x not in allowed]
        if bad or not items:
            raise ConfigError(f"{name}: {bad or v!r} not in {allowed}")
        return items
    return parse


_PARSERS = {
    "data": str,
    "groups": _groups,
    "method": ("methods", _choice(METHODS, "method")),
    "engine": ("engines", _choice(ENGINES, "engine")),
    "pi_mode": ("pi_modes", _choice(PI_MODES, "pi_mode")),
    "alpha": float,
    "horizons": _horizons,
    "split": ("proportions", lambda v: tuple(float(x) for x in _list(v))),
    "first_train_end": _optional(int),
    "lambda": ("lam", lambda v: "auto" if v.strip() == "auto" else float(v)),
    "penalty_order": int,
    "monotone_from": _optional(float),
    "q_max": _optional(int),
    "phi": _optional(float),
    "q_override": _optional(int),
    "ar_p_max": int,
    "quantile_p_max": int,
}


def parse_config(text: str, base_dir=None) -> RunConfig:
    """Parse key-value text; relative ``data`` paths resolve against ``base_dir``."""
    cp = configparser.ConfigParser(inline_comment_prefixes=("#",), interpolation=None)
    try:
        cp.read_string("[run]\n" + text)
    except configparser.Error as exc:
        raise ConfigError(str(exc)) from exc
    kwargs = {}
    for key, raw in cp["run"].items():
        if key not in _PARSERS:
            raise ConfigError(f"unknown config key {key!r}; known keys: {sorted(_PARSERS)}")
        entry = _PARSERS[key]
        field_name, conv = entry if isinstance(entry, tuple) else (key, entry)
        try:
            kwargs[field_name] = conv(raw)
        except ConfigError:
            raise
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"{key}: cannot parse {raw!r} ({exc})") from exc
    if "data" in kwargs and base_dir is not None and not Path(kwargs["data"]).is_absolute():
        kwargs["data"] = str(Path(base_dir) / kwargs["data"])
    cfg = RunConfig(**kwargs)
    # validate eagerly so errors surface before any fitting
    try:
        cfg.smoother, cfg.factor, cfg.backtests()
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    return cfg


def load_config(path) -> RunConfig:
    path = Path(path)
    return parse_config(path.read_text(encoding="utf-8"), base_dir=path.parent)


CONFIG_KEYS = tuple(_PARSERS)
