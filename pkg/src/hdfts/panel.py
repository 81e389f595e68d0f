"""Panel data types, CSV ingestion and chronological train/validation/test splits."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

RAW = "raw-rate"
LOG = "log-rate"


class PanelError(ValueError):
    """Raised for structurally invalid panels or input files."""


class ParseError(PanelError):
    def __init__(self, path, line: int, message: str):
        self.path = str(path)
        self.line = line
        super().__init__(f"{self.path}:{line}: {message}")


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.array(a, copy=True)
    a.flags.writeable = False
    return a


@dataclass(frozen=True)
class AgeGrid:
    points: np.ndarray

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float).ravel()
        if pts.size < 3:
            raise PanelError(f"age grid needs at least 3 points, got {pts.size}")
        if not np.all(np.isfinite(pts)) or np.any(np.diff(pts) <= 0):
            raise PanelError("age grid points must be finite and strictly increasing")
        object.__setattr__(self, "points", _frozen(pts))

    @property
    def p(self) -> int:
        return int(self.points.size)

    @classmethod
    def integer_ages(cls, first: int, last: int) -> "AgeGrid":
        return cls(np.arange(first, last + 1, dtype=float))

    def index_of(self, age: float) -> int | None:
        hit = np.flatnonzero(np.isclose(self.points, age, rtol=0.0, atol=1e-9))
        return int(hit[0]) if hit.size else None


@dataclass(frozen=True)
class PanelIndex:
    groups: tuple
    units: tuple
    years: tuple

    def __post_init__(self):
        groups = tuple(self.groups)
        units = tuple(self.units)
        years = tuple(int(y) for y in self.years)
        for name, labels in (("groups", groups), ("units", units), ("years", years)):
            if not labels:
                raise PanelError(f"{name} must be non-empty")
            if len(set(labels)) != len(labels):
                raise PanelError(f"{name} labels must be unique")
        if len(years) < 5:
            raise PanelError(f"need at least 5 years, got {len(years)}")
        if any(b - a != 1 for a, b in zip(years, years[1:])):
            raise PanelError("years must be consecutive and increasing")
        object.__setattr__(self, "groups", groups)
        object.__setattr__(self, "units", units)
        object.__setattr__(self, "years", years)

    @property
    def G(self) -> int:
        return len(self.groups)

    @property
    def N(self) -> int:
        return len(self.units)

    @property
    def T(self) -> int:
        return len(self.years)

    def group_position(self, group) -> int:
        try:
            return self.groups.index(group)
        except ValueError:
            raise KeyError(f"unknown group {group!r}; known: {self.groups}") from None


@dataclass(frozen=True)
class FunctionalPanel:
    """Curves indexed by (group, unit, year, grid point).

    ``values`` has shape ``(G, N, T, p)``; entries where ``mask`` is False are
    ignored downstream and hold NaN.
    """

    index: PanelIndex
    grid: AgeGrid
    values: np.ndarray
    scale: str = RAW
    mask: np.ndarray | None = field(default=None)

    def __post_init__(self):
        shape = (self.index.G, self.index.N, self.index.T, self.grid.p)
        vals = np.asarray(self.values, dtype=float)
        if vals.shape != shape:
            raise PanelError(f"values shape {vals.shape} does not match index/grid {shape}")
        if self.scale not in (RAW, LOG):
            raise PanelError(f"unknown scale {self.scale!r}")
        mask = np.isfinite(vals) if self.mask is None else np.asarray(self.mask, dtype=bool)
        if mask.shape != shape:
            raise PanelError("mask shape must match values")
        mask = mask & np.isfinite(vals)
        if self.scale == RAW:
            mask &= vals > 0
        vals = np.where(mask, vals, np.nan)
        object.__setattr__(self, "values", _frozen(vals))
        object.__setattr__(self, "mask", _frozen(mask))

    @property
    def shape(self) -> tuple[int, int, int, int]:
        return self.values.shape

    @property
    def fully_valid(self) -> bool:
        return bool(self.mask.all())

    def require_fully_valid(self) -> None:
        if not self.fully_valid:
            bad = np.argwhere(~self.mask)[0]
            g, i, t, j = (int(x) for x in bad)
            raise PanelError(
                f"panel has {int((~self.mask).sum())} masked cells "
                f"(first at group={self.index.groups[g]!r}, unit={self.index.units[i]!r}, "
                f"year={self.index.years[t]}, age={self.grid.points[j]:g}); smooth it first"
            )

    def window(self, first_year: int, last_year: int) -> "FunctionalPanel":
        """Sub-panel over the inclusive year range."""
        years = self.index.years
        if first_year not in years or last_year not in years or last_year < first_year:
            raise PanelError(f"year window {first_year}..{last_year} outside {years[0]}..{years[-1]}")
        a, b = years.index(first_year), years.index(last_year) + 1
        idx = PanelIndex(self.index.groups, self.index.units, years[a:b])
        return FunctionalPanel(idx, self.grid, self.values[:, :, a:b], self.scale, self.mask[:, :, a:b])

    def with_values(self, values: np.ndarray, scale: str | None = None, mask=None) -> "FunctionalPanel":
        return replace(self, values=values, scale=scale or self.scale, mask=mask)


@dataclass(frozen=True)
class SplitPlan:
    train_years: tuple
    validation_years: tuple
    test_years: tuple

    @property
    def counts(self) -> tuple[int, int, int]:
        return len(self.train_years), len(self.validation_years), len(self.test_years)


def to_log(panel: FunctionalPanel) -> FunctionalPanel:
    if panel.scale != RAW:
        raise PanelError("panel is already on the log scale")
    with np.errstate(invalid="ignore", divide="ignore"):
        logged = np.where(panel.mask, np.log(np.where(panel.mask, panel.values, 1.0)), np.nan)
    return FunctionalPanel(panel.index, panel.grid, logged, LOG, panel.mask)


def _is_integral(x: float) -> bool:
    return abs(x - round(x)) < 1e-9


def make_split(years, proportions: Sequence[float] = (0.6, 0.2, 0.2)) -> SplitPlan:
    """Contiguous chronological split of ``years`` (a PanelIndex, a sequence, or a count).

    The test block takes ``ceil(T * p_test)`` years.  The training block takes
    ``T * p_train`` years when that is a whole number and one year fewer than
    its floor otherwise; validation receives the rest.  This is the rule that
    yields 28/11/10 for 49 years and 6/2/2 for 10 years.
    """
    if isinstance(years, PanelIndex):
        years = years.years
    elif isinstance(years, (int, np.integer)):
        years = range(int(years))
    years = tuple(int(y) for y in years)
    T = len(years)
    props = tuple(float(x) for x in proportions)
    if len(props) != 3 or any(x <= 0 for x in props) or not math.isclose(sum(props), 1.0, abs_tol=1e-9):
        raise PanelError(f"proportions must be three positive numbers summing to 1, got {proportions}")
    p_train, _, p_test = props
    n_test = math.ceil(T * p_test - 1e-9)
    raw_train = T * p_train
    n_train = int(round(raw_train)) if _is_integral(raw_train) else math.floor(raw_train) - 1
    n_train = max(n_train, 1)
    n_val = T - n_train - n_test
    if min(n_train, n_val, n_test) < 1:
        raise PanelError(f"cannot split {T} years into non-empty partitions with {props}")
    return SplitPlan(years[:n_train], years[n_train:n_train + n_val], years[n_train + n_val:])


# --- CSV ingestion -----------------------------------------------------------

@dataclass(frozen=True)
class CsvSchema:
    """Column mapping for per-unit rate files.

    ``groups`` maps group labels (panel order) to CSV column names.
    """

    groups: Mapping[str, str] = field(default_factory=lambda: {"F": "Female", "M": "Male"})
    year_column: str = "Year"
    age_column: str = "Age"
    missing_tokens: tuple = ("", ".", "NA", "NaN", "nan")


def parse_age(token: str) -> tuple[float, bool]:
    """Return (age, open_ended) for tokens like ``"42"`` or ``"100+"``."""
    tok = token.strip()
    open_ended = tok.endswith("+")
    if open_ended:
        tok = tok[:-1].strip()
    return float(int(tok)), open_ended


def _read_unit_csv(path: Path, schema: CsvSchema):
    rows: dict[tuple[int, float, bool], list[float]] = {}
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise ParseError(path, 1, "empty file") from None
        needed = [schema.year_column, schema.age_column, *schema.groups.values()]
        missing = [c for c in needed if c not in header]
        if missing:
            raise ParseError(path, 1, f"missing columns {missing}")
        cols = [header.index(c) for c in needed]
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) < len(header):
                raise ParseError(path, lineno, f"expected {len(header)} fields, got {len(row)}")
            try:
                year = int(row[cols[0]].strip())
                age, open_ended = parse_age(row[cols[1]])
            except ValueError:
                raise ParseError(path, lineno, f"bad Year/Age fields {row[cols[0]]!r}, {row[cols[1]]!r}") from None
            rates = []
            for c in cols[2:]:
                tok = row[c].strip()
                if tok in schema.missing_tokens:
                    rates.append(math.nan)
                    continue
                try:
                    rates.append(float(tok))
                except ValueError:
                    raise ParseError(path, lineno, f"non-numeric rate {tok!r}") from None
            key = (year, age, open_ended)
            if key in rows:
                raise ParseError(path, lineno, f"duplicate row for year {year}, age {row[cols[1]].strip()}")
            rows[key] = rates
    return rows


def load_panel(
    files: Iterable,
    grid: AgeGrid,
    schema: CsvSchema | None = None,
    units: Sequence[str] | None = None,
) -> FunctionalPanel:
    """Read one CSV per unit into a raw-rate panel.

    Unit labels come from ``units`` (manifest order) when given, otherwise from
    the sorted file stems, so the result does not depend on ``files`` order.
    Missing, non-positive or non-finite rates are masked.  An open-ended top
    age bin such as ``"100+"`` is stored at the last grid point when its lower
    bound is at or beyond it.
    """
    schema = schema or CsvSchema()
    paths = [Path(f) for f in files]
    if not paths:
        raise PanelError("no input files")
    by_stem = {p.stem: p for p in paths}
    if len(by_stem) != len(paths):
        raise PanelError("duplicate unit file stems")
    labels = list(units) if units is not None else sorted(by_stem)
    if set(labels) != set(by_stem):
        raise PanelError(f"manifest units {sorted(labels)} do not match files {sorted(by_stem)}")

    parsed = {u: _read_unit_csv(by_stem[u], schema) for u in labels}
    year_sets = {u: sorted({k[0] for k in rows}) for u, rows in parsed.items()}
    all_years = sorted(set().union(*year_sets.values()))
    for u, ys in year_sets.items():
        if ys != all_years:
            gap = sorted(set(all_years) - set(ys))
            raise PanelError(f"{by_stem[u]}: years {gap} missing entirely; years must be rectangular")

    groups = list(schema.groups)
    index = PanelIndex(groups, labels, all_years)
    values = np.full((index.G, index.N, index.T, grid.p), np.nan)
    last = float(grid.points[-1])
    for i, u in enumerate(labels):
        for (year, age, open_ended), rates in parsed[u].items():
            j = grid.p - 1 if open_ended and age >= last else grid.index_of(age)
            if j is None:
                continue
            values[:, i, year - all_years[0], j] = rates
    return FunctionalPanel(index, grid, values, RAW)


def read_manifest(path) -> list[str]:
    """One unit label per line; blank lines and ``#`` comments ignored."""
    out = []
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        line = line.split("#", 1)[0].strip()
        if line:
            out.append(line)
    return out


def load_directory(directory, grid: AgeGrid | None = None, schema: CsvSchema | None = None) -> FunctionalPanel:
    """Load every ``*.csv`` in ``directory``; honours an optional ``manifest.txt``."""
    directory = Path(directory)
    files = sorted(directory.glob("*.csv"))
    if not files:
        raise PanelError(f"no CSV files under {directory}")
    manifest = directory / "manifest.txt"
    units = read_manifest(manifest) if manifest.exists() else None
    if grid is None:
        grid = infer_grid(files, schema or CsvSchema())
    return load_panel(files, grid, schema, units)


def infer_grid(files, schema: CsvSchema) -> AgeGrid:
    ages = set()
    for f in files:
        for (_, age, _) in _read_unit_csv(Path(f), schema):
            ages.add(age)
    return AgeGrid(np.array(sorted(ages)))
