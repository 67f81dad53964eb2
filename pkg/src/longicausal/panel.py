"""Longitudinal panel data model and elementary treatment summaries.

A ClusterPanel holds one observational unit's treatment history A(1..K) in
bbl, binary confounder history L(1..K), end-of-study count outcome Y, and
optional baseline values A(0)/L(0). A PanelDataset is a uniform-horizon
collection of panels and is the unit all estimators operate on.
"""

from __future__ import annotations

import csv
import math
import numbers
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Iterator, Sequence

import numpy as np

from .exceptions import DomainError, PanelError, SchemaError

DEFAULT_BINARIZE_THRESHOLD_BBL = 5_000_000.0

PANEL_CSV_HEADER = ["unit_id", "period", "volume_bbl", "quake_indicator"]
OUTCOME_CSV_HEADER = ["unit_id", "cumulative_quakes"]


def _as_float_tuple(values: Sequence[float], what: str) -> tuple[float, ...]:
    out = []
    for v in values:
        f = float(v)
        if not math.isfinite(f):
            raise PanelError(f"{what} must be finite, got {v!r}")
        out.append(f)
    return tuple(out)


def _as_binary_tuple(values: Sequence[int], what: str) -> tuple[int, ...]:
    out = []
    for v in values:
        i = int(v)
        if i != v or i not in (0, 1):
            raise PanelError(f"{what} must be 0/1, got {v!r}")
        out.append(i)
    return tuple(out)


@dataclass(frozen=True)
class ClusterPanel:
    """One unit's trajectory. Immutable after construction."""

    unit_id: str | int
    treatments: tuple[float, ...]
    confounders: tuple[int, ...]
    outcome: int
    baseline_treatment: float | None = None
    baseline_confounder: int | None = None
    covariates: tuple[float, ...] | None = None

    def __post_init__(self):
        object.__setattr__(self, "treatments", _as_float_tuple(self.treatments, "treatments"))
        object.__setattr__(self, "confounders", _as_binary_tuple(self.confounders, "confounders"))
        if len(self.treatments) < 1:
            raise PanelError("at least one period is required")
        if len(self.treatments) != len(self.confounders):
            raise PanelError(
                f"treatments and confounders must have equal length "
                f"(got {len(self.treatments)} vs {len(self.confounders)})"
            )
        if not isinstance(self.outcome, numbers.Integral):
            raise PanelError(f"outcome must be an integer count, got {self.outcome!r}")
        if self.outcome < 0:
            raise PanelError(f"outcome must be >= 0, got {self.outcome}")
        object.__setattr__(self, "outcome", int(self.outcome))
        if self.baseline_treatment is not None:
            bt = float(self.baseline_treatment)
            if not math.isfinite(bt):
                raise PanelError("baseline_treatment must be finite")
            object.__setattr__(self, "baseline_treatment", bt)
        if self.baseline_confounder is not None:
            bc = int(self.baseline_confounder)
            if bc not in (0, 1):
                raise PanelError(f"baseline_confounder must be 0/1, got {self.baseline_confounder!r}")
            object.__setattr__(self, "baseline_confounder", bc)
        if self.covariates is not None:
            object.__setattr__(self, "covariates", _as_float_tuple(self.covariates, "covariates"))

    @property
    def n_periods(self) -> int:
        return len(self.treatments)

    @property
    def has_baseline(self) -> bool:
        return self.baseline_treatment is not None and self.baseline_confounder is not None


class PanelDataset:
    """Uniform-length collection of ClusterPanel with unique unit ids."""

    def __init__(self, panels: Iterable[ClusterPanel]):
        panels = tuple(panels)
        if not panels:
            raise PanelError("a PanelDataset requires at least one panel")
        k = panels[0].n_periods
        for p in panels:
            if p.n_periods != k:
                raise PanelError(
                    f"all panels must share the same horizon: unit {p.unit_id!r} "
                    f"has K={p.n_periods}, expected K={k}"
                )
        ids = [p.unit_id for p in panels]
        if len(set(ids)) != len(ids):
            dupes = sorted({u for u in ids if ids.count(u) > 1}, key=str)
            raise PanelError(f"unit_ids must be unique, duplicated: {dupes}")
        self.panels = panels
        self.n_periods = k

    @property
    def n_units(self) -> int:
        return len(self.panels)

    @property
    def unit_ids(self) -> list[str | int]:
        return [p.unit_id for p in self.panels]

    @property
    def has_baseline(self) -> bool:
        return all(p.has_baseline for p in self.panels)

    def __len__(self) -> int:
        return len(self.panels)

    def __iter__(self) -> Iterator[ClusterPanel]:
        return iter(self.panels)

    def __eq__(self, other) -> bool:
        return isinstance(other, PanelDataset) and self.panels == other.panels

    def treatment_matrix(self) -> np.ndarray:
        return np.array([p.treatments for p in self.panels], dtype=float)

    def confounder_matrix(self) -> np.ndarray:
        return np.array([p.confounders for p in self.panels], dtype=float)

    def outcome_vector(self) -> np.ndarray:
        return np.array([p.outcome for p in self.panels], dtype=float)

    def baseline_treatment_vector(self) -> np.ndarray:
        if not self.has_baseline:
            raise PanelError("dataset has no baseline period")
        return np.array([p.baseline_treatment for p in self.panels], dtype=float)

    def baseline_confounder_vector(self) -> np.ndarray:
        if not self.has_baseline:
            raise PanelError("dataset has no baseline period")
        return np.array([p.baseline_confounder for p in self.panels], dtype=float)

    def cum_treatment_vector(self) -> np.ndarray:
        return self.treatment_matrix().sum(axis=1)

    def cum_confounder_vector(self) -> np.ndarray:
        return self.confounder_matrix().sum(axis=1)


def cum_treatment(panel: ClusterPanel) -> float:
    """Total injected volume over t=1..K, in bbl."""
    return float(sum(panel.treatments))


def cum_confounder(panel: ClusterPanel) -> float:
    """Number of periods with the confounder present, over t=1..K."""
    return float(sum(panel.confounders))


def binarize_treatment(panel: ClusterPanel, threshold: float = DEFAULT_BINARIZE_THRESHOLD_BBL) -> int:
    """1 if cumulative volume reaches `threshold` bbl (boundary inclusive), else 0."""
    if not (threshold > 0):
        raise DomainError(f"threshold must be positive, got {threshold!r}")
    return 1 if cum_treatment(panel) >= threshold else 0


def _fmt(x: float) -> str:
    return f"{x:.17g}"


def write_panel_csv(dataset: PanelDataset, panel_path: str | Path, outcome_path: str | Path) -> None:
    """Write the long-format panel file and the per-unit outcome file.

    Baselines and covariates are not part of the exchange schema; panels read
    back from CSV carry observed periods only.
    """
    with open(panel_path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(PANEL_CSV_HEADER)
        for p in dataset:
            for t, (a, l) in enumerate(zip(p.treatments, p.confounders), start=1):
                w.writerow([p.unit_id, t, _fmt(a), l])
    with open(outcome_path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(OUTCOME_CSV_HEADER)
        for p in dataset:
            w.writerow([p.unit_id, p.outcome])


def _parse_float(raw: str, row: int, column: str) -> float:
    try:
        v = float(raw)
    except ValueError:
        raise SchemaError(f"expected a number, got {raw!r}", row=row, column=column) from None
    if not math.isfinite(v):
        raise SchemaError(f"expected a finite number, got {raw!r}", row=row, column=column)
    return v


def _parse_int(raw: str, row: int, column: str) -> int:
    try:
        return int(raw)
    except ValueError:
        raise SchemaError(f"expected an integer, got {raw!r}", row=row, column=column) from None


def _check_header(actual: list[str] | None, expected: list[str], path: str | Path) -> None:
    if actual is None or [c.strip() for c in actual] != expected:
        raise SchemaError(
            f"{path}: expected header {','.join(expected)}, got "
            f"{','.join(actual) if actual else '<empty file>'}",
            row=1,
        )


def read_panel_csv(panel_path: str | Path, outcome_path: str | Path) -> PanelDataset:
    """Read a dataset from the panel/outcome CSV pair, validating the schema."""
    per_unit: dict[str, dict[int, tuple[float, int]]] = {}
    order: list[str] = []
    with open(panel_path, newline="") as fh:
        r = csv.reader(fh)
        header = next(r, None)
        _check_header(header, PANEL_CSV_HEADER, panel_path)
        for i, rec in enumerate(r, start=2):
            if not rec:
                continue
            if len(rec) != 4:
                raise SchemaError(f"expected 4 fields, got {len(rec)}", row=i)
            uid = rec[0]
            period = _parse_int(rec[1], i, "period")
            vol = _parse_float(rec[2], i, "volume_bbl")
            quake = _parse_int(rec[3], i, "quake_indicator")
            if period < 1:
                raise SchemaError(f"period must be >= 1, got {period}", row=i, column="period")
            if quake not in (0, 1):
                raise SchemaError(f"quake_indicator must be 0 or 1, got {quake}", row=i, column="quake_indicator")
            if uid not in per_unit:
                per_unit[uid] = {}
                order.append(uid)
            if period in per_unit[uid]:
                raise SchemaError(f"duplicate period {period} for unit {uid!r}", row=i, column="period")
            per_unit[uid][period] = (vol, quake)

    if not per_unit:
        raise SchemaError(f"{panel_path}: no data rows", row=2)

    outcomes: dict[str, int] = {}
    with open(outcome_path, newline="") as fh:
        r = csv.reader(fh)
        header = next(r, None)
        _check_header(header, OUTCOME_CSV_HEADER, outcome_path)
        for i, rec in enumerate(r, start=2):
            if not rec:
                continue
            if len(rec) != 2:
                raise SchemaError(f"expected 2 fields, got {len(rec)}", row=i)
            uid = rec[0]
            if uid in outcomes:
                raise SchemaError(f"duplicate outcome for unit {uid!r}", row=i, column="unit_id")
            y = _parse_int(rec[1], i, "cumulative_quakes")
            if y < 0:
                raise SchemaError(f"cumulative_quakes must be >= 0, got {y}", row=i, column="cumulative_quakes")
            outcomes[uid] = y

    missing = [u for u in order if u not in outcomes]
    if missing:
        raise SchemaError(f"{outcome_path}: missing outcome for units {missing}", column="unit_id")
    extra = [u for u in outcomes if u not in per_unit]
    if extra:
        raise SchemaError(f"{outcome_path}: outcomes for unknown units {extra}", column="unit_id")

    panels = []
    for uid in order:
        periods = per_unit[uid]
        k = max(periods)
        expected = set(range(1, k + 1))
        if set(periods) != expected:
            absent = sorted(expected - set(periods))
            raise SchemaError(f"unit {uid!r} is missing periods {absent}", column="period")
        treatments = [periods[t][0] for t in range(1, k + 1)]
        confounders = [periods[t][1] for t in range(1, k + 1)]
        panels.append(
            ClusterPanel(unit_id=uid, treatments=treatments, confounders=confounders, outcome=outcomes[uid])
        )
    try:
        return PanelDataset(panels)
    except PanelError as exc:
        raise SchemaError(str(exc)) from exc
