"""Multi-temporal NDVI tracking and rust-onset detection."""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from typing import FrozenSet, Iterable, List, Optional, Sequence, Tuple

import numpy as np

from .baseline import ThresholdBands
from .hypercube import SpectralCube
from .indices import compute_index_maps, raw_indices

BELOW_HEALTHY = "below_healthy"
CUMULATIVE_DROP = "cumulative_drop"
DEFAULT_DROP = 0.1


class SeriesFormatError(ValueError):
    pass


@dataclass(frozen=True)
class NdviSeries:
    days: Tuple[float, ...]
    ndvi: Tuple[float, ...]

    def __post_init__(self):
        if len(self.days) != len(self.ndvi):
            raise ValueError("days and ndvi differ in length")
        if any(b <= a for a, b in zip(self.days, self.days[1:])):
            raise ValueError("observation days must be strictly increasing")
        if any(not -1.0 <= v <= 1.0 for v in self.ndvi):
            raise ValueError("NDVI values must lie in [-1, 1]")

    @classmethod
    def from_pairs(cls, pairs: Iterable[Tuple[float, float]]) -> "NdviSeries":
        pairs = list(pairs)
        return cls(tuple(float(d) for d, _ in pairs), tuple(float(v) for _, v in pairs))

    def __len__(self):
        return len(self.days)


@dataclass(frozen=True)
class OnsetReport:
    onset_day: Optional[float]
    peak_ndvi: float
    decline_from_peak: float
    triggered_rules: FrozenSet[str] = field(default_factory=frozenset)


def detect_onset(
    series: NdviSeries,
    bands: ThresholdBands = ThresholdBands(),
    drop_threshold: float = DEFAULT_DROP,
) -> OnsetReport:
    """Earliest day that is below the healthy band AND at least
    ``drop_threshold`` under the running maximum so far.

    With an onset, ``peak_ndvi`` is the running maximum at that day and the
    decline is measured there. Without one, they describe the largest
    drawdown over the whole series, and ``triggered_rules`` lists whichever
    single rule ever fired.
    """
    if len(series) < 2:
        raise ValueError("onset detection needs at least 2 observations")
    running = -np.inf
    fired = set()
    best_peak, best_drop = -np.inf, 0.0
    for day, v in zip(series.days, series.ndvi):
        running = max(running, v)
        drop = running - v
        below = v < bands.healthy_low
        dropped = drop >= drop_threshold
        if below:
            fired.add(BELOW_HEALTHY)
        if dropped:
            fired.add(CUMULATIVE_DROP)
        if below and dropped:
            return OnsetReport(day, running, drop, frozenset(fired))
        if drop > best_drop or best_peak == -np.inf:
            best_peak, best_drop = running, drop
    return OnsetReport(None, max(series.ndvi), best_drop, frozenset(fired))


def series_from_cubes(cubes: Sequence[Tuple[float, SpectralCube]], windows=None) -> NdviSeries:
    """Whole-image mean NDVI of each dated cube."""
    if not cubes:
        raise ValueError("no cubes given")
    days = [d for d, _ in cubes]
    if any(b <= a for a, b in zip(days, days[1:])):
        raise ValueError("cube days must be strictly increasing without duplicates")
    return NdviSeries.from_pairs(
        (day, float(raw_indices(compute_index_maps(cube, windows))[0])) for day, cube in cubes
    )


def read_series_csv(text: str) -> NdviSeries:
    """Parse ``day,ndvi`` CSV (header required); errors name the line."""
    rows = list(csv.reader(io.StringIO(text)))
    if not rows or [c.strip() for c in rows[0]] != ["day", "ndvi"]:
        raise SeriesFormatError("line 1: expected header 'day,ndvi'")
    pairs = []
    for lineno, row in enumerate(rows[1:], start=2):
        if not row or all(not c.strip() for c in row):
            continue
        if len(row) != 2:
            raise SeriesFormatError(f"line {lineno}: expected 2 fields, got {len(row)}")
        try:
            pairs.append((float(row[0]), float(row[1])))
        except ValueError as exc:
            raise SeriesFormatError(f"line {lineno}: {exc}") from None
    try:
        return NdviSeries.from_pairs(pairs)
    except ValueError as exc:
        raise SeriesFormatError(str(exc)) from None


def write_series_csv(series: NdviSeries) -> str:
    return "day,ndvi\n" + "".join(f"{d!r},{v!r}\n" for d, v in zip(series.days, series.ndvi))


REPORT_HEADER = "onset_day,peak_ndvi,decline,rules"


def format_report(report: OnsetReport) -> str:
    onset = "" if report.onset_day is None else f"{report.onset_day:g}"
    rules = ";".join(sorted(report.triggered_rules))
    return f"{REPORT_HEADER}\n{onset},{report.peak_ndvi!r},{report.decline_from_peak!r},{rules}\n"


def parse_report(text: str) -> OnsetReport:
    rows = list(csv.reader(io.StringIO(text)))
    if len(rows) != 2 or ",".join(rows[0]) != REPORT_HEADER:
        raise SeriesFormatError("malformed onset report")
    onset, peak, decline, rules = rows[1]
    return OnsetReport(
        float(onset) if onset else None,
        float(peak),
        float(decline),
        frozenset(r for r in rules.split(";") if r),
    )
