"""Aggregate per-user polarity and demographics into poll-style reports.

All outputs are deterministic: fixed column order, sorted rows, two
decimal places for percentages. Charts of the same tables are rendered by
the figures module.
"""

from __future__ import annotations

import csv
import logging
import unicodedata
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Sequence

from .errors import InputOutputError, ValidationError
from .polarity import NEGATIVE, NEUTRAL, POSITIVE, UNASSIGNED, UserPolarity

logger = logging.getLogger(__name__)

DIMENSIONS = ("gender", "age_bucket", "ethnicity", "region", "city", "country")

OTHERS = "Others"


@dataclass(frozen=True)
class PolarityDistribution:
    n_positive: int
    n_negative: int
    n_neutral: int
    n_polarized: int
    n_analyzed: int


@dataclass(frozen=True)
class BreakdownRow:
    category: str
    n_positive: int
    n_negative: int
    n_neutral: int

    @property
    def total(self) -> int:
        return self.n_positive + self.n_negative + self.n_neutral


@dataclass
class DemographicBreakdown:
    dimension: str
    rows: list[BreakdownRow]
    excluded: int  # polarized users whose demographic value is unknown


@dataclass(frozen=True)
class OfficialComparison:
    location: str
    predicted_yes_pct: float
    official_yes_pct: float
    turnout_pct: float


@dataclass
class ComparisonResult:
    rows: list[OfficialComparison]
    unmatched_predicted: list[str]
    unmatched_official: list[str]


@dataclass(frozen=True)
class ReportRecord:
    """One analyzed user: assigned polarity joined with demographics."""

    user_id: str
    polarity: str
    gender: str | None = None
    age_bucket: str | None = None
    ethnicity: str | None = None
    country: str | None = None
    region: str | None = None
    city: str | None = None


@dataclass
class ReportBundle:
    distribution: PolarityDistribution
    breakdowns: dict[str, DemographicBreakdown] = field(default_factory=dict)
    shares: dict[str, list[tuple[str, float, int, int]]] = field(default_factory=dict)
    comparison: ComparisonResult | None = None


def polarity_distribution(user_polarities: Iterable[UserPolarity]) -> PolarityDistribution:
    """Count users per assigned polarity; unassigned ones only add to analyzed."""
    counts = Counter(up.value for up in user_polarities)
    n_pos, n_neg, n_neu = counts[POSITIVE], counts[NEGATIVE], counts[NEUTRAL]
    polarized = n_pos + n_neg + n_neu
    return PolarityDistribution(
        n_positive=n_pos,
        n_negative=n_neg,
        n_neutral=n_neu,
        n_polarized=polarized,
        n_analyzed=polarized + counts[UNASSIGNED],
    )


def breakdown(
    records: Iterable[ReportRecord], dimension: str, top_k: int = 5
) -> DemographicBreakdown:
    """Group polarized users by one demographic dimension.

    Users with an unknown value are excluded from the rows but counted.
    Categories sort by total descending (ties by name); everything past
    the top_k largest is merged into an "Others" row, kept last.
    """
    if dimension not in DIMENSIONS:
        raise ValidationError(f"unknown breakdown dimension {dimension!r}")
    per_category: dict[str, Counter[str]] = {}
    excluded = 0
    for record in records:
        if record.polarity not in (POSITIVE, NEGATIVE, NEUTRAL):
            continue
        value = getattr(record, dimension)
        if not value or value == "unknown":
            excluded += 1
            continue
        per_category.setdefault(value, Counter())[record.polarity] += 1
    rows = [
        BreakdownRow(cat, c[POSITIVE], c[NEGATIVE], c[NEUTRAL]) for cat, c in per_category.items()
    ]
    rows.sort(key=lambda r: (-r.total, r.category))
    head, tail = rows[:top_k], rows[top_k:]
    if tail:
        head.append(
            BreakdownRow(
                OTHERS,
                sum(r.n_positive for r in tail),
                sum(r.n_negative for r in tail),
                sum(r.n_neutral for r in tail),
            )
        )
    return DemographicBreakdown(dimension=dimension, rows=head, excluded=excluded)


def predicted_yes_share(polarities: Iterable[str]) -> float | None:
    """Percent positive among positive+negative users; None when undefined.

    Neutral and unassigned users do not enter the ratio: a two-option
    referendum offers them no ballot line.
    """
    counts = Counter(polarities)
    n_pos, n_neg = counts[POSITIVE], counts[NEGATIVE]
    if n_pos + n_neg == 0:
        return None
    return 100.0 * n_pos / (n_pos + n_neg)


def shares_by_location(
    records: Iterable[ReportRecord], level: str
) -> list[tuple[str, float, int, int]]:
    """Predicted yes share per location value at one level (region/city/country).

    Locations where no positive or negative user exists are omitted with a
    warning. Rows are sorted by location name.
    """
    if level not in ("region", "city", "country"):
        raise ValidationError(f"unknown location level {level!r}")
    grouped: dict[str, Counter[str]] = {}
    for record in records:
        value = getattr(record, level)
        if value:
            grouped.setdefault(value, Counter())[record.polarity] += 1
    rows: list[tuple[str, float, int, int]] = []
    for location in sorted(grouped):
        counts = grouped[location]
        n_pos, n_neg = counts[POSITIVE], counts[NEGATIVE]
        if n_pos + n_neg == 0:
            logger.warning("no polarized users in %s %r; share undefined, row omitted", level, location)
            continue
        rows.append((location, 100.0 * n_pos / (n_pos + n_neg), n_pos, n_neg))
    return rows


def normalize_location(name: str) -> str:
    """Case-fold, strip diacritics and punctuation for location joins."""
    decomposed = unicodedata.normalize("NFKD", name)
    stripped = "".join(ch for ch in decomposed if not unicodedata.combining(ch))
    cleaned = "".join(ch if ch.isalnum() or ch.isspace() else " " for ch in stripped.casefold())
    return " ".join(cleaned.split())


def load_official_results(path: str | Path) -> dict[str, tuple[str, float, float]]:
    """Parse the official results CSV into {normalized name: (name, yes, turnout)}."""
    results: dict[str, tuple[str, float, float]] = {}
    try:
        handle = open(path, encoding="utf-8", newline="")
    except OSError as exc:
        raise InputOutputError(f"cannot read official results {path}: {exc}") from exc
    with handle:
        reader = csv.reader(handle)
        header = next(reader, None)
        if header is None:
            return results  # empty file: nothing official to join against
        if header != ["location", "official_yes_pct", "turnout_pct"]:
            raise InputOutputError(f"{path}:1: expected header location,official_yes_pct,turnout_pct")
        for lineno, row in enumerate(reader, start=2):
            try:
                location, yes_pct, turnout = row[0], float(row[1]), float(row[2])
                if not 0.0 <= yes_pct <= 100.0 or not 0.0 <= turnout <= 100.0:
                    raise ValueError("percentage out of range")
            except (IndexError, ValueError) as exc:
                raise InputOutputError(f"{path}:{lineno}: bad official-results row ({exc})") from exc
            results[normalize_location(location)] = (location, yes_pct, turnout)
    return results


def compare_official(
    predicted: Mapping[str, float], official_path: str | Path
) -> ComparisonResult:
    """Join predicted shares with official rows on normalized location names."""
    official = load_official_results(official_path)
    pred_by_key = {normalize_location(name): (name, share) for name, share in predicted.items()}
    rows: list[OfficialComparison] = []
    for key in sorted(set(pred_by_key) & set(official)):
        name, share = pred_by_key[key]
        official_name, yes_pct, turnout = official[key]
        rows.append(OfficialComparison(official_name, share, yes_pct, turnout))
    unmatched_predicted = sorted(pred_by_key[k][0] for k in set(pred_by_key) - set(official))
    unmatched_official = sorted(official[k][0] for k in set(official) - set(pred_by_key))
    return ComparisonResult(rows, unmatched_predicted, unmatched_official)


# --- emission ----------------------------------------------------------------


def _open_out(path: Path):
    try:
        return open(path, "w", encoding="utf-8", newline="")
    except OSError as exc:
        raise InputOutputError(f"cannot write report file {path}: {exc}") from exc


def _write_table(path: Path, header: Sequence[str], rows: Sequence[Sequence], fmt: str) -> None:
    with _open_out(path) as handle:
        if fmt == "csv":
            writer = csv.writer(handle, lineterminator="\n")
            writer.writerow(header)
            writer.writerows(rows)
        else:
            cells = [list(map(str, header))] + [list(map(str, r)) for r in rows]
            widths = [max(len(row[i]) for row in cells) for i in range(len(header))]
            for row in cells:
                handle.write("  ".join(c.ljust(w) for c, w in zip(row, widths)).rstrip() + "\n")


def emit(bundle: ReportBundle, out_dir: str | Path, fmt: str = "csv") -> list[Path]:
    """Write every report table under out_dir; returns the written paths.

    Emission is byte-deterministic for identical inputs: no timestamps,
    fixed ordering, percentages at two decimals.
    """
    if fmt not in ("csv", "structured_text"):
        raise ValidationError(f"unknown report format {fmt!r}")
    ext = "csv" if fmt == "csv" else "txt"
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written: list[Path] = []

    d = bundle.distribution
    path = out / f"polarity_distribution.{ext}"
    _write_table(
        path,
        ["n_positive", "n_negative", "n_neutral", "n_polarized", "n_analyzed"],
        [[d.n_positive, d.n_negative, d.n_neutral, d.n_polarized, d.n_analyzed]],
        fmt,
    )
    written.append(path)

    for dimension in sorted(bundle.breakdowns):
        b = bundle.breakdowns[dimension]
        path = out / f"breakdown_{dimension}.{ext}"
        rows = [[r.category, r.n_positive, r.n_negative, r.n_neutral] for r in b.rows]
        _write_table(path, ["category", "n_positive", "n_negative", "n_neutral"], rows, fmt)
        written.append(path)
    if bundle.breakdowns:
        path = out / f"breakdown_excluded.{ext}"
        rows = [[dim, bundle.breakdowns[dim].excluded] for dim in sorted(bundle.breakdowns)]
        _write_table(path, ["dimension", "excluded_unknown"], rows, fmt)
        written.append(path)

    for level in sorted(bundle.shares):
        path = out / f"predicted_yes_{level}.{ext}"
        rows = [
            [name, f"{share:.2f}", n_pos, n_neg] for name, share, n_pos, n_neg in bundle.shares[level]
        ]
        _write_table(path, ["location", "predicted_yes_pct", "n_positive", "n_negative"], rows, fmt)
        written.append(path)

    if bundle.comparison is not None:
        path = out / f"comparison.{ext}"
        rows = [
            [r.location, f"{r.predicted_yes_pct:.2f}", f"{r.official_yes_pct:.2f}", f"{r.turnout_pct:.2f}"]
            for r in bundle.comparison.rows
        ]
        _write_table(
            path, ["location", "predicted_yes_pct", "official_yes_pct", "turnout_pct"], rows, fmt
        )
        written.append(path)
        path = out / f"comparison_unmatched.{ext}"
        rows = [["predicted_only", name] for name in bundle.comparison.unmatched_predicted]
        rows += [["official_only", name] for name in bundle.comparison.unmatched_official]
        _write_table(path, ["side", "location"], rows, fmt)
        written.append(path)
    return written
