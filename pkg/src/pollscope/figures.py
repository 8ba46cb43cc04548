"""Chart rendering for report tables.

Every table the report stage writes as delimited text is also rendered as
a PNG next to it. Rendering is headless (Agg) and byte-deterministic: the
Software metadata tag is suppressed so repeated runs produce identical
files.
"""

from __future__ import annotations

import logging
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt

from .report import ReportBundle

logger = logging.getLogger(__name__)

POLARITY_COLORS = {"positive": "#2a9d8f", "negative": "#e76f51", "neutral": "#8d99ae"}

_SAVE_KWARGS = {"dpi": 120, "metadata": {"Software": None}, "bbox_inches": "tight"}


def _new_axes(width: float = 6.4, height: float = 4.0):
    fig, ax = plt.subplots(figsize=(width, height))
    ax.grid(axis="y", linewidth=0.4, alpha=0.5)
    ax.set_axisbelow(True)
    return fig, ax


def _save(fig, path: Path) -> Path:
    fig.savefig(path, **_SAVE_KWARGS)
    plt.close(fig)
    return path


def render_distribution(bundle: ReportBundle, path: Path) -> Path:
    d = bundle.distribution
    fig, ax = _new_axes(5.2, 3.6)
    labels = ["positive", "negative", "neutral", "unassigned"]
    values = [d.n_positive, d.n_negative, d.n_neutral, d.n_analyzed - d.n_polarized]
    colors = [POLARITY_COLORS.get(l, "#cccccc") for l in labels]
    ax.bar(labels, values, color=colors)
    ax.set_ylabel("users")
    ax.set_title(f"Assigned polarity ({d.n_polarized} of {d.n_analyzed} users)")
    return _save(fig, path)


def render_breakdown(bundle: ReportBundle, dimension: str, path: Path) -> Path:
    rows = bundle.breakdowns[dimension].rows
    fig, ax = _new_axes(max(5.0, 1.1 * len(rows) + 2.5), 4.0)
    x = range(len(rows))
    width = 0.27
    for offset, key in ((-width, "positive"), (0.0, "negative"), (width, "neutral")):
        values = [getattr(r, f"n_{key}") for r in rows]
        ax.bar([i + offset for i in x], values, width=width, label=key, color=POLARITY_COLORS[key])
    ax.set_xticks(list(x))
    ax.set_xticklabels([r.category for r in rows], rotation=30, ha="right")
    ax.set_ylabel("users")
    ax.set_title(f"Polarity by {dimension}")
    ax.legend()
    return _save(fig, path)


def render_comparison(bundle: ReportBundle, path: Path) -> Path:
    rows = bundle.comparison.rows
    fig, ax = _new_axes(max(5.0, 1.3 * len(rows) + 2.5), 4.0)
    x = range(len(rows))
    width = 0.27
    series = (
        ("predicted yes %", [r.predicted_yes_pct for r in rows], "#2a9d8f"),
        ("official yes %", [r.official_yes_pct for r in rows], "#264653"),
        ("turnout %", [r.turnout_pct for r in rows], "#e9c46a"),
    )
    for i, (label, values, color) in enumerate(series):
        ax.bar([v + (i - 1) * width for v in x], values, width=width, label=label, color=color)
    ax.set_xticks(list(x))
    ax.set_xticklabels([r.location for r in rows], rotation=30, ha="right")
    ax.set_ylabel("percent")
    ax.set_ylim(0, 100)
    ax.set_title("Predicted vs official results")
    ax.legend()
    return _save(fig, path)


def render_all(bundle: ReportBundle, out_dir: str | Path) -> list[Path]:
    """Render every available report object to PNG files under out_dir."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = [render_distribution(bundle, out / "polarity_distribution.png")]
    for dimension in sorted(bundle.breakdowns):
        if bundle.breakdowns[dimension].rows:
            written.append(render_breakdown(bundle, dimension, out / f"breakdown_{dimension}.png"))
    if bundle.comparison is not None and bundle.comparison.rows:
        written.append(render_comparison(bundle, out / "comparison.png"))
    return written
