"""Figure rendering for the analyze/report commands.

Each function writes one PNG next to the corresponding CSV table. Uses the
Agg backend so rendering works headless.
"""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

from .evaluation import EvalReport  # noqa: E402
from .fp_analysis import (  # noqa: E402
    CATEGORIES,
    FPBinReport,
    HypothesizedMapCurve,
    SensitivityReport,
    TaxonomyReport,
)

_BASE_COLOR = "#3b6fb6"
_REFINED_COLOR = "#e08214"


def _finish(fig, path: str | Path) -> None:
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def save_fp_bins_figure(
    path: str | Path,
    report: FPBinReport,
    refined: FPBinReport | None = None,
) -> None:
    """Bar chart of false-positive counts per confidence interval."""
    fig, ax = plt.subplots(figsize=(6, 4))
    labels = [
        f"[{lo:.2f}, {hi:.2f})"
        for lo, hi in zip(report.bin_edges, report.bin_edges[1:])
    ]
    xs = range(len(labels))
    if refined is None:
        ax.bar(xs, report.counts, color=_BASE_COLOR)
    else:
        width = 0.4
        ax.bar(
            [x - width / 2 for x in xs], report.counts, width,
            color=_BASE_COLOR, label="base",
        )
        ax.bar(
            [x + width / 2 for x in xs], refined.counts, width,
            color=_REFINED_COLOR, label="refined",
        )
        ax.legend()
    ax.set_xticks(list(xs))
    ax.set_xticklabels(labels, rotation=45, ha="right")
    ax.set_xlabel("confidence interval")
    ax.set_ylabel("false positives")
    ax.set_title("False positives by confidence")
    _finish(fig, path)


def save_map_curve_figure(
    path: str | Path,
    curve: HypothesizedMapCurve,
    refined: HypothesizedMapCurve | None = None,
) -> None:
    """Hypothesized mAP as confident false positives are removed."""
    fig, ax = plt.subplots(figsize=(6, 4))
    xs = [t for t, _ in curve.points]
    ax.plot(xs, [m for _, m in curve.points], "o-", color=_BASE_COLOR, label="base")
    if refined is not None:
        ax.plot(
            [t for t, _ in refined.points],
            [m for _, m in refined.points],
            "s-", color=_REFINED_COLOR, label="refined",
        )
    ax.axhline(curve.base_map, color="gray", lw=0.8, ls="--")
    ax.set_xlabel("removal threshold")
    ax.set_ylabel("hypothesized mAP")
    ax.set_title("mAP after removing confident false positives")
    ax.legend()
    _finish(fig, path)


def save_taxonomy_figure(
    path: str | Path,
    report: TaxonomyReport,
    refined: TaxonomyReport | None = None,
) -> None:
    """False-positive category counts."""
    fig, ax = plt.subplots(figsize=(6, 4))
    xs = range(len(CATEGORIES))
    base = [report.counts.get(c, 0) for c in CATEGORIES]
    if refined is None:
        ax.bar(xs, base, color=_BASE_COLOR)
    else:
        width = 0.4
        ax.bar([x - width / 2 for x in xs], base, width, color=_BASE_COLOR, label="base")
        ax.bar(
            [x + width / 2 for x in xs],
            [refined.counts.get(c, 0) for c in CATEGORIES],
            width, color=_REFINED_COLOR, label="refined",
        )
        ax.legend()
    ax.set_xticks(list(xs))
    ax.set_xticklabels(CATEGORIES)
    ax.set_ylabel("false positives")
    ax.set_title("False-positive taxonomy")
    _finish(fig, path)


def save_sensitivity_figure(path: str | Path, report: SensitivityReport) -> None:
    """Per-bin AP for one object characteristic."""
    fig, ax = plt.subplots(figsize=(6, 4))
    labels = []
    values = []
    for i, ap in enumerate(report.ap_per_bin):
        lo, hi = report.bin_edges[i], report.bin_edges[i + 1]
        labels.append(f"[{lo:g}, {hi:g})")
        values.append(0.0 if ap is None else ap)
    bars = ax.bar(range(len(values)), values, color=_BASE_COLOR)
    for bar, ap in zip(bars, report.ap_per_bin):
        if ap is None:
            bar.set_color("lightgray")
    ax.set_xticks(range(len(labels)))
    ax.set_xticklabels(labels, rotation=45, ha="right")
    ax.set_ylim(0, 1.05)
    ax.set_ylabel("AP")
    ax.set_title(f"AP by {report.characteristic} (spread {report.spread:.3f})")
    _finish(fig, path)


def save_map_comparison_figure(
    path: str | Path,
    base: EvalReport,
    refined: EvalReport,
    class_names: dict[int, str] | None = None,
) -> None:
    """Per-class AP, base vs refined."""
    fig, ax = plt.subplots(figsize=(6, 4))
    classes = sorted(base.ap_per_class)
    names = [
        (class_names or {}).get(c, f"class {c}") for c in classes
    ]
    width = 0.4
    xs = range(len(classes))
    ax.bar(
        [x - width / 2 for x in xs],
        [base.ap_per_class[c] for c in classes],
        width, color=_BASE_COLOR, label=f"base (mAP {base.map:.3f})",
    )
    ax.bar(
        [x + width / 2 for x in xs],
        [refined.ap_per_class.get(c, 0.0) for c in classes],
        width, color=_REFINED_COLOR, label=f"refined (mAP {refined.map:.3f})",
    )
    ax.set_xticks(list(xs))
    ax.set_xticklabels(names)
    ax.set_ylim(0, 1.05)
    ax.set_ylabel("AP")
    ax.set_title("Per-class AP, base vs refined")
    ax.legend()
    _finish(fig, path)
