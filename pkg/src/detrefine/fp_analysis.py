"""Diagnostics over false positives: score histograms, the hypothesized
upper-bound mAP obtained by deleting confident false positives, the
Loc/Sim/Oth/BG error taxonomy, and per-characteristic sensitivity.

"Correcting" a false positive is implemented as deleting it, which is the
same as reclassifying it to background for ranking purposes.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass
from typing import Mapping, Sequence

from .evaluation import (
    Verdict,
    evaluate_map,
    match_detections,
    pr_curve,
    average_precision,
    restrict_ground_truth,
)
from .geometry import Detection, GroundTruthObject, iou

DEFAULT_BIN_EDGES = (0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0)

LOC = "Loc"
SIM = "Sim"
OTH = "Oth"
BG = "BG"
CATEGORIES = (LOC, SIM, OTH, BG)


@dataclass(frozen=True)
class FPBinReport:
    """False-positive counts per score interval [e_i, e_i+1); the last
    interval is closed so every FP at or above the lowest edge is counted."""

    bin_edges: tuple[float, ...]
    counts: tuple[int, ...]
    total_fp: int


@dataclass(frozen=True)
class HypothesizedMapCurve:
    """mAP after deleting every false positive scoring above each threshold."""

    points: tuple[tuple[float, float], ...]  # (threshold, map)
    base_map: float


@dataclass(frozen=True)
class SimilarityGroups:
    """Partition of class ids into named similarity groups."""

    groups: Mapping[str, tuple[int, ...]]

    def __post_init__(self) -> None:
        seen: set[int] = set()
        for name, members in self.groups.items():
            for c in members:
                if c in seen:
                    raise ValueError(f"class {c} appears in more than one group")
                seen.add(c)

    def group_of(self, class_id: int) -> str:
        for name, members in self.groups.items():
            if class_id in members:
                return name
        raise ValueError(f"class {class_id} is not in any similarity group")

    @classmethod
    def single_group(cls, class_ids: Sequence[int], name: str = "all") -> SimilarityGroups:
        return cls({name: tuple(class_ids)})


@dataclass(frozen=True)
class CategorizedFP:
    detection: Detection
    category: str


@dataclass(frozen=True)
class TaxonomyReport:
    """Each false positive in exactly one of Loc / Sim / Oth / BG."""

    entries: tuple[CategorizedFP, ...]
    counts: Mapping[str, int]
    counts_per_class: Mapping[int, Mapping[str, int]]
    groups: SimilarityGroups


@dataclass(frozen=True)
class SensitivityReport:
    """AP with ground truth restricted to each characteristic bin."""

    characteristic: str
    bin_edges: tuple[float, ...]
    ap_per_bin: tuple[float | None, ...]
    spread: float  # max - min over non-empty bins


def fp_score_bins(
    dets: Sequence[Detection],
    gts: Sequence[GroundTruthObject],
    iou_threshold: float = 0.5,
    bin_edges: Sequence[float] = DEFAULT_BIN_EDGES,
) -> FPBinReport:
    """Histogram of false-positive confidence scores."""
    edges = tuple(float(e) for e in bin_edges)
    if len(edges) < 2 or any(b <= a for a, b in zip(edges, edges[1:])):
        raise ValueError(f"bin edges must be strictly increasing, got {edges}")
    if edges[0] < 0.0 or edges[-1] > 1.0:
        raise ValueError(f"bin edges must lie in [0, 1], got {edges}")
    outcome = match_detections(dets, gts, iou_threshold)
    counts = [0] * (len(edges) - 1)
    total = 0
    for rec in outcome.records:
        if rec.verdict is not Verdict.FP:
            continue
        total += 1
        s = rec.detection.score
        if s < edges[0]:
            continue
        for i in range(len(edges) - 1):
            last = i == len(edges) - 2
            if edges[i] <= s < edges[i + 1] or (last and s == edges[-1]):
                counts[i] += 1
                break
    return FPBinReport(edges, tuple(counts), total)


def hypothesized_map_curve(
    dets: Sequence[Detection],
    gts: Sequence[GroundTruthObject],
    iou_threshold: float = 0.5,
    thresholds: Sequence[float] = (0.0, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0),
    ap_mode: str = "all_point",
) -> HypothesizedMapCurve:
    """Upper-bound diagnostic: delete all FPs scoring above t, re-evaluate.

    Deleting FPs never disturbs existing TP assignments (false positives do
    not occupy ground truth), so each point is an honest re-evaluation of
    the surviving detections.
    """
    if any(not 0.0 <= t <= 1.0 for t in thresholds):
        raise ValueError("thresholds must lie in [0, 1]")
    outcome = match_detections(dets, gts, iou_threshold)
    fp_set = {
        id(rec.detection) for rec in outcome.records if rec.verdict is Verdict.FP
    }
    base = evaluate_map(dets, gts, iou_threshold, ap_mode).map
    points = []
    for t in thresholds:
        kept = [
            d for d in dets if not (id(d) in fp_set and d.score > t)
        ]
        points.append((float(t), evaluate_map(kept, gts, iou_threshold, ap_mode).map))
    return HypothesizedMapCurve(tuple(points), base)


def _max_iou(det: Detection, gts: Sequence[GroundTruthObject]) -> float:
    return max((iou(det.bbox, g.bbox) for g in gts), default=0.0)


def fp_taxonomy(
    dets: Sequence[Detection],
    gts: Sequence[GroundTruthObject],
    iou_threshold: float = 0.5,
    groups: SimilarityGroups | None = None,
) -> TaxonomyReport:
    """Categorize every false positive by precedence Loc > Sim > Oth > BG.

    Loc: best same-class overlap in [0.1, 0.5). Sim: overlap >= 0.1 with a
    different class in the same similarity group. Oth: overlap >= 0.1 with
    any other class. BG: everything else. Difficult ground truth
    participates in the overlap tests (it is still a real object).
    """
    if groups is None:
        groups = SimilarityGroups.single_group(sorted({g.class_id for g in gts}))
    for g in gts:
        groups.group_of(g.class_id)  # raises when a class has no group

    outcome = match_detections(dets, gts, iou_threshold)
    by_image: dict[str, list[GroundTruthObject]] = {}
    for g in gts:
        by_image.setdefault(g.image_id, []).append(g)

    entries: list[CategorizedFP] = []
    for rec in outcome.records:
        if rec.verdict is not Verdict.FP:
            continue
        d = rec.detection
        in_image = by_image.get(d.image_id, [])
        det_group = groups.group_of(d.class_id)
        same = _max_iou(d, [g for g in in_image if g.class_id == d.class_id])
        similar = _max_iou(
            d,
            [
                g
                for g in in_image
                if g.class_id != d.class_id and groups.group_of(g.class_id) == det_group
            ],
        )
        other = _max_iou(
            d,
            [
                g
                for g in in_image
                if g.class_id != d.class_id and groups.group_of(g.class_id) != det_group
            ],
        )
        if 0.1 <= same < 0.5:
            category = LOC
        elif similar >= 0.1:
            category = SIM
        elif other >= 0.1:
            category = OTH
        else:
            category = BG
        entries.append(CategorizedFP(d, category))

    counts = Counter(e.category for e in entries)
    per_class: dict[int, Counter] = {}
    for e in entries:
        per_class.setdefault(e.detection.class_id, Counter())[e.category] += 1
    return TaxonomyReport(
        entries=tuple(entries),
        counts={c: counts.get(c, 0) for c in CATEGORIES},
        counts_per_class={
            c: {cat: cnt.get(cat, 0) for cat in CATEGORIES}
            for c, cnt in sorted(per_class.items())
        },
        groups=groups,
    )


def sensitivity_by_characteristic(
    dets: Sequence[Detection],
    gts: Sequence[GroundTruthObject],
    iou_threshold: float = 0.5,
    characteristic: str = "size",
    bin_edges: Sequence[float] | None = None,
    ap_mode: str = "all_point",
) -> SensitivityReport:
    """mAP with ground truth restricted to bins of area or aspect ratio.

    Matching runs once against the full ground truth; matches landing
    outside the bin are ignored, as in size-bucketed evaluation. Bins are
    [e_i, e_i+1), the last closed, and must cover every ground-truth box.
    """
    if characteristic == "size":
        measure = lambda g: g.bbox.area()
        default_edges = (0.0, 32.0**2, 96.0**2, float("inf"))
    elif characteristic == "aspect":
        measure = lambda g: (
            g.bbox.width / g.bbox.height if g.bbox.height > 0 else float("inf")
        )
        default_edges = (0.0, 0.5, 2.0, float("inf"))
    else:
        raise ValueError(f"unknown characteristic {characteristic!r}")
    edges = tuple(float(e) for e in (bin_edges if bin_edges is not None else default_edges))
    if len(edges) < 2 or any(b <= a for a, b in zip(edges, edges[1:])):
        raise ValueError(f"bin edges must be strictly increasing, got {edges}")
    values = {i: measure(g) for i, g in enumerate(gts)}
    for i, v in values.items():
        if not (edges[0] <= v <= edges[-1]):
            raise ValueError(
                f"bins must cover all ground truth: value {v} outside {edges}"
            )

    outcome = match_detections(dets, gts, iou_threshold)
    classes = sorted({g.class_id for g in gts})
    aps: list[float | None] = []
    for i in range(len(edges) - 1):
        last = i == len(edges) - 2
        lo, hi = edges[i], edges[i + 1]

        def in_bin(g, lo=lo, hi=hi, last=last):
            v = measure(g)
            return lo <= v < hi or (last and v == hi)

        restricted = restrict_ground_truth(outcome, gts, in_bin)
        present = [c for c in classes if restricted.n_positives.get(c, 0) > 0]
        if not present:
            aps.append(None)
            continue
        aps.append(
            sum(average_precision(pr_curve(restricted, c), ap_mode) for c in present)
            / len(present)
        )
    known = [a for a in aps if a is not None]
    spread = (max(known) - min(known)) if known else 0.0
    return SensitivityReport(characteristic, edges, tuple(aps), spread)
