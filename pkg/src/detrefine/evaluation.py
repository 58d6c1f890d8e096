"""Detection-to-ground-truth matching and AP/mAP aggregation.

Matching is the greedy protocol used by the classic VOC toolkits: per class
and per image, detections are visited in descending score order and matched
to the unmatched, non-difficult ground-truth box with the highest IoU.
Score ties are broken by stable input order. Difficult ground truth never
counts as a positive; a detection whose strongest overlap is a difficult
box at or above the threshold is IGNORED (neither TP nor FP).
"""

from __future__ import annotations

import enum
from collections import Counter
from dataclasses import dataclass, replace
from typing import Callable, Iterable, Mapping, Sequence

import numpy as np

from .geometry import Detection, GroundTruthObject, iou

COCO_IOU_THRESHOLDS = tuple(round(0.50 + 0.05 * i, 2) for i in range(10))

# pixel-area cut points for the small / medium / large buckets
SMALL_AREA_MAX = 32.0**2
MEDIUM_AREA_MAX = 96.0**2


class Verdict(enum.Enum):
    TP = "TP"
    FP = "FP"
    IGNORED = "IGNORED"


@dataclass(frozen=True)
class DetectionVerdict:
    """Outcome for one detection.

    matched_gt is an index into the ground-truth list handed to
    match_detections; iou_at_match is the IoU with the matched box (TP,
    IGNORED) or the best same-class IoU seen (FP, 0.0 when there is none).
    """

    detection: Detection
    verdict: Verdict
    matched_gt: int | None
    iou_at_match: float


@dataclass(frozen=True)
class MatchOutcome:
    """Per-detection verdicts in descending-score order plus positive counts."""

    records: tuple[DetectionVerdict, ...]
    n_positives: Mapping[int, int]


@dataclass(frozen=True)
class PRCurve:
    """(recall, precision) at each counted detection rank; recall non-decreasing."""

    points: tuple[tuple[float, float], ...]

    def __post_init__(self) -> None:
        recalls = [p[0] for p in self.points]
        if any(b < a for a, b in zip(recalls, recalls[1:])):
            raise ValueError("recall must be non-decreasing along the ranking")


@dataclass(frozen=True)
class EvalReport:
    """Per-class APs and their unweighted mean over classes with ground truth."""

    ap_per_class: Mapping[int, float]
    map: float
    iou_thresholds: tuple[float, ...]
    ap_mode: str
    n_detections: int
    n_ground_truth: int
    map_per_threshold: Mapping[float, float] | None = None
    size_ap: Mapping[str, float | None] | None = None


def match_detections(
    dets: Sequence[Detection],
    gts: Sequence[GroundTruthObject],
    iou_threshold: float,
    class_ids: Iterable[int] | None = None,
) -> MatchOutcome:
    """Greedily match detections against ground truth at one IoU threshold.

    When class_ids is given it is the dataset vocabulary and any detection
    with a class outside it is rejected.
    """
    if not 0.0 < iou_threshold <= 1.0:
        raise ValueError(f"iou_threshold must lie in (0, 1], got {iou_threshold}")
    if class_ids is not None:
        vocab = set(class_ids)
        for d in dets:
            if d.class_id not in vocab:
                raise ValueError(f"class out of vocabulary: {d.class_id}")

    gt_by_key: dict[tuple[str, int], list[int]] = {}
    for gi, gt in enumerate(gts):
        gt_by_key.setdefault((gt.image_id, gt.class_id), []).append(gi)
    n_positives = Counter(gt.class_id for gt in gts if not gt.difficult)

    order = sorted(range(len(dets)), key=lambda i: -dets[i].score)
    matched = [False] * len(gts)
    records: list[DetectionVerdict] = []
    for di in order:
        det = dets[di]
        best_any = -1
        best_any_iou = 0.0
        best_open = -1
        best_open_iou = 0.0
        for gi in gt_by_key.get((det.image_id, det.class_id), ()):
            v = iou(det.bbox, gts[gi].bbox)
            if v > best_any_iou:
                best_any_iou = v
                best_any = gi
            if not gts[gi].difficult and not matched[gi] and v > best_open_iou:
                best_open_iou = v
                best_open = gi
        if best_any >= 0 and gts[best_any].difficult and best_any_iou >= iou_threshold:
            records.append(DetectionVerdict(det, Verdict.IGNORED, best_any, best_any_iou))
        elif best_open >= 0 and best_open_iou >= iou_threshold:
            matched[best_open] = True
            records.append(DetectionVerdict(det, Verdict.TP, best_open, best_open_iou))
        else:
            records.append(DetectionVerdict(det, Verdict.FP, None, best_any_iou))
    return MatchOutcome(tuple(records), dict(n_positives))


def pr_curve(outcome: MatchOutcome, class_id: int) -> PRCurve:
    """Cumulative precision/recall down the ranking for one class.

    IGNORED detections contribute no point and are excluded from the
    precision denominator. With zero positives every recall is 0.
    """
    npos = outcome.n_positives.get(class_id, 0)
    tp = 0
    fp = 0
    points: list[tuple[float, float]] = []
    for rec in outcome.records:
        if rec.detection.class_id != class_id or rec.verdict is Verdict.IGNORED:
            continue
        if rec.verdict is Verdict.TP:
            tp += 1
        else:
            fp += 1
        precision = tp / (tp + fp)
        recall = tp / npos if npos > 0 else 0.0
        points.append((recall, precision))
    return PRCurve(tuple(points))


def average_precision(curve: PRCurve, mode: str = "all_point") -> float:
    """Area under the interpolated precision-recall curve.

    all_point: precision at each recall replaced by the maximum precision at
    any recall >= it, integrated over recall increments from 0.
    eleven_point: mean of that interpolated precision at recalls 0, 0.1, ... 1.
    """
    if not curve.points:
        return 0.0
    recall = np.array([p[0] for p in curve.points])
    precision = np.array([p[1] for p in curve.points])
    envelope = np.maximum.accumulate(precision[::-1])[::-1]
    if mode == "all_point":
        increments = np.diff(np.concatenate(([0.0], recall)))
        return float(np.sum(increments * envelope))
    if mode == "eleven_point":
        total = 0.0
        for t in np.linspace(0.0, 1.0, 11):
            at_least = envelope[recall >= t]
            total += float(at_least[0]) if at_least.size else 0.0
        return total / 11.0
    raise ValueError(f"unknown AP mode {mode!r}")


def restrict_ground_truth(
    outcome: MatchOutcome,
    gts: Sequence[GroundTruthObject],
    keep: Callable[[GroundTruthObject], bool],
) -> MatchOutcome:
    """Re-score an outcome against a ground-truth subset.

    Positives are recounted over kept boxes; true positives matched to a
    dropped box become IGNORED. This realizes per-bucket evaluation (size,
    aspect) without re-matching.
    """
    n_positives = Counter(
        gt.class_id for gt in gts if not gt.difficult and keep(gt)
    )
    records = tuple(
        replace(rec, verdict=Verdict.IGNORED)
        if rec.verdict is Verdict.TP and not keep(gts[rec.matched_gt])
        else rec
        for rec in outcome.records
    )
    return MatchOutcome(records, dict(n_positives))


def _classes_with_ground_truth(gts: Sequence[GroundTruthObject]) -> list[int]:
    return sorted({gt.class_id for gt in gts})


def evaluate_map(
    dets: Sequence[Detection],
    gts: Sequence[GroundTruthObject],
    iou_threshold: float = 0.5,
    mode: str = "all_point",
    class_ids: Iterable[int] | None = None,
) -> EvalReport:
    """Mean average precision at a single IoU threshold."""
    if not gts:
        raise ValueError("empty ground truth")
    outcome = match_detections(dets, gts, iou_threshold, class_ids=class_ids)
    ap = {
        c: average_precision(pr_curve(outcome, c), mode)
        for c in _classes_with_ground_truth(gts)
    }
    return EvalReport(
        ap_per_class=ap,
        map=float(np.mean(list(ap.values()))),
        iou_thresholds=(iou_threshold,),
        ap_mode=mode,
        n_detections=len(dets),
        n_ground_truth=len(gts),
    )


def _size_bucket_predicates() -> dict[str, Callable[[GroundTruthObject], bool]]:
    return {
        "small": lambda gt: gt.bbox.area() < SMALL_AREA_MAX,
        "medium": lambda gt: SMALL_AREA_MAX <= gt.bbox.area() <= MEDIUM_AREA_MAX,
        "large": lambda gt: gt.bbox.area() > MEDIUM_AREA_MAX,
    }


def evaluate_coco_style(
    dets: Sequence[Detection],
    gts: Sequence[GroundTruthObject],
    class_ids: Iterable[int] | None = None,
) -> EvalReport:
    """AP averaged over IoU thresholds 0.50:0.05:0.95 plus size-bucket APs.

    Buckets restrict the ground truth by pixel area; detections are matched
    against the full set and matches landing outside the bucket are ignored.
    A bucket with no ground truth reports None.
    """
    if not gts:
        raise ValueError("empty ground truth")
    classes = _classes_with_ground_truth(gts)
    buckets = _size_bucket_predicates()

    ap_sum = {c: 0.0 for c in classes}
    map_per_threshold: dict[float, float] = {}
    bucket_ap_sums: dict[str, list[float]] = {name: [] for name in buckets}
    for thr in COCO_IOU_THRESHOLDS:
        outcome = match_detections(dets, gts, thr, class_ids=class_ids)
        thr_aps = {}
        for c in classes:
            thr_aps[c] = average_precision(pr_curve(outcome, c), "all_point")
            ap_sum[c] += thr_aps[c]
        map_per_threshold[thr] = float(np.mean(list(thr_aps.values())))
        for name, keep in buckets.items():
            restricted = restrict_ground_truth(outcome, gts, keep)
            bucket_classes = [c for c in classes if restricted.n_positives.get(c, 0) > 0]
            if bucket_classes:
                bucket_ap_sums[name].append(
                    float(
                        np.mean(
                            [
                                average_precision(pr_curve(restricted, c), "all_point")
                                for c in bucket_classes
                            ]
                        )
                    )
                )

    n_thr = len(COCO_IOU_THRESHOLDS)
    ap_per_class = {c: ap_sum[c] / n_thr for c in classes}
    size_ap = {
        name: (float(np.mean(vals)) if vals else None)
        for name, vals in bucket_ap_sums.items()
    }
    return EvalReport(
        ap_per_class=ap_per_class,
        map=float(np.mean(list(ap_per_class.values()))),
        iou_thresholds=COCO_IOU_THRESHOLDS,
        ap_mode="all_point",
        n_detections=len(dets),
        n_ground_truth=len(gts),
        map_per_threshold=map_per_threshold,
        size_ap=size_ap,
    )
