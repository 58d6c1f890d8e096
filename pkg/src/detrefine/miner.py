"""Label assignment, hard-false-positive identification, and minibatch
sampling for refiner training.

A box is a hard false positive when its confidence exceeds the mining
threshold but its assigned label disagrees with the predicted class; a
confident mislabel onto a real class counts too, not just confident
background. Sampling is uniform with replacement within the selected
image's pool, one Philox substream per batch keyed by (seed, batch index),
so manifests are bit-reproducible and batches independent.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, replace
from typing import Mapping, Sequence

from .geometry import BoundingBox, Detection, GroundTruthObject, iou
from .rng import substream

_IMAGE_RETRIES = 100


class InsufficientSamplesError(RuntimeError):
    """Raised when no selected image can supply the required pool."""


class ROICategory(enum.Enum):
    HARD_FP = "hard_fp"
    FG = "fg"
    BG = "bg"
    EASY_FP = "easy_fp"  # unreachable under the default rules, reserved


class Heuristic(enum.Enum):
    RANDOM = "random"
    FP_ONLY = "fp_only"
    FP_FG = "fp_fg"
    FP_BG = "fp_bg"
    FP_FG_BG = "fp_fg_bg"
    RCNN_LIKE = "rcnn_like"


_POOL_CATEGORIES: dict[Heuristic, tuple[ROICategory, ...]] = {
    Heuristic.RANDOM: (
        ROICategory.HARD_FP,
        ROICategory.FG,
        ROICategory.BG,
        ROICategory.EASY_FP,
    ),
    Heuristic.FP_ONLY: (ROICategory.HARD_FP,),
    Heuristic.FP_FG: (ROICategory.HARD_FP, ROICategory.FG),
    Heuristic.FP_BG: (ROICategory.HARD_FP, ROICategory.BG),
    Heuristic.FP_FG_BG: (ROICategory.HARD_FP, ROICategory.FG, ROICategory.BG),
}


@dataclass(frozen=True)
class LabeledROI:
    image_id: str
    bbox: BoundingBox
    base_class: int
    base_score: float
    assigned_label: int  # 0 = background
    category: ROICategory | None = None


@dataclass(frozen=True)
class SamplerConfig:
    images_per_batch: int = 1  # N
    rois_per_batch: int = 32  # R
    heuristic: Heuristic = Heuristic.FP_FG_BG
    fp_threshold: float = 0.3
    fg_iou: float = 0.5
    seed: int = 0

    def __post_init__(self) -> None:
        if self.images_per_batch < 1:
            raise ValueError("images_per_batch must be >= 1")
        if self.rois_per_batch < 1 or self.rois_per_batch % self.images_per_batch:
            raise ValueError(
                f"rois_per_batch ({self.rois_per_batch}) must be a positive "
                f"multiple of images_per_batch ({self.images_per_batch})"
            )
        if not 0.0 < self.fp_threshold < 1.0:
            raise ValueError(f"fp_threshold must lie in (0, 1), got {self.fp_threshold}")
        if not 0.0 < self.fg_iou <= 1.0:
            raise ValueError(f"fg_iou must lie in (0, 1], got {self.fg_iou}")


@dataclass(frozen=True)
class ManifestEntry:
    image_id: str
    bbox: BoundingBox
    assigned_label: int
    category: ROICategory


@dataclass(frozen=True)
class SampleManifest:
    batches: tuple[tuple[ManifestEntry, ...], ...]
    config: SamplerConfig


def assign_labels(
    dets: Sequence[Detection],
    gts: Sequence[GroundTruthObject],
    fg_iou: float = 0.5,
) -> list[LabeledROI]:
    """Label each box with its max-IoU object's class, background below fg_iou.

    Difficult ground truth is excluded from assignment. Categories are left
    unset; see categorize.
    """
    if not 0.0 < fg_iou <= 1.0:
        raise ValueError(f"fg_iou must lie in (0, 1], got {fg_iou}")
    by_image: dict[str, list[GroundTruthObject]] = {}
    for g in gts:
        if not g.difficult:
            by_image.setdefault(g.image_id, []).append(g)
    rois = []
    for d in dets:
        best = 0.0
        label = 0
        for g in by_image.get(d.image_id, ()):
            v = iou(d.bbox, g.bbox)
            if v > best:
                best = v
                label = g.class_id
        if best < fg_iou:
            label = 0
        rois.append(LabeledROI(d.image_id, d.bbox, d.class_id, d.score, label))
    return rois


def categorize(rois: Sequence[LabeledROI], fp_threshold: float = 0.3) -> list[LabeledROI]:
    """Partition ROIs into HARD_FP / FG / BG.

    HARD_FP: confident (score above threshold) and mislabeled, including
    confident background. FG: any box assigned a real class that is not a
    hard false positive; a low-score mislabel keeps its assigned label as
    correctable supervision. BG: unconfident background.
    """
    if not 0.0 < fp_threshold < 1.0:
        raise ValueError(f"fp_threshold must lie in (0, 1), got {fp_threshold}")
    out = []
    for r in rois:
        if r.base_score > fp_threshold and r.assigned_label != r.base_class:
            cat = ROICategory.HARD_FP
        elif r.assigned_label != 0:
            cat = ROICategory.FG
        else:
            cat = ROICategory.BG
        out.append(replace(r, category=cat))
    return out


def _pools_by_image(
    rois: Sequence[LabeledROI],
) -> tuple[list[str], dict[str, dict[ROICategory, list[LabeledROI]]]]:
    image_ids = sorted({r.image_id for r in rois})
    pools: dict[str, dict[ROICategory, list[LabeledROI]]] = {
        i: {c: [] for c in ROICategory} for i in image_ids
    }
    for r in rois:
        if r.category is None:
            raise ValueError("ROIs must be categorized before sampling")
        pools[r.image_id][r.category].append(r)
    return image_ids, pools


def _image_pool(
    pools: Mapping[ROICategory, list[LabeledROI]], heuristic: Heuristic
) -> list[LabeledROI] | tuple[list[LabeledROI], list[LabeledROI]]:
    if heuristic is Heuristic.RCNN_LIKE:
        return pools[ROICategory.FG], pools[ROICategory.BG]
    merged: list[LabeledROI] = []
    for cat in _POOL_CATEGORIES[heuristic]:
        merged.extend(pools[cat])
    return merged


def sample_minibatches(
    rois: Sequence[LabeledROI],
    config: SamplerConfig,
    n_batches: int,
) -> SampleManifest:
    """Draw seeded training minibatches under the configured heuristic.

    Each batch selects N images uniformly, then R/N ROIs per image with
    replacement from that image's pool. RCNN_LIKE fills a fixed quarter of
    each image's quota from FG and the rest from BG. An image whose pool is
    empty is redrawn up to a bounded retry count.
    """
    if n_batches < 0:
        raise ValueError("n_batches must be >= 0")
    image_ids, pools = _pools_by_image(rois)
    if not image_ids:
        raise InsufficientSamplesError("insufficient samples: no ROIs at all")
    per_image = config.rois_per_batch // config.images_per_batch
    n_fg = math.ceil(per_image / 4)

    batches = []
    for b in range(n_batches):
        rng = substream(config.seed, b)
        entries: list[ManifestEntry] = []
        for _ in range(config.images_per_batch):
            chosen = None
            for _ in range(_IMAGE_RETRIES):
                image_id = image_ids[int(rng.integers(0, len(image_ids)))]
                pool = _image_pool(pools[image_id], config.heuristic)
                if config.heuristic is Heuristic.RCNN_LIKE:
                    if pool[0] and pool[1]:
                        chosen = pool
                        break
                elif pool:
                    chosen = pool
                    break
            if chosen is None:
                raise InsufficientSamplesError(
                    f"insufficient samples: no image offers a non-empty "
                    f"{config.heuristic.value} pool after {_IMAGE_RETRIES} draws"
                )
            if config.heuristic is Heuristic.RCNN_LIKE:
                fg_pool, bg_pool = chosen
                picks = [
                    fg_pool[int(i)] for i in rng.integers(0, len(fg_pool), size=n_fg)
                ] + [
                    bg_pool[int(i)]
                    for i in rng.integers(0, len(bg_pool), size=per_image - n_fg)
                ]
            else:
                picks = [
                    chosen[int(i)] for i in rng.integers(0, len(chosen), size=per_image)
                ]
            entries.extend(
                ManifestEntry(r.image_id, r.bbox, r.assigned_label, r.category)
                for r in picks
            )
        batches.append(tuple(entries))
    return SampleManifest(tuple(batches), config)
