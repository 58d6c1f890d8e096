"""End-to-end driver: mine, train, refine, evaluate.

Used by the CLI sweep command and by the bundled benchmark; everything it
does is a composition of the module-level operations.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Sequence

from .evaluation import EvalReport, Verdict, evaluate_map, match_detections
from .geometry import Detection, GroundTruthObject, Image
from .miner import SamplerConfig, assign_labels, categorize, sample_minibatches
from .refiner import FeatureSpec, RefinerModel, TrainConfig, refine_detections, train_refiner


@dataclass(frozen=True)
class PipelineParams:
    sampler: SamplerConfig = SamplerConfig()
    train: TrainConfig = TrainConfig()
    feature: FeatureSpec = FeatureSpec()
    n_batches: int = 300
    iou_threshold: float = 0.5
    ap_mode: str = "all_point"
    hard_fp_score: float = 0.3


@dataclass(frozen=True)
class PipelineResult:
    base: EvalReport
    refined: EvalReport
    base_hard_fp: int
    refined_hard_fp: int
    model: RefinerModel = field(repr=False)
    refined_detections: tuple[Detection, ...] = field(repr=False)
    refine_seconds_per_image: float = 0.0

    @property
    def map_gain(self) -> float:
        return self.refined.map - self.base.map


def count_hard_fp(
    dets: Sequence[Detection],
    gts: Sequence[GroundTruthObject],
    iou_threshold: float = 0.5,
    score_threshold: float = 0.3,
) -> int:
    """False positives above the confidence threshold."""
    outcome = match_detections(dets, gts, iou_threshold)
    return sum(
        1
        for r in outcome.records
        if r.verdict is Verdict.FP and r.detection.score > score_threshold
    )


def run_pipeline(
    train_images: Sequence[Image],
    train_gts: Sequence[GroundTruthObject],
    train_dets: Sequence[Detection],
    test_images: Sequence[Image],
    test_gts: Sequence[GroundTruthObject],
    test_dets: Sequence[Detection],
    params: PipelineParams = PipelineParams(),
) -> PipelineResult:
    """Mine the train split, fit the refiner, fuse and score the test split."""
    class_count = max(
        (g.class_id for g in list(train_gts) + list(test_gts)), default=0
    )
    rois = categorize(
        assign_labels(train_dets, train_gts, params.sampler.fg_iou),
        params.sampler.fp_threshold,
    )
    manifest = sample_minibatches(rois, params.sampler, params.n_batches)
    model = train_refiner(
        train_images, manifest, params.train, params.feature, class_count=class_count
    )

    started = time.perf_counter()
    refined = refine_detections(model, test_images, test_dets)
    elapsed = time.perf_counter() - started

    base_report = evaluate_map(
        test_dets, test_gts, params.iou_threshold, params.ap_mode
    )
    refined_report = evaluate_map(
        refined, test_gts, params.iou_threshold, params.ap_mode
    )
    return PipelineResult(
        base=base_report,
        refined=refined_report,
        base_hard_fp=count_hard_fp(
            test_dets, test_gts, params.iou_threshold, params.hard_fp_score
        ),
        refined_hard_fp=count_hard_fp(
            refined, test_gts, params.iou_threshold, params.hard_fp_score
        ),
        model=model,
        refined_detections=tuple(refined),
        refine_seconds_per_image=elapsed / max(len(test_images), 1),
    )
