"""detrefine: detection evaluation, hard false positive mining, and
crop-resize classifier refinement on deterministic synthetic scenes."""

__version__ = "0.1.0"

from .geometry import (
    BoundingBox,
    Detection,
    EmptyCropError,
    GroundTruthObject,
    Image,
    area,
    clamp_to_image,
    iou,
)
from .evaluation import (
    EvalReport,
    MatchOutcome,
    PRCurve,
    Verdict,
    average_precision,
    evaluate_coco_style,
    evaluate_map,
    match_detections,
    pr_curve,
)
from .fp_analysis import (
    FPBinReport,
    HypothesizedMapCurve,
    SensitivityReport,
    SimilarityGroups,
    TaxonomyReport,
    fp_score_bins,
    fp_taxonomy,
    hypothesized_map_curve,
    sensitivity_by_characteristic,
)
from .miner import (
    Heuristic,
    InsufficientSamplesError,
    LabeledROI,
    ManifestEntry,
    ROICategory,
    SampleManifest,
    SamplerConfig,
    assign_labels,
    categorize,
    sample_minibatches,
)
from .refiner import (
    CropConfig,
    FeatureSpec,
    IdentitySurrogate,
    RefinerModel,
    TrainConfig,
    TrainingDivergedError,
    crop_resize,
    extract_features,
    fuse_scores,
    predict,
    refine_detections,
    train_refiner,
)
from .synth import (
    ErrorModeConfig,
    SceneConfig,
    SceneTooCrowdedError,
    gen_dataset,
    simulate_base_detector,
)
from .pipeline import PipelineParams, PipelineResult, count_hard_fp, run_pipeline
from .benchmark import BenchmarkData, load_benchmark

__all__ = [
    "BoundingBox", "Detection", "GroundTruthObject", "Image",
    "EmptyCropError", "area", "clamp_to_image", "iou",
    "EvalReport", "MatchOutcome", "PRCurve", "Verdict",
    "average_precision", "evaluate_coco_style", "evaluate_map",
    "match_detections", "pr_curve",
    "FPBinReport", "HypothesizedMapCurve", "SensitivityReport",
    "SimilarityGroups", "TaxonomyReport", "fp_score_bins", "fp_taxonomy",
    "hypothesized_map_curve", "sensitivity_by_characteristic",
    "Heuristic", "InsufficientSamplesError", "LabeledROI", "ManifestEntry",
    "ROICategory", "SampleManifest", "SamplerConfig",
    "assign_labels", "categorize", "sample_minibatches",
    "CropConfig", "FeatureSpec", "IdentitySurrogate", "RefinerModel",
    "TrainConfig", "TrainingDivergedError", "crop_resize",
    "extract_features", "fuse_scores", "predict", "refine_detections",
    "train_refiner",
    "ErrorModeConfig", "SceneConfig", "SceneTooCrowdedError",
    "gen_dataset", "simulate_base_detector",
    "PipelineParams", "PipelineResult", "count_hard_fp", "run_pipeline",
    "BenchmarkData", "load_benchmark",
]
