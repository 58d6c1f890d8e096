"""The bundled desk-scale benchmark: 3 shape classes, 200 train and 100
test images, generated deterministically from a root seed (default 42).

Everything is derived from the root seed with fixed offsets so "the seed-N
benchmark" is a complete description of the data.
"""

from __future__ import annotations

from dataclasses import dataclass
from .geometry import Detection, GroundTruthObject, Image
from .synth import ErrorModeConfig, SceneConfig, gen_dataset, simulate_base_detector

TRAIN_SCENE_OFFSET = 0
TEST_SCENE_OFFSET = 1_000
TRAIN_SIM_OFFSET = 2_000
TEST_SIM_OFFSET = 3_000


@dataclass(frozen=True)
class BenchmarkData:
    train_images: tuple[Image, ...]
    train_gts: tuple[GroundTruthObject, ...]
    train_dets: tuple[Detection, ...]
    test_images: tuple[Image, ...]
    test_gts: tuple[GroundTruthObject, ...]
    test_dets: tuple[Detection, ...]


def benchmark_scene_config(seed: int, image_count: int, offset: int) -> SceneConfig:
    return SceneConfig(image_count=image_count, seed=seed + offset)


def benchmark_error_config(seed: int, offset: int) -> ErrorModeConfig:
    return ErrorModeConfig(seed=seed + offset)


def load_benchmark(
    seed: int = 42, train_count: int = 200, test_count: int = 100
) -> BenchmarkData:
    """Generate the benchmark splits and simulated base detections."""
    train_images, train_gts = gen_dataset(
        benchmark_scene_config(seed, train_count, TRAIN_SCENE_OFFSET)
    )
    test_images, test_gts = gen_dataset(
        benchmark_scene_config(seed, test_count, TEST_SCENE_OFFSET)
    )
    train_dets = simulate_base_detector(
        train_gts, train_images, benchmark_error_config(seed, TRAIN_SIM_OFFSET)
    )
    test_dets = simulate_base_detector(
        test_gts, test_images, benchmark_error_config(seed, TEST_SIM_OFFSET)
    )
    return BenchmarkData(
        tuple(train_images),
        tuple(train_gts),
        tuple(train_dets),
        tuple(test_images),
        tuple(test_gts),
        tuple(test_dets),
    )
