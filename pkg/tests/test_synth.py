import math

import numpy as np
import pytest

from detrefine.evaluation import evaluate_map
from detrefine.fp_analysis import BG, LOC, SIM, fp_taxonomy
from detrefine.synth import (
    ErrorModeConfig,
    SceneConfig,
    gen_dataset,
    simulate_base_detector,
    simulate_detailed,
)


def test_gen_dataset_deterministic():
    cfg = SceneConfig(image_count=5, seed=123)
    images_a, gts_a = gen_dataset(cfg)
    images_b, gts_b = gen_dataset(cfg)
    assert gts_a == gts_b
    for a, b in zip(images_a, images_b):
        assert a.id == b.id
        assert np.array_equal(a.pixels, b.pixels)


def test_gen_dataset_seed_changes_output():
    base = gen_dataset(SceneConfig(image_count=3, seed=1))[0]
    other = gen_dataset(SceneConfig(image_count=3, seed=2))[0]
    assert any(
        not np.array_equal(a.pixels, b.pixels) for a, b in zip(base, other)
    )


def test_gen_dataset_background_only():
    images, gts = gen_dataset(SceneConfig(image_count=3, objects_per_image=(0, 0)))
    assert gts == []
    assert len(images) == 3


def test_gen_dataset_degenerate_size():
    s = 20.0
    _, gts = gen_dataset(
        SceneConfig(image_count=4, object_size=(s, s), objects_per_image=(1, 2))
    )
    assert gts
    for g in gts:
        assert math.isclose(g.bbox.area(), s * s, rel_tol=1e-12)


def test_gen_dataset_boxes_inside_image():
    cfg = SceneConfig(image_count=8, seed=5)
    _, gts = gen_dataset(cfg)
    for g in gts:
        assert 0.0 <= g.bbox.x_min and g.bbox.x_max <= cfg.width
        assert 0.0 <= g.bbox.y_min and g.bbox.y_max <= cfg.height


def test_gen_dataset_shapes_visible():
    cfg = SceneConfig(image_count=1, seed=9, objects_per_image=(1, 1), noise_amplitude=0)
    images, gts = gen_dataset(cfg)
    px = images[0].pixels
    # at least one pixel should be far from the gray background
    assert int(px.max()) > 150


def test_config_validation():
    with pytest.raises(ValueError):
        SceneConfig(class_count=5)
    with pytest.raises(ValueError):
        SceneConfig(object_size=(30.0, 10.0))
    with pytest.raises(ValueError):
        ErrorModeConfig(tp_rate=1.5)
    with pytest.raises(ValueError):
        ErrorModeConfig(jitter=0.7)


def test_perfect_detector():
    images, gts = gen_dataset(SceneConfig(image_count=6, seed=3))
    cfg = ErrorModeConfig(
        tp_rate=1.0, jitter=0.0, rate_partial=0.0, rate_confusion=0.0, rate_background=0.0
    )
    dets = simulate_base_detector(gts, images, cfg)
    assert len(dets) == len(gts)
    assert {d.bbox for d in dets} == {g.bbox for g in gts}
    assert evaluate_map(dets, gts).map == 1.0


def test_simulate_deterministic():
    images, gts = gen_dataset(SceneConfig(image_count=6, seed=3))
    cfg = ErrorModeConfig(seed=11)
    assert simulate_base_detector(gts, images, cfg) == simulate_base_detector(
        gts, images, cfg
    )


def test_background_only_fps_are_bg():
    images, gts = gen_dataset(SceneConfig(image_count=10, seed=4))
    cfg = ErrorModeConfig(
        tp_rate=0.8, rate_partial=0.0, rate_confusion=0.0, rate_background=0.5, seed=1
    )
    dets = simulate_base_detector(gts, images, cfg)
    report = fp_taxonomy(dets, gts)
    assert report.entries  # the config produces some FPs
    assert all(e.category == BG for e in report.entries)


def test_partial_only_fps_are_loc():
    images, gts = gen_dataset(SceneConfig(image_count=10, seed=4))
    cfg = ErrorModeConfig(
        tp_rate=0.8, rate_partial=0.6, rate_confusion=0.0, rate_background=0.0, seed=1
    )
    dets = simulate_base_detector(gts, images, cfg)
    report = fp_taxonomy(dets, gts)
    assert report.entries
    assert all(e.category == LOC for e in report.entries)


def test_confusion_only_fps_are_sim():
    images, gts = gen_dataset(SceneConfig(image_count=10, seed=4))
    cfg = ErrorModeConfig(
        tp_rate=0.8, rate_partial=0.0, rate_confusion=0.6, rate_background=0.0, seed=1
    )
    dets = simulate_base_detector(gts, images, cfg)
    report = fp_taxonomy(dets, gts)
    assert report.entries
    assert all(e.category == SIM for e in report.entries)


def test_injected_types_round_trip_through_taxonomy():
    images, gts = gen_dataset(SceneConfig(image_count=30, seed=17))
    result = simulate_detailed(gts, images, ErrorModeConfig(seed=23))
    dets = list(result.detections)
    report = fp_taxonomy(dets, gts)
    category_by_det = {id(e.detection): e.category for e in report.entries}
    expected = {"partial": LOC, "confusion": SIM, "background": BG}
    for det, kind in zip(dets, result.intended):
        if kind == "tp":
            continue
        assert category_by_det[id(det)] == expected[kind]


def test_empirical_rates_within_three_sigma():
    scene = SceneConfig(
        width=64, height=64, image_count=1000, objects_per_image=(1, 2),
        object_size=(12.0, 22.0), seed=31,
    )
    images, gts = gen_dataset(scene)
    cfg = ErrorModeConfig(
        tp_rate=0.7, rate_partial=0.25, rate_confusion=0.25,
        rate_background=0.3, background_cell=32, seed=37,
    )
    result = simulate_detailed(gts, images, cfg)
    counts = {k: result.intended.count(k) for k in ("tp", "partial", "confusion", "background")}
    n_gt = len(gts)

    def check(observed, n, p, attempted_skips=0):
        observed += attempted_skips  # successes before geometric rejection
        sigma = math.sqrt(n * p * (1 - p))
        assert abs(observed - n * p) <= 3 * sigma, (observed, n * p, sigma)

    check(counts["tp"], n_gt, cfg.tp_rate)
    check(counts["partial"], n_gt, cfg.rate_partial, result.skipped.get("partial", 0))
    check(counts["confusion"], n_gt, cfg.rate_confusion, result.skipped.get("confusion", 0))
    n_cells = 1000 * 4  # 64/32 = 2 cells per side
    check(counts["background"], n_cells, cfg.rate_background, result.skipped.get("background", 0))
