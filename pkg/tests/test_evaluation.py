import math

import numpy as np
import pytest

from detrefine.evaluation import (
    MatchOutcome,
    PRCurve,
    Verdict,
    average_precision,
    evaluate_coco_style,
    evaluate_map,
    match_detections,
    pr_curve,
)
from detrefine.geometry import BoundingBox, Detection, GroundTruthObject


def box(x1, y1, x2, y2):
    return BoundingBox(x1, y1, x2, y2)


def det(image_id, class_id, score, bbox):
    return Detection(image_id, class_id, score, bbox)


def gt(image_id, class_id, bbox, difficult=False):
    return GroundTruthObject(image_id, class_id, bbox, difficult)


def verdicts(outcome):
    return [r.verdict for r in outcome.records]


# --- matching -----------------------------------------------------------


def test_single_perfect_match():
    gts = [gt("a", 1, box(0, 0, 10, 10))]
    dets = [det("a", 1, 0.9, box(0, 0, 10, 7))]  # IoU 0.7
    out = match_detections(dets, gts, 0.5)
    assert verdicts(out) == [Verdict.TP]
    assert out.n_positives == {1: 1}
    assert math.isclose(out.records[0].iou_at_match, 0.7)


def test_duplicate_on_matched_gt_is_fp():
    gts = [gt("a", 1, box(0, 0, 10, 10))]
    dets = [
        det("a", 1, 0.9, box(0, 0, 10, 8)),
        det("a", 1, 0.8, box(0, 0, 10, 8)),
    ]
    out = match_detections(dets, gts, 0.5)
    assert verdicts(out) == [Verdict.TP, Verdict.FP]


def test_low_iou_is_fp():
    gts = [gt("a", 1, box(0, 0, 10, 10))]
    dets = [det("a", 1, 0.9, box(0, 0, 10, 3))]  # IoU 0.3
    out = match_detections(dets, gts, 0.5)
    assert verdicts(out) == [Verdict.FP]


def test_wrong_class_never_matches():
    gts = [gt("a", 1, box(0, 0, 10, 10))]
    dets = [det("a", 2, 0.9, box(0, 0, 10, 10))]
    out = match_detections(dets, gts, 0.5)
    assert verdicts(out) == [Verdict.FP]
    assert out.records[0].iou_at_match == 0.0


def test_wrong_image_never_matches():
    gts = [gt("a", 1, box(0, 0, 10, 10))]
    dets = [det("b", 1, 0.9, box(0, 0, 10, 10))]
    assert verdicts(match_detections(dets, gts, 0.5)) == [Verdict.FP]


def test_difficult_best_overlap_ignored():
    gts = [gt("a", 1, box(0, 0, 10, 10), difficult=True)]
    dets = [det("a", 1, 0.9, box(0, 0, 10, 9))]
    out = match_detections(dets, gts, 0.5)
    assert verdicts(out) == [Verdict.IGNORED]
    assert out.n_positives.get(1, 0) == 0


def test_difficult_with_lower_overlap_than_open_gt():
    gts = [
        gt("a", 1, box(0, 0, 10, 10), difficult=True),
        gt("a", 1, box(20, 0, 30, 10)),
    ]
    # overlaps the plain GT far more than the difficult one
    dets = [det("a", 1, 0.9, box(20, 0, 30, 9))]
    out = match_detections(dets, gts, 0.5)
    assert verdicts(out) == [Verdict.TP]
    assert out.records[0].matched_gt == 1


def test_greedy_takes_max_iou_gt():
    gts = [
        gt("a", 1, box(0, 0, 10, 10)),
        gt("a", 1, box(8, 0, 18, 10)),
    ]
    dets = [det("a", 1, 0.9, box(7, 0, 17, 10))]
    out = match_detections(dets, gts, 0.5)
    assert out.records[0].matched_gt == 1


def test_score_ties_keep_input_order():
    gts = [gt("a", 1, box(0, 0, 10, 10))]
    dets = [
        det("a", 1, 0.5, box(0, 0, 10, 9)),
        det("a", 1, 0.5, box(0, 0, 10, 8)),
    ]
    out = match_detections(dets, gts, 0.5)
    assert [r.detection.bbox.y_max for r in out.records] == [9, 8]
    assert verdicts(out) == [Verdict.TP, Verdict.FP]


def test_vocabulary_check():
    gts = [gt("a", 1, box(0, 0, 10, 10))]
    dets = [det("a", 7, 0.9, box(0, 0, 10, 10))]
    with pytest.raises(ValueError, match="class out of vocabulary"):
        match_detections(dets, gts, 0.5, class_ids=[1, 2, 3])


def test_invalid_threshold():
    with pytest.raises(ValueError):
        match_detections([], [], 0.0)


def test_lower_score_detection_never_changes_existing_verdicts():
    rng = np.random.default_rng(3)
    for _ in range(50):
        gts = [
            gt("a", 1, box(x, y, x + 10, y + 10))
            for x, y in rng.uniform(0, 40, size=(3, 2))
        ]
        dets = [
            det("a", 1, float(s), box(x, y, x + 10, y + 10))
            for (x, y), s in zip(
                rng.uniform(0, 40, size=(4, 2)), rng.uniform(0.3, 1.0, size=4)
            )
        ]
        base = verdicts(match_detections(dets, gts, 0.5))
        lowest = min(d.score for d in dets)
        extra = dets + [det("a", 1, lowest / 2, box(5, 5, 15, 15))]
        augmented = verdicts(match_detections(extra, gts, 0.5))
        assert augmented[: len(base)] == base


def test_monotone_score_transform_preserves_everything():
    rng = np.random.default_rng(11)
    gts = [
        gt("a", 1, box(x, y, x + 12, y + 12))
        for x, y in rng.uniform(0, 50, size=(4, 2))
    ]
    dets = [
        det("a", 1, float(s), box(x, y, x + 12, y + 12))
        for (x, y), s in zip(
            rng.uniform(0, 50, size=(6, 2)), rng.uniform(0.05, 0.9, size=6)
        )
    ]
    squashed = [
        Detection(d.image_id, d.class_id, d.score**2, d.bbox) for d in dets
    ]
    a = match_detections(dets, gts, 0.5)
    b = match_detections(squashed, gts, 0.5)
    assert verdicts(a) == verdicts(b)
    assert [r.matched_gt for r in a.records] == [r.matched_gt for r in b.records]
    assert average_precision(pr_curve(a, 1)) == average_precision(pr_curve(b, 1))


# --- PR curve -----------------------------------------------------------


def outcome_from_verdicts(seq, n_positives, class_id=1):
    from detrefine.evaluation import DetectionVerdict

    records = [
        DetectionVerdict(
            det("a", class_id, 1.0 - i * 0.01, box(0, 0, 1, 1)), v, None, 0.0
        )
        for i, v in enumerate(seq)
    ]
    return MatchOutcome(tuple(records), {class_id: n_positives})


def test_pr_single_tp():
    out = outcome_from_verdicts([Verdict.TP], 1)
    assert pr_curve(out, 1).points == ((1.0, 1.0),)


def test_pr_fp_then_tp():
    out = outcome_from_verdicts([Verdict.FP, Verdict.TP], 1)
    assert pr_curve(out, 1).points == ((0.0, 0.0), (1.0, 0.5))


def test_pr_tp_then_fp_two_positives():
    out = outcome_from_verdicts([Verdict.TP, Verdict.FP], 2)
    assert pr_curve(out, 1).points == ((0.5, 1.0), (0.5, 0.5))


def test_pr_ignored_skipped():
    out = outcome_from_verdicts([Verdict.TP, Verdict.IGNORED, Verdict.FP], 1)
    assert pr_curve(out, 1).points == ((1.0, 1.0), (1.0, 0.5))


def test_pr_zero_positives():
    out = outcome_from_verdicts([Verdict.FP, Verdict.FP], 0)
    assert all(r == 0.0 for r, _ in pr_curve(out, 1).points)


def test_pr_empty():
    out = outcome_from_verdicts([], 1)
    assert pr_curve(out, 1).points == ()


# --- average precision --------------------------------------------------


def test_ap_perfect():
    curve = PRCurve(((1.0, 1.0),))
    assert average_precision(curve, "all_point") == 1.0
    assert average_precision(curve, "eleven_point") == 1.0


def test_ap_fp_then_tp():
    curve = PRCurve(((0.0, 0.0), (1.0, 0.5)))
    assert average_precision(curve, "all_point") == 0.5


def test_ap_empty_curve():
    assert average_precision(PRCurve(()), "all_point") == 0.0
    assert average_precision(PRCurve(()), "eleven_point") == 0.0


def test_ap_eleven_point():
    # envelope 1.0 up to recall 0.5, nothing beyond: 6 of 11 grid points hit
    curve = PRCurve(((0.5, 1.0),))
    assert math.isclose(average_precision(curve, "eleven_point"), 6.0 / 11.0)


def test_ap_unknown_mode():
    with pytest.raises(ValueError):
        average_precision(PRCurve(((1.0, 1.0),)), "voc2042")


def test_pr_curve_rejects_decreasing_recall():
    with pytest.raises(ValueError):
        PRCurve(((0.5, 1.0), (0.4, 1.0)))


# --- mAP ----------------------------------------------------------------


def perfect_instance():
    gts = [
        gt("a", 1, box(0, 0, 10, 10)),
        gt("a", 2, box(20, 20, 40, 40)),
        gt("b", 1, box(5, 5, 25, 30)),
    ]
    dets = [det(g.image_id, g.class_id, 1.0, g.bbox) for g in gts]
    return dets, gts


def test_map_oracle_detections():
    dets, gts = perfect_instance()
    report = evaluate_map(dets, gts)
    assert report.map == 1.0
    assert set(report.ap_per_class) == {1, 2}


def test_map_no_detections():
    _, gts = perfect_instance()
    assert evaluate_map([], gts).map == 0.0


def test_map_two_class_toy():
    gts = [gt("a", 1, box(0, 0, 10, 10)), gt("a", 2, box(30, 30, 40, 40))]
    dets = [
        det("a", 1, 0.9, box(0, 0, 10, 10)),      # class 1: [TP] -> AP 1.0
        det("a", 2, 0.8, box(0, 20, 6, 26)),       # class 2: FP first
        det("a", 2, 0.7, box(30, 30, 40, 40)),     # then TP -> AP 0.5
    ]
    report = evaluate_map(dets, gts)
    assert math.isclose(report.ap_per_class[1], 1.0)
    assert math.isclose(report.ap_per_class[2], 0.5)
    assert math.isclose(report.map, 0.75)


def test_map_empty_ground_truth():
    with pytest.raises(ValueError, match="empty ground truth"):
        evaluate_map([], [])


def test_removing_fp_never_decreases_ap():
    rng = np.random.default_rng(5)
    for _ in range(30):
        gts = [
            gt("a", 1, box(x, y, x + 10, y + 10))
            for x, y in rng.uniform(0, 60, size=(3, 2))
        ]
        dets = [
            det("a", 1, float(s), box(x, y, x + 10, y + 10))
            for (x, y), s in zip(
                rng.uniform(0, 60, size=(6, 2)), rng.uniform(0.1, 1.0, size=6)
            )
        ]
        out = match_detections(dets, gts, 0.5)
        base = evaluate_map(dets, gts).map
        assert 0.0 <= base <= 1.0
        fp_dets = {r.detection for r in out.records if r.verdict is Verdict.FP}
        for f in fp_dets:
            reduced = [d for d in dets if d is not f]
            assert evaluate_map(reduced, gts).map >= base - 1e-12


# --- COCO-style ---------------------------------------------------------


def test_coco_perfect_at_every_threshold():
    dets, gts = perfect_instance()
    report = evaluate_coco_style(dets, gts)
    assert report.map == 1.0
    assert all(v == 1.0 for v in report.map_per_threshold.values())


def test_coco_threshold_sweep_cutoff():
    gts = [gt("a", 1, box(0, 0, 10, 10))]
    dets = [det("a", 1, 0.9, box(0, 0, 10, 6))]  # IoU 0.6
    report = evaluate_coco_style(dets, gts)
    for thr, value in report.map_per_threshold.items():
        assert value == (1.0 if thr <= 0.6 else 0.0)


def test_coco_empty_size_buckets_absent():
    gts = [gt("a", 1, box(0, 0, 10, 10))]  # area 100: small
    dets = [det("a", 1, 0.9, box(0, 0, 10, 10))]
    report = evaluate_coco_style(dets, gts)
    assert report.size_ap["small"] == 1.0
    assert report.size_ap["medium"] is None
    assert report.size_ap["large"] is None


def test_coco_size_bucket_membership():
    gts = [
        gt("a", 1, box(0, 0, 10, 10)),     # 100 -> small
        gt("a", 1, box(20, 20, 60, 60)),   # 1600 -> medium
        gt("a", 1, box(100, 100, 250, 250)),  # 22500 -> large
    ]
    dets = [det(g.image_id, g.class_id, 1.0, g.bbox) for g in gts]
    report = evaluate_coco_style(dets, gts)
    assert report.size_ap == {"small": 1.0, "medium": 1.0, "large": 1.0}
