"""Command-line surface.

Subcommands: synth, simulate, eval, analyze, mine, train, refine, report,
sweep. Every command accepts --config (a JSON file supplying defaults for
its parameters; explicit flags win), --seed, and --out. Analysis and
report outputs are CSV tables plus rendered PNG figures, along with a JSON
document that echoes the full configuration needed to reproduce the run.

Exit codes: 0 success, 2 validation failure, 3 I/O failure, 4 numeric
failure (diverged training).
"""

from __future__ import annotations

import argparse
import csv
import math
import sys
import time
from dataclasses import replace
from pathlib import Path
from typing import Any, Sequence

from . import __version__
from .evaluation import evaluate_coco_style, evaluate_map
from .formats import (
    DatasetIndex,
    ImageMeta,
    SchemaError,
    format_float,
    load_dataset,
    load_detections,
    load_manifest,
    load_model,
    read_json,
    save_dataset,
    save_detections,
    save_manifest,
    save_model,
    write_json,
    write_ppm,
)
from .fp_analysis import (
    CATEGORIES,
    DEFAULT_BIN_EDGES,
    SimilarityGroups,
    fp_score_bins,
    fp_taxonomy,
    hypothesized_map_curve,
    sensitivity_by_characteristic,
)
from .miner import (
    Heuristic,
    InsufficientSamplesError,
    SamplerConfig,
    assign_labels,
    categorize,
    sample_minibatches,
)
from .pipeline import PipelineParams, count_hard_fp, run_pipeline
from .refiner import (
    CropConfig,
    FeatureSpec,
    TrainConfig,
    TrainingDivergedError,
    refine_detections,
    train_refiner,
)
from .synth import (
    ErrorModeConfig,
    SceneConfig,
    SceneTooCrowdedError,
    SHAPE_NAMES,
    gen_dataset,
    simulate_base_detector,
)

_DEFAULT_CURVE_THRESHOLDS = tuple(round(0.1 * i, 1) for i in range(11))


# --- config plumbing ----------------------------------------------------


def _load_config_doc(path: str | None) -> dict:
    if path is None:
        return {}
    doc = read_json(path)
    if not isinstance(doc, dict):
        raise SchemaError("$: config must be a JSON object")
    return doc


def _take(doc: dict, key: str, kinds, what: str, default):
    """Pull an optional typed value out of a config document."""
    if key not in doc:
        return default
    value = doc[key]
    bad = not isinstance(value, kinds)
    if isinstance(value, bool) and kinds is not bool:
        bad = True
    if bad:
        raise SchemaError(f"$.{key}: expected {what}")
    return value


def _take_number(doc: dict, key: str, default):
    v = _take(doc, key, (int, float), "a number", default)
    return v if v is default else float(v)


def _take_pair(doc: dict, key: str, default):
    if key not in doc:
        return default
    v = doc[key]
    if (
        not isinstance(v, list)
        or len(v) != 2
        or any(isinstance(x, bool) or not isinstance(x, (int, float)) for x in v)
    ):
        raise SchemaError(f"$.{key}: expected [low, high]")
    return (v[0], v[1])


def _reject_unknown(doc: dict, known: set[str]) -> None:
    for key in doc:
        if key not in known:
            raise SchemaError(f"$.{key}: unknown key")


def _scene_config(doc: dict, seed: int | None) -> SceneConfig:
    _reject_unknown(
        doc,
        {
            "width", "height", "class_count", "objects_per_image", "object_size",
            "noise_amplitude", "image_count", "seed",
        },
    )
    objects = _take_pair(doc, "objects_per_image", (1, 4))
    size = _take_pair(doc, "object_size", (14.0, 34.0))
    try:
        return SceneConfig(
            width=_take(doc, "width", int, "an integer", 96),
            height=_take(doc, "height", int, "an integer", 96),
            class_count=_take(doc, "class_count", int, "an integer", 3),
            objects_per_image=(int(objects[0]), int(objects[1])),
            object_size=(float(size[0]), float(size[1])),
            noise_amplitude=_take(doc, "noise_amplitude", int, "an integer", 12),
            image_count=_take(doc, "image_count", int, "an integer", 20),
            seed=seed if seed is not None else _take(doc, "seed", int, "an integer", 0),
        )
    except ValueError as e:
        raise SchemaError(f"$: {e}") from e


def _error_config(doc: dict, seed: int | None, default_classes: int) -> ErrorModeConfig:
    _reject_unknown(
        doc,
        {
            "tp_rate", "jitter", "rate_partial", "rate_confusion", "rate_background",
            "background_cell", "class_count", "score_tp", "score_partial",
            "score_confusion", "score_background", "seed",
        },
    )
    kwargs: dict[str, Any] = {
        "tp_rate": _take_number(doc, "tp_rate", 0.85),
        "jitter": _take_number(doc, "jitter", 0.12),
        "rate_partial": _take_number(doc, "rate_partial", 0.20),
        "rate_confusion": _take_number(doc, "rate_confusion", 0.20),
        "rate_background": _take_number(doc, "rate_background", 0.35),
        "background_cell": _take(doc, "background_cell", int, "an integer", 48),
        "class_count": _take(doc, "class_count", int, "an integer", default_classes),
        "seed": seed if seed is not None else _take(doc, "seed", int, "an integer", 0),
    }
    for key in ("score_tp", "score_partial", "score_confusion", "score_background"):
        pair = _take_pair(doc, key, None)
        if pair is not None:
            kwargs[key] = (float(pair[0]), float(pair[1]))
    try:
        return ErrorModeConfig(**kwargs)
    except ValueError as e:
        raise SchemaError(f"$: {e}") from e


def _pick(flag, doc: dict, key: str, default):
    """Resolution order: explicit flag, config file, built-in default."""
    if flag is not None:
        return flag
    if key in doc:
        return doc[key]
    return default


def _parse_float_list(text: str, flag: str) -> list[float]:
    try:
        return [float(tok) for tok in text.split(",") if tok.strip() != ""]
    except ValueError as e:
        raise SchemaError(f"{flag}: expected comma-separated numbers") from e


# --- small output helpers -----------------------------------------------


def _csv_cell(v):
    if isinstance(v, float):
        return format_float(v) if math.isfinite(v) else str(v)
    return v


def _write_csv(path: Path, header: Sequence[str], rows: Sequence[Sequence]) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for row in rows:
            writer.writerow([_csv_cell(v) for v in row])


def _json_edge(v: float):
    # unbounded bin edges become null in JSON
    return float(v) if math.isfinite(v) else None


def _run_header(command: str, inputs: dict, params: dict) -> dict:
    return {
        "version": 1,
        "tool_version": __version__,
        "command": command,
        "inputs": inputs,
        "params": params,
    }


def _eval_report_doc(report) -> dict:
    return {
        "map": report.map,
        "ap_per_class": {str(c): ap for c, ap in sorted(report.ap_per_class.items())},
        "iou_thresholds": list(report.iou_thresholds),
        "ap_mode": report.ap_mode,
        "n_detections": report.n_detections,
        "n_ground_truth": report.n_ground_truth,
        "map_per_threshold": None
        if report.map_per_threshold is None
        else {f"{t:.2f}": v for t, v in sorted(report.map_per_threshold.items())},
        "size_ap": None if report.size_ap is None else dict(report.size_ap),
    }


def _check_vocabulary(dets, classes, source: str) -> None:
    """Cross-file check: every detection class must exist in the dataset."""
    for i, d in enumerate(dets):
        if d.class_id not in classes:
            raise SchemaError(
                f"$.detections[{i}].class_id: class out of vocabulary "
                f"({d.class_id} not in {source})"
            )


# --- commands -----------------------------------------------------------


def cmd_synth(args) -> None:
    doc = _load_config_doc(args.config)
    cfg = _scene_config(doc, args.seed)
    images, gts = gen_dataset(cfg)
    out = Path(args.out)
    (out / "images").mkdir(parents=True, exist_ok=True)
    metas = []
    for im in images:
        rel = f"images/{im.id}.ppm"
        write_ppm(out / rel, im.pixels)
        metas.append(ImageMeta(im.id, rel, im.width, im.height))
    classes = {c + 1: SHAPE_NAMES[c] for c in range(cfg.class_count)}
    save_dataset(out / "dataset.json", classes, metas, gts)
    print(
        f"wrote {len(images)} images, {len(gts)} objects, "
        f"{cfg.class_count} classes to {out}"
    )


def cmd_simulate(args) -> None:
    ds = load_dataset(args.dataset)
    images = ds.load_images()
    doc = _load_config_doc(args.config)
    cfg = _error_config(doc, args.seed, default_classes=max(ds.classes, default=1))
    dets = simulate_base_detector(ds.ground_truth, images, cfg)
    save_detections(args.out, dets)
    print(f"wrote {len(dets)} detections to {args.out}")


def cmd_eval(args) -> None:
    doc = _load_config_doc(args.config)
    ds = load_dataset(args.dataset)
    dets = load_detections(args.detections)
    _check_vocabulary(dets, ds.classes, str(args.dataset))
    iou_thr = float(_pick(args.iou_thr, doc, "iou_thr", 0.5))
    ap_mode = str(_pick(args.ap_mode, doc, "ap_mode", "all_point"))
    use_coco = bool(args.coco or doc.get("coco", False))
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)

    report = evaluate_map(dets, ds.ground_truth, iou_thr, ap_mode, class_ids=ds.classes)
    result = {
        **_run_header(
            "eval",
            {"dataset": str(args.dataset), "detections": str(args.detections)},
            {"iou_thr": iou_thr, "ap_mode": ap_mode, "coco": use_coco},
        ),
        "metrics": _eval_report_doc(report),
    }
    rows = [
        [c, ds.classes.get(c, ""), float(report.ap_per_class[c])]
        for c in sorted(report.ap_per_class)
    ]
    if use_coco:
        coco = evaluate_coco_style(dets, ds.ground_truth, class_ids=ds.classes)
        result["coco_metrics"] = _eval_report_doc(coco)
    write_json(out / "eval.json", result)
    _write_csv(out / "per_class_ap.csv", ["class_id", "class_name", "ap"], rows)
    print(f"mAP@{iou_thr:g} ({ap_mode}): {report.map:.4f}")
    if use_coco:
        buckets = ", ".join(
            f"{k}={'-' if v is None else f'{v:.4f}'}" for k, v in coco.size_ap.items()
        )
        print(f"AP@[0.50:0.95]: {coco.map:.4f} ({buckets})")


def _default_groups(ds: DatasetIndex) -> SimilarityGroups:
    return SimilarityGroups.single_group(sorted(ds.classes))


def _groups_from(doc_or_none, ds: DatasetIndex) -> SimilarityGroups:
    if doc_or_none is None:
        return _default_groups(ds)
    doc = read_json(doc_or_none)
    if not isinstance(doc, dict) or not doc:
        raise SchemaError("$: groups file must be a non-empty object")
    groups = {}
    for name, members in doc.items():
        if not isinstance(members, list) or not all(
            isinstance(m, int) and not isinstance(m, bool) for m in members
        ):
            raise SchemaError(f"$.{name}: expected a list of class ids")
        groups[name] = tuple(members)
    try:
        return SimilarityGroups(groups)
    except ValueError as e:
        raise SchemaError(f"$: {e}") from e


def cmd_analyze(args) -> None:
    from . import plots

    doc = _load_config_doc(args.config)
    ds = load_dataset(args.dataset)
    dets = load_detections(args.detections)
    _check_vocabulary(dets, ds.classes, str(args.dataset))
    iou_thr = float(_pick(args.iou_thr, doc, "iou_thr", 0.5))
    ap_mode = str(_pick(args.ap_mode, doc, "ap_mode", "all_point"))
    edges = (
        _parse_float_list(args.bin_edges, "--bin-edges")
        if args.bin_edges
        else list(doc.get("bin_edges", DEFAULT_BIN_EDGES))
    )
    thresholds = (
        _parse_float_list(args.thresholds, "--thresholds")
        if args.thresholds
        else list(doc.get("thresholds", _DEFAULT_CURVE_THRESHOLDS))
    )
    groups = _groups_from(args.groups, ds)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)

    bins = fp_score_bins(dets, ds.ground_truth, iou_thr, edges)
    _write_csv(
        out / "fp_bins.csv",
        ["bin_low", "bin_high", "fp_count"],
        [
            [float(lo), float(hi), c]
            for lo, hi, c in zip(bins.bin_edges, bins.bin_edges[1:], bins.counts)
        ],
    )
    plots.save_fp_bins_figure(out / "fp_bins.png", bins)

    curve = hypothesized_map_curve(dets, ds.ground_truth, iou_thr, thresholds, ap_mode)
    _write_csv(
        out / "hypothesized_map.csv",
        ["threshold", "map"],
        [[t, m] for t, m in curve.points],
    )
    plots.save_map_curve_figure(out / "hypothesized_map.png", curve)

    taxonomy = fp_taxonomy(dets, ds.ground_truth, iou_thr, groups)
    tax_rows = [
        [c, ds.classes.get(c, "")] + [counts[cat] for cat in CATEGORIES]
        for c, counts in taxonomy.counts_per_class.items()
    ]
    tax_rows.append(
        ["all", ""] + [taxonomy.counts[cat] for cat in CATEGORIES]
    )
    _write_csv(out / "taxonomy.csv", ["class_id", "class_name", *CATEGORIES], tax_rows)
    plots.save_taxonomy_figure(out / "taxonomy.png", taxonomy)

    sensitivity = {}
    for characteristic in ("size", "aspect"):
        rep = sensitivity_by_characteristic(
            dets, ds.ground_truth, iou_thr, characteristic, ap_mode=ap_mode
        )
        sensitivity[characteristic] = rep
        _write_csv(
            out / f"sensitivity_{characteristic}.csv",
            ["bin_low", "bin_high", "ap"],
            [
                [float(lo), float(hi), "" if ap is None else ap]
                for lo, hi, ap in zip(rep.bin_edges, rep.bin_edges[1:], rep.ap_per_bin)
            ],
        )
        plots.save_sensitivity_figure(out / f"sensitivity_{characteristic}.png", rep)

    write_json(
        out / "analysis.json",
        {
            **_run_header(
                "analyze",
                {"dataset": str(args.dataset), "detections": str(args.detections)},
                {
                    "iou_thr": iou_thr,
                    "ap_mode": ap_mode,
                    "bin_edges": [float(e) for e in edges],
                    "thresholds": [float(t) for t in thresholds],
                    "groups": {k: list(v) for k, v in groups.groups.items()},
                },
            ),
            "fp_bins": {
                "edges": list(bins.bin_edges),
                "counts": list(bins.counts),
                "total_fp": bins.total_fp,
            },
            "hypothesized_map": {
                "base_map": curve.base_map,
                "points": [[t, m] for t, m in curve.points],
            },
            "taxonomy": {
                "counts": dict(taxonomy.counts),
                "per_class": {
                    str(c): dict(v) for c, v in taxonomy.counts_per_class.items()
                },
            },
            "sensitivity": {
                name: {
                    "edges": [_json_edge(e) for e in rep.bin_edges],
                    "ap_per_bin": list(rep.ap_per_bin),
                    "spread": rep.spread,
                }
                for name, rep in sensitivity.items()
            },
        },
    )
    print(
        f"analysis written to {out} (total FPs {bins.total_fp}, "
        f"base mAP {curve.base_map:.4f})"
    )


def cmd_mine(args) -> None:
    doc = _load_config_doc(args.config)
    ds = load_dataset(args.dataset)
    dets = load_detections(args.detections)
    heuristic_name = str(_pick(args.heuristic, doc, "heuristic", "fp_fg_bg"))
    try:
        heuristic = Heuristic(heuristic_name)
    except ValueError as e:
        raise SchemaError(f"--heuristic: unknown heuristic {heuristic_name!r}") from e
    try:
        config = SamplerConfig(
            images_per_batch=int(_pick(args.images_per_batch, doc, "images_per_batch", 1)),
            rois_per_batch=int(_pick(args.rois, doc, "rois", 32)),
            heuristic=heuristic,
            fp_threshold=float(_pick(args.fp_thr, doc, "fp_thr", 0.3)),
            fg_iou=float(_pick(args.fg_iou, doc, "fg_iou", 0.5)),
            seed=int(_pick(args.seed, doc, "seed", 0)),
        )
    except ValueError as e:
        raise SchemaError(f"$: {e}") from e
    n_batches = int(_pick(args.batches, doc, "batches", 300))
    rois = categorize(
        assign_labels(dets, ds.ground_truth, config.fg_iou), config.fp_threshold
    )
    manifest = sample_minibatches(rois, config, n_batches)
    save_manifest(args.out, manifest)
    by_cat = {}
    for r in rois:
        by_cat[r.category.value] = by_cat.get(r.category.value, 0) + 1
    pools = ", ".join(f"{k}={v}" for k, v in sorted(by_cat.items()))
    print(f"wrote {n_batches} batches of {config.rois_per_batch} to {args.out} ({pools})")


def cmd_train(args) -> None:
    doc = _load_config_doc(args.config)
    ds = load_dataset(args.dataset)
    images = ds.load_images()
    manifest = load_manifest(args.manifest)
    projection_dim = args.projection_dim
    if projection_dim is None and "projection_dim" in doc:
        projection_dim = int(doc["projection_dim"])
    try:
        cfg = TrainConfig(
            learning_rate=float(_pick(args.lr, doc, "lr", 1e-4)),
            momentum=float(_pick(args.momentum, doc, "momentum", 0.9)),
            weight_decay=float(_pick(args.wd, doc, "wd", 1e-4)),
            epochs=int(_pick(args.epochs, doc, "epochs", 20)),
            lr_drop_fraction=float(_pick(args.lr_drop_fraction, doc, "lr_drop_fraction", 0.69)),
            seed=int(_pick(args.seed, doc, "seed", 0)),
        )
        feature = FeatureSpec(
            crop=CropConfig(roi_size=int(_pick(args.roi_size, doc, "roi_size", 32))),
            projection_dim=projection_dim,
            projection_seed=cfg.seed,
        )
    except ValueError as e:
        raise SchemaError(f"$: {e}") from e
    model = train_refiner(
        images, manifest, cfg, feature, class_count=max(ds.classes, default=0)
    )
    save_model(args.out, model)
    loss = model.training.final_loss
    print(
        f"trained {cfg.epochs} epochs over {len(manifest.batches)} batches, "
        f"final loss {'n/a' if loss is None else f'{loss:.4f}'}, wrote {args.out}"
    )


def cmd_refine(args) -> None:
    ds = load_dataset(args.dataset)
    images = ds.load_images()
    dets = load_detections(args.detections)
    model = load_model(args.model)
    refined = refine_detections(model, images, dets)
    save_detections(args.out, refined)
    print(f"refined {len(refined)} detections to {args.out}")


def cmd_report(args) -> None:
    from . import plots

    doc = _load_config_doc(args.config)
    ds = load_dataset(args.dataset)
    base = load_detections(args.base)
    refined = load_detections(args.refined)
    _check_vocabulary(base, ds.classes, str(args.dataset))
    _check_vocabulary(refined, ds.classes, str(args.dataset))
    iou_thr = float(_pick(args.iou_thr, doc, "iou_thr", 0.5))
    ap_mode = str(_pick(args.ap_mode, doc, "ap_mode", "all_point"))
    hard_thr = float(_pick(args.hard_fp_score, doc, "hard_fp_score", 0.3))
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)

    base_eval = evaluate_map(base, ds.ground_truth, iou_thr, ap_mode, class_ids=ds.classes)
    refined_eval = evaluate_map(
        refined, ds.ground_truth, iou_thr, ap_mode, class_ids=ds.classes
    )
    base_hard = count_hard_fp(base, ds.ground_truth, iou_thr, hard_thr)
    refined_hard = count_hard_fp(refined, ds.ground_truth, iou_thr, hard_thr)
    base_bins = fp_score_bins(base, ds.ground_truth, iou_thr)
    refined_bins = fp_score_bins(refined, ds.ground_truth, iou_thr)
    base_curve = hypothesized_map_curve(
        base, ds.ground_truth, iou_thr, _DEFAULT_CURVE_THRESHOLDS, ap_mode
    )
    refined_curve = hypothesized_map_curve(
        refined, ds.ground_truth, iou_thr, _DEFAULT_CURVE_THRESHOLDS, ap_mode
    )
    groups = _default_groups(ds)
    base_tax = fp_taxonomy(base, ds.ground_truth, iou_thr, groups)
    refined_tax = fp_taxonomy(refined, ds.ground_truth, iou_thr, groups)

    plots.save_map_comparison_figure(
        out / "map_comparison.png", base_eval, refined_eval, ds.classes
    )
    plots.save_fp_bins_figure(out / "fp_bins.png", base_bins, refined_bins)
    plots.save_map_curve_figure(out / "hypothesized_map.png", base_curve, refined_curve)
    plots.save_taxonomy_figure(out / "taxonomy.png", base_tax, refined_tax)

    _write_csv(
        out / "map_comparison.csv",
        ["class_id", "class_name", "base_ap", "refined_ap"],
        [
            [
                c,
                ds.classes.get(c, ""),
                float(base_eval.ap_per_class[c]),
                float(refined_eval.ap_per_class.get(c, 0.0)),
            ]
            for c in sorted(base_eval.ap_per_class)
        ],
    )
    _write_csv(
        out / "fp_bins.csv",
        ["bin_low", "bin_high", "base_fp", "refined_fp"],
        [
            [float(lo), float(hi), b, r]
            for lo, hi, b, r in zip(
                base_bins.bin_edges,
                base_bins.bin_edges[1:],
                base_bins.counts,
                refined_bins.counts,
            )
        ],
    )

    result = {
        **_run_header(
            "report",
            {
                "dataset": str(args.dataset),
                "base": str(args.base),
                "refined": str(args.refined),
            },
            {"iou_thr": iou_thr, "ap_mode": ap_mode, "hard_fp_score": hard_thr},
        ),
        "base": _eval_report_doc(base_eval),
        "refined": _eval_report_doc(refined_eval),
        "map_gain": refined_eval.map - base_eval.map,
        "hard_fp": {"base": base_hard, "refined": refined_hard},
        "taxonomy": {
            "base": dict(base_tax.counts),
            "refined": dict(refined_tax.counts),
        },
    }
    write_json(out / "report.json", result)

    lines = [
        "# Refinement report",
        "",
        f"- base mAP@{iou_thr:g} ({ap_mode}): **{base_eval.map:.4f}**",
        f"- refined mAP@{iou_thr:g}: **{refined_eval.map:.4f}** "
        f"({100 * (refined_eval.map - base_eval.map):+.2f} points)",
        f"- hard false positives (score > {hard_thr:g}): "
        f"{base_hard} -> {refined_hard}",
        "",
        "| class | base AP | refined AP |",
        "|---|---|---|",
    ]
    for c in sorted(base_eval.ap_per_class):
        lines.append(
            f"| {ds.classes.get(c, c)} | {base_eval.ap_per_class[c]:.4f} "
            f"| {refined_eval.ap_per_class.get(c, 0.0):.4f} |"
        )
    lines += [
        "",
        "Figures: map_comparison.png, fp_bins.png, hypothesized_map.png, taxonomy.png",
        "",
    ]
    (out / "report.md").write_text("\n".join(lines), encoding="utf-8")
    print(
        f"base mAP {base_eval.map:.4f} -> refined {refined_eval.map:.4f}, "
        f"hard FPs {base_hard} -> {refined_hard}; report in {out}"
    )


_SWEEP_AXES = ("heuristic", "fp_thr", "sample_size", "roi_scale")


def cmd_sweep(args) -> None:
    doc = _load_config_doc(args.config)
    if args.axis not in _SWEEP_AXES:
        raise SchemaError(f"--axis: must be one of {', '.join(_SWEEP_AXES)}")
    train_ds = load_dataset(args.train_dataset)
    test_ds = load_dataset(args.test_dataset)
    train_images = train_ds.load_images()
    test_images = test_ds.load_images()
    train_dets = load_detections(args.train_detections)
    test_dets = load_detections(args.test_detections)
    seed = int(_pick(args.seed, doc, "seed", 0))
    base_params = PipelineParams(
        sampler=SamplerConfig(seed=seed),
        train=TrainConfig(
            epochs=int(_pick(args.epochs, doc, "epochs", 20)), seed=seed
        ),
        n_batches=int(_pick(args.batches, doc, "batches", 300)),
        iou_threshold=float(_pick(args.iou_thr, doc, "iou_thr", 0.5)),
    )

    values = [v.strip() for v in args.values.split(",") if v.strip()]
    if not values:
        raise SchemaError("--values: expected at least one value")
    rows = []
    for raw in values:
        params = base_params
        try:
            if args.axis == "heuristic":
                params = replace(
                    params, sampler=replace(params.sampler, heuristic=Heuristic(raw))
                )
            elif args.axis == "fp_thr":
                params = replace(
                    params, sampler=replace(params.sampler, fp_threshold=float(raw))
                )
            elif args.axis == "sample_size":
                params = replace(
                    params, sampler=replace(params.sampler, rois_per_batch=int(raw))
                )
            else:  # roi_scale
                params = replace(
                    params, feature=FeatureSpec(crop=CropConfig(roi_size=int(raw)))
                )
        except ValueError as e:
            raise SchemaError(f"--values: bad {args.axis} value {raw!r} ({e})") from e
        started = time.perf_counter()
        result = run_pipeline(
            train_images,
            train_ds.ground_truth,
            train_dets,
            test_images,
            test_ds.ground_truth,
            test_dets,
            params,
        )
        wall = time.perf_counter() - started
        rows.append(
            [
                args.axis,
                raw,
                float(result.base.map),
                float(result.refined.map),
                result.base_hard_fp,
                result.refined_hard_fp,
                float(result.refine_seconds_per_image),
                float(wall),
            ]
        )
        print(
            f"{args.axis}={raw}: base {result.base.map:.4f} "
            f"refined {result.refined.map:.4f} "
            f"refine {1000 * result.refine_seconds_per_image:.2f} ms/image"
        )
    _write_csv(
        Path(args.out),
        [
            "axis", "value", "base_map", "refined_map",
            "base_hard_fp", "refined_hard_fp",
            "refine_seconds_per_image", "wall_seconds",
        ],
        rows,
    )
    print(f"wrote {len(rows)} rows to {args.out}")


# --- parser -------------------------------------------------------------


def _common(p: argparse.ArgumentParser, out_help: str) -> None:
    p.add_argument("--config", help="JSON file supplying parameter defaults")
    p.add_argument("--seed", type=int, help="seed override")
    p.add_argument("--out", required=True, help=out_help)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="detrefine",
        description="Detection evaluation, hard-FP analysis, and crop-resize refinement",
    )
    parser.add_argument("--version", action="version", version=f"detrefine {__version__}")
    sub = parser.add_subparsers(dest="command")

    p = sub.add_parser("synth", help="generate a synthetic dataset")
    _common(p, "output directory")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("simulate", help="simulate a base detector over a dataset")
    p.add_argument("--dataset", required=True)
    _common(p, "output detections JSON")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("eval", help="evaluate detections against ground truth")
    p.add_argument("--dataset", required=True)
    p.add_argument("--detections", required=True)
    p.add_argument("--iou-thr", type=float, dest="iou_thr")
    p.add_argument("--ap-mode", choices=["all_point", "eleven_point"], dest="ap_mode")
    p.add_argument("--coco", action="store_true", help="also report AP@[0.50:0.95] and size buckets")
    _common(p, "output directory")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("analyze", help="false-positive diagnostics and figures")
    p.add_argument("--dataset", required=True)
    p.add_argument("--detections", required=True)
    p.add_argument("--iou-thr", type=float, dest="iou_thr")
    p.add_argument("--ap-mode", choices=["all_point", "eleven_point"], dest="ap_mode")
    p.add_argument("--bin-edges", dest="bin_edges", help="comma-separated score bin edges")
    p.add_argument("--thresholds", help="comma-separated removal thresholds")
    p.add_argument("--groups", help="JSON file of similarity groups {name: [class ids]}")
    _common(p, "output directory")
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("mine", help="assign labels and sample training minibatches")
    p.add_argument("--dataset", required=True)
    p.add_argument("--detections", required=True)
    p.add_argument("--heuristic", choices=[h.value for h in Heuristic])
    p.add_argument("--fp-thr", type=float, dest="fp_thr")
    p.add_argument("--rois", type=int, help="minibatch size R")
    p.add_argument("--images-per-batch", type=int, dest="images_per_batch")
    p.add_argument("--fg-iou", type=float, dest="fg_iou")
    p.add_argument("--batches", type=int, help="number of minibatches to draw")
    _common(p, "output manifest JSON")
    p.set_defaults(func=cmd_mine)

    p = sub.add_parser("train", help="train the refiner on a manifest")
    p.add_argument("--dataset", required=True)
    p.add_argument("--manifest", required=True)
    p.add_argument("--roi-size", type=int, dest="roi_size")
    p.add_argument("--lr", type=float)
    p.add_argument("--momentum", type=float)
    p.add_argument("--wd", type=float)
    p.add_argument("--epochs", type=int)
    p.add_argument("--lr-drop-fraction", type=float, dest="lr_drop_fraction")
    p.add_argument("--projection-dim", type=int, dest="projection_dim")
    _common(p, "output model JSON")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("refine", help="fuse refiner scores into detections")
    p.add_argument("--dataset", required=True)
    p.add_argument("--detections", required=True)
    p.add_argument("--model", required=True)
    _common(p, "output detections JSON")
    p.set_defaults(func=cmd_refine)

    p = sub.add_parser("report", help="compare base and refined detections")
    p.add_argument("--dataset", required=True)
    p.add_argument("--base", required=True)
    p.add_argument("--refined", required=True)
    p.add_argument("--iou-thr", type=float, dest="iou_thr")
    p.add_argument("--ap-mode", choices=["all_point", "eleven_point"], dest="ap_mode")
    p.add_argument("--hard-fp-score", type=float, dest="hard_fp_score")
    _common(p, "output directory")
    p.set_defaults(func=cmd_report)

    p = sub.add_parser("sweep", help="mine+train+refine+eval over one ablation axis")
    p.add_argument("--axis", required=True, choices=_SWEEP_AXES)
    p.add_argument("--values", required=True, help="comma-separated axis values")
    p.add_argument("--train-dataset", required=True, dest="train_dataset")
    p.add_argument("--train-detections", required=True, dest="train_detections")
    p.add_argument("--test-dataset", required=True, dest="test_dataset")
    p.add_argument("--test-detections", required=True, dest="test_detections")
    p.add_argument("--iou-thr", type=float, dest="iou_thr")
    p.add_argument("--batches", type=int)
    p.add_argument("--epochs", type=int)
    _common(p, "output CSV")
    p.set_defaults(func=cmd_sweep)

    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if not hasattr(args, "func"):
        parser.print_help()
        return 2
    try:
        args.func(args)
    except SchemaError as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    except (ValueError, SceneTooCrowdedError, InsufficientSamplesError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    except TrainingDivergedError as e:
        print(f"error: {e}", file=sys.stderr)
        return 4
    except OSError as e:
        print(f"error: {e}", file=sys.stderr)
        return 3
    return 0


if __name__ == "__main__":
    sys.exit(main())
