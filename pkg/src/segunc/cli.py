"""Command line front-end: ``segunc {synth,eval,entropy,compare}``."""
from __future__ import annotations

import argparse
import json
import logging
import math
import os
import statistics
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Optional, Sequence

import jsonschema
import numpy as np

from segunc import entropy as ent
from segunc import io as sio
from segunc import metrics, stats, synth

log = logging.getLogger("segunc")

SCHEMA_VERSION = 1
METRIC_FLAGS = {"ged": "d2_ged", "iou": "d2_iou", "det": "d2_det"}
ALTERNATIVE_FLAGS = {"less": stats.A_LESS, "greater": stats.A_GREATER}

_RANGE = {
    "type": "array",
    "items": {"type": "number", "exclusiveMinimum": 0},
    "minItems": 2,
    "maxItems": 2,
}
_UNIT = {"type": "number", "minimum": 0, "maximum": 1}

SCENARIO_SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "type": "object",
    "additionalProperties": False,
    "required": ["schema_version"],
    "properties": {
        "schema_version": {"const": SCHEMA_VERSION},
        "preset": {"enum": sorted(synth.PRESETS)},
        "seed": {"type": "integer", "minimum": 0, "maximum": 2**64 - 1},
        "n_images": {"type": "integer", "minimum": 0},
        "grid": {
            "type": "object",
            "additionalProperties": False,
            "required": ["height", "width"],
            "properties": {
                "height": {"type": "integer", "minimum": 1},
                "width": {"type": "integer", "minimum": 1},
            },
        },
        "truth": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "radius_range": _RANGE,
                "aspect_range": _RANGE,
                "presence_prob": _UNIT,
            },
        },
        "annotators": {
            "type": "array",
            "minItems": 1,
            "items": {
                "type": "object",
                "additionalProperties": False,
                "properties": {
                    "scale_bias": {"type": "number", "exclusiveMinimum": 0},
                    "offset_bias": {
                        "type": "array",
                        "items": {"type": "number"},
                        "minItems": 2,
                        "maxItems": 2,
                    },
                    "empty_rate": _UNIT,
                    "noise_sigma": {"type": "number", "minimum": 0},
                    "noise_harmonics": {"type": "integer", "minimum": 0},
                },
            },
        },
        "predictors": {
            "type": "object",
            "additionalProperties": False,
            "required": ["styles"],
            "properties": {
                "styles": {
                    "type": "array",
                    "items": {"enum": list(synth.STYLES)},
                    "uniqueItems": True,
                },
                "n_samples": {"type": "integer", "minimum": 1},
            },
        },
    },
}


class ScenarioError(ValueError):
    pass


def _field_path(path) -> str:
    parts = ["$"]
    for p in path:
        parts.append(f"[{p}]" if isinstance(p, int) else f".{p}")
    return "".join(parts)


def parse_scenario(doc: dict, seed: Optional[int] = None) -> tuple[synth.SynthScenario, dict]:
    """Build a scenario from a JSON document; returns it with the predictor settings.

    Schema violations are collected and reported with a ``$.path.to[0].field``
    locator each.
    """
    validator = jsonschema.Draft202012Validator(SCENARIO_SCHEMA)
    errors = sorted(validator.iter_errors(doc), key=lambda e: list(map(str, e.absolute_path)))
    if errors:
        raise ScenarioError(
            "invalid scenario:\n"
            + "\n".join(f"  {_field_path(e.absolute_path)}: {e.message}" for e in errors)
        )
    base = synth.preset(doc["preset"]) if "preset" in doc else synth.SynthScenario()
    changes: dict = {}
    try:
        if "grid" in doc:
            changes["shape"] = (doc["grid"]["height"], doc["grid"]["width"])
        if "truth" in doc:
            t = {k: tuple(v) if isinstance(v, list) else v for k, v in doc["truth"].items()}
            changes["truth"] = synth.TruthParams(**{**asdict(base.truth), **t})
    except ValueError as exc:
        raise ScenarioError(f"invalid scenario: $.truth: {exc}") from None
    if "annotators" in doc:
        profiles = []
        for i, a in enumerate(doc["annotators"]):
            a = {k: tuple(v) if isinstance(v, list) else v for k, v in a.items()}
            try:
                profiles.append(synth.AnnotatorProfile(**a))
            except ValueError as exc:
                raise ScenarioError(f"invalid scenario: $.annotators[{i}]: {exc}") from None
        changes["annotators"] = tuple(profiles)
    for key in ("n_images", "seed"):
        if key in doc:
            changes[key] = doc[key]
    if seed is not None:
        changes["seed"] = seed
    try:
        scenario = synth.SynthScenario(**{**_shallow_fields(base), **changes})
    except ValueError as exc:
        raise ScenarioError(f"invalid scenario: {exc}") from None
    predictors = doc.get("predictors", {"styles": []})
    predictors = {"styles": list(predictors["styles"]), "n_samples": predictors.get("n_samples", 16)}
    return scenario, predictors


def _shallow_fields(obj) -> dict:
    return {k: getattr(obj, k) for k in obj.__dataclass_fields__}


# --- synth ------------------------------------------------------------------


def _synth_one(args) -> str:
    scenario, predictors, index, out = args
    img = synth.generate_image(scenario, index)
    image_dir = Path(out) / img.image_id
    sio.write_sample_set(img.annotations, image_dir / sio.ANNOTATIONS, prefix="ann_")
    sio.write_mask(synth.rasterize(img.truth, scenario.shape), image_dir / sio.TRUTH / "truth.pgm")
    for style in predictors["styles"]:
        (preds,) = synth.synthetic_predictor([img], style, scenario, predictors["n_samples"])
        sio.write_sample_set(preds, image_dir / sio.PREDICTIONS / style, prefix="pred_")
    return img.image_id


def _pool_map(fn, items: list, workers: int) -> list:
    if workers <= 1 or len(items) < 2:
        return [fn(x) for x in items]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items, chunksize=max(1, len(items) // (4 * workers))))


def cmd_synth(scenario_path: str, out: str, seed: Optional[int] = None, workers: int = 1) -> dict:
    with open(scenario_path, encoding="utf-8") as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ScenarioError(f"{scenario_path}: not valid JSON: {exc}") from None
    scenario, predictors = parse_scenario(doc, seed)
    root = Path(out)
    root.mkdir(parents=True, exist_ok=True)
    jobs = [(scenario, predictors, i, str(root)) for i in range(scenario.n_images)]
    ids = _pool_map(_synth_one, jobs, workers)
    manifest = {
        "schema_version": SCHEMA_VERSION,
        "preset": scenario.preset,
        "seed": scenario.seed,
        "scenario": scenario.as_dict(),
        "predictors": predictors,
        "images": ids,
    }
    manifest = json.loads(json.dumps(manifest))
    sio.write_json(manifest, root / "manifest.json")
    log.info("wrote %d images to %s", len(ids), root)
    return manifest


# --- eval -------------------------------------------------------------------


@dataclass(frozen=True)
class EvalConfig:
    dataset: str
    models: Optional[tuple] = None
    estimator: str = metrics.INCLUSIVE
    threshold: int = sio.MASK_THRESHOLD
    workers: int = 1
    out: str = "report.csv"
    summary: Optional[str] = None
    max_samples: Optional[int] = None
    seed: int = 0

    def summary_path(self) -> Path:
        if self.summary:
            return Path(self.summary)
        out = Path(self.out)
        return out.with_name(out.stem + ".summary.json")


def _eval_image(args) -> list[sio.ReportRow]:
    config, image_id, models = args
    ann = sio.load_annotations(config.dataset, image_id, config.threshold)
    rows = []
    for model in models:
        pred = sio.load_predictions(config.dataset, image_id, model, config.threshold)
        if pred.shape[1:] != ann.shape[1:]:
            raise sio.LayoutError(
                f"image {image_id}: model {model} masks are {pred.shape[1:]}, "
                f"annotations are {ann.shape[1:]}"
            )
        report = metrics.ged_triple(ann, pred, config.estimator, config.max_samples, config.seed)
        rows.append(sio.ReportRow.from_report(image_id, model, report))
    return rows


def _describe(values: list[float]) -> dict:
    if not values:
        return {"mean": None, "median": None, "count": 0}
    return {
        "mean": math.fsum(values) / len(values),
        "median": statistics.median(values),
        "count": len(values),
    }


def summarize(rows: Sequence[sio.ReportRow], estimator: str) -> dict:
    models = sorted({r.model for r in rows})
    per_model: dict = {}
    by_model: dict = {m: {} for m in models}
    for r in rows:
        by_model[r.model][r.image_id] = r
    for m in models:
        mrows = [r for r in rows if r.model == m]
        entry = {}
        for name in stats.METRICS:
            vals = [getattr(r, name) for r in mrows if getattr(r, name) is not None]
            entry[name] = _describe(vals)
        entry["d2_iou"]["n_undefined"] = sum(1 for r in mrows if r.d2_iou is None)
        per_model[m] = entry
    rankings = {}
    for name in stats.METRICS:
        try:
            ranked = stats.rank_models(by_model, name)
        except ValueError:
            ranked = []
        rankings[name] = [{"model": m, "mean": v, "count": c} for m, v, c in ranked]
    return {
        "schema_version": SCHEMA_VERSION,
        "estimator": estimator,
        "n_images": len({r.image_id for r in rows}),
        "models": per_model,
        "rankings": rankings,
    }


def cmd_eval(config: EvalConfig) -> tuple[list[sio.ReportRow], dict]:
    if config.estimator not in metrics.ESTIMATORS:
        raise ValueError(f"unknown estimator {config.estimator!r}")
    images = sio.list_images(config.dataset)
    if not images:
        raise sio.LayoutError(f"no image directories under {config.dataset}")
    available = sio.discover_models(config.dataset)
    models = list(config.models) if config.models else available
    unknown = [m for m in models if m not in available]
    if unknown:
        raise ValueError(f"unknown model(s) {unknown}; available: {available}")
    if not models:
        raise sio.LayoutError(f"no prediction folders under {config.dataset}")

    jobs = [(config, image_id, tuple(models)) for image_id in images]
    rows = [row for chunk in _pool_map(_eval_image, jobs, config.workers) for row in chunk]
    summary = summarize(rows, config.estimator)
    sio.write_report(rows, config.out)
    sio.write_json(summary, config.summary_path())
    log.info("evaluated %d images x %d models -> %s", len(images), len(models), config.out)
    return rows, summary


# --- entropy ----------------------------------------------------------------


def _entropy_source(dataset: str, image_id: str, source: str, model: Optional[str], threshold: int):
    if source == "annotations":
        return ent.mean_map(sio.load_annotations(dataset, image_id, threshold))
    if source == "model":
        return ent.mean_map(sio.load_predictions(dataset, image_id, model, threshold))
    return sio.load_probmaps(dataset, image_id, model).mean(axis=0)


def cmd_entropy(
    dataset: str,
    source: str,
    out: str,
    bins: int = 10,
    model: Optional[str] = None,
    threshold: int = sio.MASK_THRESHOLD,
) -> dict:
    """Entropy-of-mean maps (bits, as 16-bit PGM) and histogram CSV per image."""
    if source not in ("annotations", "model", "probmap"):
        raise ValueError(f"unknown entropy source {source!r}")
    if source != "annotations" and not model:
        raise ValueError(f"source {source!r} needs a model name (--models)")
    if bins < 1:
        raise ValueError("bins must be at least 1")
    images = sio.list_images(dataset)
    if not images:
        raise sio.LayoutError(f"no image directories under {dataset}")

    maps = {}
    for image_id in images:
        maps[image_id] = ent.entropy_map(_entropy_source(dataset, image_id, source, model, threshold))
    lines = ["image_id,bin_lo,bin_hi,count"]
    for image_id, e in maps.items():
        for (lo, hi), count in ent.entropy_histogram(e, bins):
            lines.append(f"{image_id},{sio.format_float(lo)},{sio.format_float(hi)},{count}")
    pooled = np.concatenate([e.ravel() for e in maps.values()])
    for (lo, hi), count in ent.entropy_histogram(pooled, bins):
        lines.append(f"pooled,{sio.format_float(lo)},{sio.format_float(hi)},{count}")

    out_dir = Path(out)
    for image_id, e in maps.items():
        sio.write_probmap(e, out_dir / f"{image_id}.pgm")
    sio.atomic_write_text(out_dir / "histogram.csv", "\n".join(lines) + "\n")
    return {"images": len(maps), "bins": bins}


# --- compare ----------------------------------------------------------------


def _select_model(rows: list[sio.ReportRow], model: Optional[str], label: str) -> dict:
    names = sorted({r.model for r in rows})
    if model is None:
        if len(names) != 1:
            raise ValueError(f"report {label} holds models {names}; choose one with --models")
        model = names[0]
    elif model not in names:
        raise ValueError(f"report {label} has no model {model!r}; found {names}")
    return {r.image_id: r for r in rows if r.model == model}


def cmd_compare(
    report_a: str,
    report_b: str,
    metric: str = "ged",
    alternative: str = "less",
    models: Optional[Sequence[str]] = None,
) -> dict:
    column = METRIC_FLAGS.get(metric, metric)
    alt = ALTERNATIVE_FLAGS.get(alternative, alternative)
    models = tuple(models or ())
    model_a = models[0] if models else None
    model_b = models[1] if len(models) > 1 else model_a
    a = _select_model(sio.read_report(report_a), model_a, "a")
    b = _select_model(sio.read_report(report_b), model_b, "b")
    if not set(a) & set(b):
        raise ValueError("the two reports share no image")
    series, dropped = stats.paired_metric(a, b, column)
    result = stats.wilcoxon_one_sided(series, alt)
    return {
        "schema_version": SCHEMA_VERSION,
        "metric": column,
        "alternative": alt,
        "n_pairs": len(series.image_ids),
        "n_dropped": dropped,
        **asdict(result),
    }


# --- entry point --------------------------------------------------------------


def _models_arg(value: Optional[str]) -> Optional[tuple]:
    if not value:
        return None
    return tuple(m.strip() for m in value.split(",") if m.strip())


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="segunc", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic multi-annotator dataset")
    p.add_argument("scenario", help="scenario JSON document")
    p.add_argument("--out", required=True, help="dataset root to populate")
    p.add_argument("--seed", type=int, default=None, help="override the scenario seed")
    p.add_argument("--workers", type=int, default=1)

    p = sub.add_parser("eval", help="per-image GED / IoU / detection report")
    p.add_argument("--dataset", required=True)
    p.add_argument("--models", default=None, help="comma-separated model names (default: all)")
    p.add_argument("--estimator", choices=metrics.ESTIMATORS, default=metrics.INCLUSIVE)
    p.add_argument("--threshold", type=int, default=sio.MASK_THRESHOLD, help="mask binarization level")
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--max-samples", type=int, default=None, help="cap masks per set (seeded subsample)")
    p.add_argument("--seed", type=int, default=0, help="seed for --max-samples")
    p.add_argument("--out", required=True, help="report CSV path")
    p.add_argument("--summary", default=None, help="summary JSON path (default: <out>.summary.json)")

    p = sub.add_parser("entropy", help="entropy-of-mean maps and histograms")
    p.add_argument("--dataset", required=True)
    p.add_argument("--source", choices=("annotations", "model", "probmap"), default="annotations")
    p.add_argument("--models", default=None, help="model name for --source model/probmap")
    p.add_argument("--bins", type=int, default=10)
    p.add_argument("--threshold", type=int, default=sio.MASK_THRESHOLD)
    p.add_argument("--out", required=True, help="output directory")

    p = sub.add_parser("compare", help="one-sided Wilcoxon test between two reports")
    p.add_argument("report_a")
    p.add_argument("report_b")
    p.add_argument("--metric", choices=tuple(METRIC_FLAGS), default="ged")
    p.add_argument("--alternative", choices=tuple(ALTERNATIVE_FLAGS), default="less")
    p.add_argument("--models", default=None, help="model in report a[,model in report b]")
    p.add_argument("--out", default=None, help="result JSON path (default: stdout)")
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    logging.basicConfig(
        level=os.environ.get("SEGUNC_LOG", "WARNING").upper(),
        format="%(levelname)s %(name)s: %(message)s",
    )
    args = build_parser().parse_args(argv)
    try:
        if args.command == "synth":
            cmd_synth(args.scenario, args.out, args.seed, args.workers)
        elif args.command == "eval":
            cmd_eval(
                EvalConfig(
                    dataset=args.dataset,
                    models=_models_arg(args.models),
                    estimator=args.estimator,
                    threshold=args.threshold,
                    workers=args.workers,
                    out=args.out,
                    summary=args.summary,
                    max_samples=args.max_samples,
                    seed=args.seed,
                )
            )
        elif args.command == "entropy":
            models = _models_arg(args.models)
            cmd_entropy(
                args.dataset, args.source, args.out, args.bins,
                models[0] if models else None, args.threshold,
            )
        else:
            result = cmd_compare(
                args.report_a, args.report_b, args.metric, args.alternative, _models_arg(args.models)
            )
            text = json.dumps(result, indent=2, sort_keys=True) + "\n"
            if args.out:
                sio.atomic_write_text(args.out, text)
            else:
                sys.stdout.write(text)
    except (ValueError, OSError) as exc:
        print(f"segunc {args.command}: error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
