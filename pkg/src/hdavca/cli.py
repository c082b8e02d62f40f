"""Command-line surface: extract, train, predict, evaluate, ablate, fixtures."""

from __future__ import annotations

import argparse
import dataclasses
import json
import os
import sys
from concurrent.futures import ProcessPoolExecutor

import numpy as np

from . import evaluation, fixtures, svr
from .config import RunConfig
from .features import (
    ExtractionResult,
    extract_entry,
    read_feature_csv,
    write_feature_csv,
)
from .image import load_image
from .keypoints import detect_and_describe, keypoints_to_jsonable
from .manifest import load_manifest

WORKERS_ENV = "HDAVCA_WORKERS"


def main(argv=None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="hdavca",
        description="Visual-comfort scoring for stereoscopic retargeted image pairs.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("fixtures", help="write the synthetic self-test dataset")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_fixtures)

    p = sub.add_parser("extract", help="compute feature vectors for a manifest")
    _config_args(p)
    p.add_argument("--manifest", required=True)
    p.add_argument("--out", required=True, help="output feature CSV")
    p.add_argument("--featmap-orig", default=None,
                   help="feature-map file overriding featmap_original for every entry")
    p.add_argument("--featmap-ret", default=None,
                   help="feature-map file overriding featmap_retargeted for every entry")
    p.add_argument("--dump-keypoints", metavar="DIR", default=None,
                   help="also write per-entry keypoint JSON for debugging")
    p.set_defaults(func=cmd_extract)

    p = sub.add_parser("train", help="train an SVR on a feature CSV (needs mos)")
    _config_args(p)
    p.add_argument("--features", required=True)
    p.add_argument("--model-out", required=True)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("predict", help="score a feature CSV with a trained model")
    p.add_argument("--model", required=True)
    p.add_argument("--features", required=True)
    p.add_argument("--out", required=True, help="output CSV of id,prediction")
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("evaluate", help="repeated random-split evaluation")
    _config_args(p)
    p.add_argument("--features", required=True)
    p.add_argument("--report-out", required=True)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("ablate", help="evaluate every feature-family ablation mask")
    _config_args(p)
    p.add_argument("--features", required=True)
    p.add_argument("--report-out", required=True)
    p.set_defaults(func=cmd_ablate)

    return parser


def _config_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", default=None, help="JSON run-config file")
    p.add_argument("--mode", choices=["FR", "NR"], default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--n-splits", type=int, default=None)
    p.add_argument("--train-frac", type=float, default=None)
    p.add_argument("--svr-c", type=float, default=None)
    p.add_argument("--svr-gamma", type=float, default=None)
    p.add_argument("--svr-epsilon", type=float, default=None)
    p.add_argument("--grid-search", action="store_true", default=None)
    p.add_argument("--logistic-fit", action="store_true", default=None)
    p.add_argument("--group-by-content", dest="group_by_content",
                   action="store_true", default=None)
    p.add_argument("--no-group-by-content", dest="group_by_content",
                   action="store_false")
    p.add_argument("--did-weight", type=float, default=None)
    p.add_argument("--search-range", type=int, default=None)
    p.add_argument("--disparity-normalize", action="store_true", default=None)


_FLAG_TO_FIELD = {
    "mode": "mode",
    "seed": "seed",
    "n_splits": "n_splits",
    "train_frac": "train_frac",
    "svr_c": "svr_c",
    "svr_gamma": "svr_gamma",
    "svr_epsilon": "svr_epsilon",
    "grid_search": "svr_grid_search",
    "logistic_fit": "logistic_fit",
    "group_by_content": "group_by_content",
    "did_weight": "did_weight",
    "search_range": "search_range",
    "disparity_normalize": "disparity_normalize",
}


def _load_config(args) -> RunConfig:
    config = RunConfig.from_file(args.config) if args.config else RunConfig()
    overrides = {}
    for flag, fieldname in _FLAG_TO_FIELD.items():
        value = getattr(args, flag, None)
        if value is not None:
            overrides[fieldname] = value
    if overrides:
        config = dataclasses.replace(config, **overrides)
    return config


def cmd_fixtures(args) -> int:
    manifest = fixtures.write_fixture_set(args.out)
    print(manifest)
    return 0


def _extract_one(payload):
    entry, config = payload
    try:
        return extract_entry(entry, config), None
    except (ValueError, OSError) as exc:
        return None, f"entry {entry.id}: {exc}"


def cmd_extract(args) -> int:
    config = _load_config(args)
    entries = load_manifest(args.manifest)
    if args.featmap_orig or args.featmap_ret:
        entries = [
            dataclasses.replace(
                e,
                featmap_original=args.featmap_orig or e.featmap_original,
                featmap_retargeted=args.featmap_ret or e.featmap_retargeted,
            )
            for e in entries
        ]
    workers = int(os.environ.get(WORKERS_ENV, "1"))

    payloads = [(e, config) for e in entries]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            outcomes = list(pool.map(_extract_one, payloads))
    else:
        outcomes = [_extract_one(p) for p in payloads]

    results: list[ExtractionResult] = []
    failures: list[str] = []
    for result, err in outcomes:
        if err is not None:
            failures.append(err)
            print(f"error: {err}", file=sys.stderr)
        else:
            results.append(result)

    if results:
        mask = results[0].mask
        write_feature_csv(args.out, results, mask)
        print(f"wrote {len(results)} feature rows to {args.out}")

    if args.dump_keypoints:
        os.makedirs(args.dump_keypoints, exist_ok=True)
        for entry in entries:
            try:
                dump = {"retargeted_left": keypoints_to_jsonable(
                    detect_and_describe(load_image(entry.retargeted_left), config.detector))}
                if entry.original_left:
                    dump["original_left"] = keypoints_to_jsonable(
                        detect_and_describe(load_image(entry.original_left), config.detector))
                out = os.path.join(args.dump_keypoints, f"{entry.id}.keypoints.json")
                with open(out, "w", encoding="utf-8") as fh:
                    json.dump(dump, fh, indent=1, sort_keys=True)
            except (ValueError, OSError) as exc:
                failures.append(f"keypoint dump {entry.id}: {exc}")

    if failures:
        print(f"{len(failures)} entr{'y' if len(failures) == 1 else 'ies'} failed",
              file=sys.stderr)
        return 1
    return 0


def _table_for_training(path):
    table = read_feature_csv(path)
    if np.any(np.isnan(table.mos)):
        raise ValueError("feature csv is missing mos values for some rows")
    return table


def cmd_train(args) -> int:
    config = _load_config(args)
    table = _table_for_training(args.features)
    c, gamma = config.svr_c, config.svr_gamma
    if config.svr_grid_search:
        c, gamma = svr.grid_search(
            table.x, table.mos, epsilon=config.svr_epsilon, seed=config.seed,
            mask=table.mask,
        )
    model = svr.svr_train(
        table.x, table.mos, c, gamma, config.svr_epsilon, mask=table.mask
    )
    svr.save_model(model, args.model_out)
    print(f"trained on {len(table.ids)} rows "
          f"({len(model.coefficients)} support vectors); model at {args.model_out}")
    return 0


def cmd_predict(args) -> int:
    model = svr.load_model(args.model)
    table = read_feature_csv(args.features)
    preds = svr.svr_predict_batch(model, table.x)
    with open(args.out, "w", encoding="utf-8") as fh:
        fh.write("id,prediction\n")
        for item_id, pred in zip(table.ids, preds):
            fh.write(f"{item_id},{float(pred)!r}\n")
    print(f"wrote {len(preds)} predictions to {args.out}")
    return 0


def cmd_evaluate(args) -> int:
    config = _load_config(args)
    table = _table_for_training(args.features)
    report = evaluation.cross_validate(
        table.x,
        table.mos,
        content_ids=table.content_ids,
        n_splits=config.n_splits,
        train_frac=config.train_frac,
        seed=config.seed,
        group_by_content=config.group_by_content,
        mask=table.mask,
        svr_c=config.svr_c,
        svr_gamma=config.svr_gamma,
        svr_epsilon=config.svr_epsilon,
        grid_search=config.svr_grid_search,
        logistic=config.logistic_fit,
    )
    with open(args.report_out, "w", encoding="utf-8") as fh:
        fh.write(report.to_json())
    print(evaluation.format_report_table({"evaluate": report}))
    return 0


def cmd_ablate(args) -> int:
    config = _load_config(args)
    table = _table_for_training(args.features)
    reports = evaluation.ablate(
        table.x,
        table.mos,
        content_ids=table.content_ids,
        n_splits=config.n_splits,
        train_frac=config.train_frac,
        seed=config.seed,
        group_by_content=config.group_by_content,
        svr_c=config.svr_c,
        svr_gamma=config.svr_gamma,
        svr_epsilon=config.svr_epsilon,
        grid_search=config.svr_grid_search,
        logistic=config.logistic_fit,
    )
    doc = {name: rep.to_dict() for name, rep in reports.items()}
    with open(args.report_out, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
    print(evaluation.format_report_table(reports))
    return 0


if __name__ == "__main__":
    sys.exit(main())
