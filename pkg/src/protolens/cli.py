"""Command-line front end.

    protolens train    --config run.json
    protolens select   --config run.json
    protolens explain  --config run.json [--instances test:0,train:5]
    protolens evaluate --config run.json
    protolens sweep    --config run.json [--threads 8]

Every failure prints ``{"error": {"code": ..., "message": ...}}`` on stderr
and exits with status 1.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import platform
import sys

import numpy as np

from protolens import __version__
from protolens import pipeline
from protolens.config import RunConfig, load_config
from protolens.errors import ProtolensError
from protolens.forest import TrainedForest, load_forest, save_forest
from protolens.selection import PrototypeSet

log = logging.getLogger("protolens")

FOREST_FILE = "forest.json"
SPLIT_FILE = "split.json"
META_FILE = "run_meta.json"
PROTOTYPES_FILE = "prototypes.json"
EXPLANATIONS_FILE = "explanations.jsonl"
EVALUATION_JSON = "evaluation.json"
EVALUATION_CSV = "evaluation.csv"


class ArtifactNotFound(ProtolensError):
    code = "ARTIFACT_NOT_FOUND"


def _read_artifact(cfg: RunConfig, name: str, hint: str) -> str:
    path = cfg.output_dir / name
    if not path.is_file():
        raise ArtifactNotFound(f"{path} not found; run `protolens {hint}` first")
    return path.read_text(encoding="utf-8")


def _load_trained(cfg: RunConfig):
    forest: TrainedForest = load_forest(_read_artifact(cfg, FOREST_FILE, "train"))
    manifest = json.loads(_read_artifact(cfg, SPLIT_FILE, "train"))
    ds = pipeline.load_dataset(cfg)
    split = pipeline.restore_split(ds, manifest)
    return forest, split


def _load_prototypes(cfg: RunConfig) -> PrototypeSet:
    return PrototypeSet.from_dict(json.loads(_read_artifact(cfg, PROTOTYPES_FILE, "select")))


def cmd_train(cfg: RunConfig, threads: int) -> dict:
    ds = pipeline.load_dataset(cfg)
    split = pipeline.make_split(cfg, ds)
    forest = pipeline.train_forest(cfg, split, threads)
    out = cfg.output_dir
    out.mkdir(parents=True, exist_ok=True)
    (out / FOREST_FILE).write_bytes(save_forest(forest))
    (out / SPLIT_FILE).write_text(pipeline.dump_json(pipeline.split_manifest(cfg, split)), encoding="utf-8")
    meta = {
        "protolens_version": __version__,
        "numpy_version": np.__version__,
        "python_version": platform.python_version(),
        "dataset": cfg.dataset_name,
        "split_seed": cfg.raw["split"]["seed"],
        "forest_seed": cfg.raw["forest"]["seed"],
        "config": cfg.raw,
    }
    (out / META_FILE).write_text(pipeline.dump_json(meta), encoding="utf-8")
    return {"forest": str(out / FOREST_FILE), "n_train": split.train.n, "n_test": split.test.n}


def cmd_select(cfg: RunConfig, threads: int) -> dict:
    forest, split = _load_trained(cfg)
    attributions = pipeline.attribute(cfg, forest, split, cfg.raw["estimator"])
    sel = cfg.selection()
    prototypes = pipeline.select(forest, split, sel, attributions.train)
    doc = prototypes.to_dict() | {"estimator": cfg.raw["estimator"]}
    (cfg.output_dir / PROTOTYPES_FILE).write_text(pipeline.dump_json(doc), encoding="utf-8")
    return {"n_prototypes": len(prototypes), "objective": prototypes.objective_trace[-1]}


def cmd_explain(cfg: RunConfig, threads: int, instances: list[str] | None = None) -> dict:
    forest, split = _load_trained(cfg)
    prototypes = _load_prototypes(cfg)
    selectors = instances or cfg.raw["explain"]["instances"]
    # validate selectors before paying for attributions
    for token in selectors:
        pipeline.parse_selector(token, split)
    attributions = pipeline.attribute(cfg, forest, split, cfg.raw["estimator"])
    records = pipeline.explain_records(forest, split, prototypes, attributions, cfg.alike, selectors)
    lines = "".join(json.dumps(r, sort_keys=True) + "\n" for r in records)
    (cfg.output_dir / EXPLANATIONS_FILE).write_text(lines, encoding="utf-8")
    return {"records": len(records)}


def cmd_evaluate(cfg: RunConfig, threads: int) -> dict:
    forest, split = _load_trained(cfg)
    prototypes = _load_prototypes(cfg)
    attributions = pipeline.attribute(cfg, forest, split, cfg.raw["estimator"])
    doc = pipeline.evaluate(forest, split, prototypes, attributions, cfg.alike)
    doc["dataset"] = cfg.dataset_name
    (cfg.output_dir / EVALUATION_JSON).write_text(pipeline.dump_json(doc), encoding="utf-8")
    (cfg.output_dir / EVALUATION_CSV).write_text(pipeline.evaluation_csv(doc), encoding="utf-8")
    return {r["method"]: r["fidelity"] for r in doc["fidelity"]}


def cmd_sweep(cfg: RunConfig, threads: int) -> dict:
    rows, summary = pipeline.run_sweep(cfg, threads=threads)
    return {"cells": len(rows), "wilcoxon": summary.get("status")}


COMMANDS = {
    "train": cmd_train,
    "select": cmd_select,
    "explain": cmd_explain,
    "evaluate": cmd_evaluate,
    "sweep": cmd_sweep,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="protolens", description=__doc__.split("\n")[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, help="JSON run configuration")
        p.add_argument("--out", default=None, help="output directory (overrides the config)")
        p.add_argument("--seed", type=int, default=None, help="override split and forest seeds")
        p.add_argument("--threads", type=int, default=1)
        if name == "explain":
            p.add_argument("--instances", default=None,
                           help="comma-separated selectors such as test:0,train:12 or test:all")
    return parser


def _error(code: str, message: str) -> int:
    sys.stderr.write(json.dumps({"error": {"code": code, "message": message}}) + "\n")
    return 1


def main(argv: list[str] | None = None) -> int:
    logging.basicConfig(level=os.environ.get("PROTOLENS_LOG", "WARNING").upper(),
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        args = build_parser().parse_args(argv)
    except SystemExit as exc:
        if exc.code in (0, None):
            raise
        return _error("USAGE", "invalid command-line arguments")
    if args.threads < 1:
        return _error("USAGE", "--threads must be >= 1")
    try:
        cfg = load_config(args.config, out=args.out, seed=args.seed)
        if args.command == "explain":
            instances = args.instances.split(",") if args.instances else None
            result = cmd_explain(cfg, args.threads, instances)
        else:
            result = COMMANDS[args.command](cfg, args.threads)
    except ProtolensError as exc:
        return _error(exc.code, str(exc))
    except OSError as exc:
        return _error("IO_ERROR", str(exc))
    print(json.dumps(result, sort_keys=True))
    return 0


if __name__ == "__main__":
    sys.exit(main())
