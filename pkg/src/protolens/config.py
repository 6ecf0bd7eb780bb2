"""Run configuration: JSON file + command-line overrides, validated up front."""

from __future__ import annotations

import copy
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Any

import jsonschema

from protolens.alike import MASK_STRATEGIES, OPERATORS, AlikeConfig
from protolens.attribution import ESTIMATORS
from protolens.data import blobs2_path
from protolens.errors import ProtolensError
from protolens.forest import ForestParams
from protolens.selection import ALGORITHMS, SelectionConfig

BUILTIN_PREFIX = "builtin:"


class ConfigInvalid(ProtolensError):
    code = "CONFIG_INVALID"


class ConfigNotFound(ProtolensError):
    code = "CONFIG_NOT_FOUND"


class DatasetNotFound(ProtolensError):
    code = "DATASET_NOT_FOUND"


_bool_list = {"type": "array", "items": {"type": "boolean"}, "minItems": 1}

SCHEMA: dict[str, Any] = {
    "type": "object",
    "additionalProperties": False,
    "required": ["dataset", "label_column"],
    "properties": {
        "dataset": {"type": "string", "minLength": 1},
        "dataset_name": {"type": "string"},
        "label_column": {"type": "string", "minLength": 1},
        "missing_tokens": {"type": "array", "items": {"type": "string"}},
        "output_dir": {"type": "string"},
        "split": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "test_fraction": {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 1},
                "seed": {"type": "integer", "minimum": 0},
            },
        },
        "forest": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "n_trees": {"type": "integer", "minimum": 1},
                "max_depth": {"type": ["integer", "null"], "minimum": 1},
                "min_leaf": {"type": "integer", "minimum": 1},
                "features_per_split": {"type": ["integer", "null"], "minimum": 1},
                "bootstrap": {"type": "boolean"},
                "seed": {"type": "integer", "minimum": 0},
            },
        },
        "estimator": {"enum": list(ESTIMATORS)},
        "shapley_background": {"type": ["integer", "null"], "minimum": 1},
        "alike": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "ignore_direction": {"type": "boolean"},
                "normalize_similarity": {"type": "boolean"},
                "operator": {"enum": list(OPERATORS)},
                "mask_strategy": {"enum": list(MASK_STRATEGIES)},
            },
        },
        "selection": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "algorithm": {"enum": list(ALGORITHMS)},
                "beta": {"type": "number", "minimum": 0},
                "k_per_class": {"type": "integer", "minimum": 1},
                "m_total": {"type": "integer", "minimum": 1},
                "apete_threshold": {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 1},
            },
        },
        "explain": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "instances": {"type": "array", "items": {"type": "string"}, "minItems": 1},
            },
        },
        "sweep": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "algorithms": {"type": "array", "items": {"enum": list(ALGORITHMS)}, "minItems": 1},
                "estimators": {"type": "array", "items": {"enum": list(ESTIMATORS)}, "minItems": 1},
                "operators": {"type": "array", "items": {"enum": list(OPERATORS)}, "minItems": 1},
                "ignore_direction": _bool_list,
                "normalize": _bool_list,
                "mask_strategies": {"type": "array", "items": {"enum": list(MASK_STRATEGIES)}, "minItems": 1},
                "betas": {"type": "array", "items": {"type": "number", "minimum": 0}, "minItems": 1},
                "pairing": {"enum": ["algorithm_estimator", "dataset"]},
            },
        },
    },
}

DEFAULTS: dict[str, Any] = {
    "missing_tokens": [""],
    "output_dir": "out",
    "split": {"test_fraction": 0.2, "seed": 42},
    "forest": {"n_trees": 100, "max_depth": 8, "min_leaf": 1, "features_per_split": None,
               "bootstrap": True, "seed": 42},
    "estimator": "saabas",
    "shapley_background": None,
    "alike": {"ignore_direction": True, "normalize_similarity": True, "operator": "hadamard",
              "mask_strategy": "mean_threshold"},
    "selection": {"algorithm": "gkm", "beta": 0.0, "k_per_class": 3, "m_total": 10,
                  "apete_threshold": 0.05},
    "explain": {"instances": ["test:all"]},
    "sweep": {"algorithms": ["gkm"], "estimators": ["saabas"], "operators": ["hadamard"],
              "ignore_direction": [True], "normalize": [True], "mask_strategies": ["mean_threshold"],
              "betas": [0.0, 0.5], "pairing": "algorithm_estimator"},
}


def _merge(defaults: dict, given: dict) -> dict:
    out = copy.deepcopy(defaults)
    for key, value in given.items():
        if isinstance(value, dict) and isinstance(out.get(key), dict):
            out[key] = _merge(out[key], value)
        else:
            out[key] = copy.deepcopy(value)
    return out


@dataclass
class RunConfig:
    raw: dict[str, Any]
    dataset_path: Path
    output_dir: Path

    @property
    def label_column(self) -> str:
        return self.raw["label_column"]

    @property
    def dataset_name(self) -> str:
        return self.raw.get("dataset_name") or self.dataset_path.stem

    @property
    def forest_params(self) -> ForestParams:
        f = self.raw["forest"]
        return ForestParams(
            n_trees=f["n_trees"],
            max_depth=f["max_depth"],
            min_leaf=f["min_leaf"],
            features_per_split=f["features_per_split"],
            bootstrap=f["bootstrap"],
        )

    @property
    def alike(self) -> AlikeConfig:
        return AlikeConfig(**self.raw["alike"])

    def selection(self, **overrides) -> SelectionConfig:
        s = dict(self.raw["selection"])
        alike = overrides.pop("alike", self.alike)
        s.update(overrides)
        return SelectionConfig(
            algorithm=s["algorithm"],
            beta=float(s["beta"]),
            alike=alike,
            k_per_class=s["k_per_class"],
            m_total=s["m_total"],
            apete_threshold=s["apete_threshold"],
        )


def _resolve_dataset(value: str, base: Path) -> Path:
    if value.startswith(BUILTIN_PREFIX):
        name = value[len(BUILTIN_PREFIX):]
        if name != "blobs2":
            raise DatasetNotFound(f"no bundled dataset named {name!r}")
        return blobs2_path()
    path = Path(value)
    return path if path.is_absolute() else base / path


def build_config(raw: dict[str, Any], base_dir: Path, out: str | None = None, seed: int | None = None) -> RunConfig:
    try:
        jsonschema.validate(raw, SCHEMA)
    except jsonschema.ValidationError as exc:
        where = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise ConfigInvalid(f"{where}: {exc.message}") from None
    merged = _merge(DEFAULTS, raw)
    if seed is not None:
        merged["split"]["seed"] = seed
        merged["forest"]["seed"] = seed
    dataset = _resolve_dataset(merged["dataset"], base_dir)
    if not dataset.is_file():
        raise DatasetNotFound(f"dataset file {str(dataset)!r} does not exist")
    if out is not None:
        output_dir = Path(out)
    else:
        output_dir = Path(merged["output_dir"])
        if not output_dir.is_absolute():
            output_dir = base_dir / output_dir
    return RunConfig(raw=merged, dataset_path=dataset, output_dir=output_dir)


def load_config(path: str | Path, out: str | None = None, seed: int | None = None) -> RunConfig:
    path = Path(path)
    if not path.is_file():
        raise ConfigNotFound(f"config file {str(path)!r} does not exist")
    try:
        raw = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ConfigInvalid(f"config is not valid JSON: {exc}") from None
    return build_config(raw, path.parent, out=out, seed=seed)
