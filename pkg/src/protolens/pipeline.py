"""End-to-end stages shared by the command-line front end."""

from __future__ import annotations

import csv
import hashlib
import io
import itertools
import json
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from protolens.alike import AlikeConfig, alike_mask
from protolens.attribution import attribution_matrix
from protolens.baselines import evaluate_baselines
from protolens.config import RunConfig
from protolens.data import Dataset, SplitPair, load_csv, stratified_split
from protolens.errors import AllZeroDifferences, CorruptPayload, UnknownInstanceId
from protolens.forest import TrainedForest, fit_forest
from protolens.proximity import distance_matrix
from protolens.selection import PrototypeSet, SelectionConfig, build_context, select_prototypes
from protolens.stats import mask_statistics, wilcoxon_signed_rank
from protolens.surrogate import fidelity, nearest_prototypes

log = logging.getLogger("protolens")

SWEEP_COLUMNS = [
    "dataset", "algorithm", "estimator", "operator", "ignore_direction", "normalize",
    "mask_strategy", "beta", "n_prototypes", "fidelity", "mean_mask_len",
]
EVALUATION_COLUMNS = ["method", "fidelity", "size", "n_test", "agreements"]


def dump_json(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True) + "\n"


def fmt(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    return str(value)


# --------------------------------------------------------------------------
# data + forest


def load_dataset(cfg: RunConfig) -> Dataset:
    return load_csv(cfg.dataset_path, cfg.label_column, cfg.raw["missing_tokens"])


def make_split(cfg: RunConfig, ds: Dataset) -> SplitPair:
    s = cfg.raw["split"]
    return stratified_split(ds, s["test_fraction"], s["seed"])


def split_manifest(cfg: RunConfig, split: SplitPair) -> dict:
    return {
        "dataset": cfg.dataset_name,
        "test_fraction": cfg.raw["split"]["test_fraction"],
        "seed": split.seed,
        "train_indices": [int(i) for i in split.train_indices],
        "test_indices": [int(i) for i in split.test_indices],
    }


def restore_split(ds: Dataset, manifest: dict) -> SplitPair:
    try:
        train_idx = np.asarray(manifest["train_indices"], dtype=np.int64)
        test_idx = np.asarray(manifest["test_indices"], dtype=np.int64)
        seed = int(manifest["seed"])
    except (KeyError, TypeError, ValueError) as exc:
        raise CorruptPayload(f"bad split manifest: {exc!r}") from None
    if train_idx.size and train_idx.max() >= ds.n or test_idx.size and test_idx.max() >= ds.n:
        raise CorruptPayload("split manifest does not match the dataset")
    return SplitPair(ds.subset(train_idx), ds.subset(test_idx), seed, train_idx, test_idx)


def train_forest(cfg: RunConfig, split: SplitPair, threads: int = 1) -> TrainedForest:
    return fit_forest(split.train, cfg.forest_params, seed=cfg.raw["forest"]["seed"], threads=threads)


# --------------------------------------------------------------------------
# attribution + selection


@dataclass
class Attributions:
    estimator: str
    train: np.ndarray
    test: np.ndarray


def background_rows(cfg: RunConfig, split: SplitPair) -> np.ndarray:
    size = cfg.raw.get("shapley_background")
    X = split.train.X
    if size is None or size >= X.shape[0]:
        return X
    rng = np.random.default_rng(cfg.raw["split"]["seed"])
    return X[np.sort(rng.choice(X.shape[0], size=size, replace=False))]


def attribute(cfg: RunConfig, forest: TrainedForest, split: SplitPair, estimator: str) -> Attributions:
    bg = background_rows(cfg, split) if estimator == "shapley_oracle" else None
    phi_train, _, _ = attribution_matrix(forest, split.train, estimator, background=bg)
    phi_test, _, _ = attribution_matrix(forest, split.test, estimator, background=bg)
    return Attributions(estimator, phi_train, phi_test)


def select(forest: TrainedForest, split: SplitPair, sel: SelectionConfig, phi_train: np.ndarray,
           dist: np.ndarray | None = None) -> PrototypeSet:
    ctx = build_context(forest, split.train, alike=sel.alike, phi=phi_train, dist=dist)
    return select_prototypes(ctx, sel)


# --------------------------------------------------------------------------
# explanations


def parse_selector(token: str, split: SplitPair) -> list[tuple[str, int]]:
    token = token.strip()
    part, _, idx = token.partition(":")
    if part not in ("test", "train") or not idx:
        raise UnknownInstanceId(f"bad instance selector {token!r}; use test:<i>, train:<i> or test:all")
    size = split.test.n if part == "test" else split.train.n
    if idx == "all":
        return [(part, i) for i in range(size)]
    try:
        i = int(idx)
    except ValueError:
        raise UnknownInstanceId(f"bad instance index in {token!r}") from None
    if not 0 <= i < size:
        raise UnknownInstanceId(f"{token!r} outside the {part} split of size {size}")
    return [(part, i)]


def explain_records(forest: TrainedForest, split: SplitPair, prototypes: PrototypeSet, attributions: Attributions,
                    alike: AlikeConfig, selectors: list[str]) -> list[dict]:
    picks = [sel for token in selectors for sel in parse_selector(token, split)]
    records = []
    if not picks:
        return records
    rows = np.vstack([(split.test if part == "test" else split.train).X[i] for part, i in picks])
    phis = np.vstack([(attributions.test if part == "test" else attributions.train)[i] for part, i in picks])
    pos, dists = nearest_prototypes(prototypes, forest, split.train, rows)
    predicted = forest.predict(rows)
    for k, (part, i) in enumerate(picks):
        proto = prototypes.indices[int(pos[k])]
        mask, weights = alike_mask(phis[k], attributions.train[proto], alike)
        source = (split.test_indices if part == "test" else split.train_indices)[i]
        records.append({
            "instance_id": f"{part}:{i}",
            "source_row": int(source),
            "prototype_id": int(proto),
            "prototype_label": int(prototypes.labels[int(pos[k])]),
            "predicted_class": int(predicted[k]),
            "distance": float(dists[k]),
            "weights": [float(w) for w in weights],
            "mask": [int(b) for b in mask],
            "operator": alike.operator,
            "strategy": alike.mask_strategy,
            "estimator": attributions.estimator,
        })
    return records


def test_masks(forest: TrainedForest, split: SplitPair, prototypes: PrototypeSet, attributions: Attributions,
               alike: AlikeConfig) -> np.ndarray:
    pos, _ = nearest_prototypes(prototypes, forest, split.train, split.test.X)
    proto_rows = np.asarray(prototypes.indices)[pos]
    return np.vstack([
        alike_mask(attributions.test[i], attributions.train[proto_rows[i]], alike)[0]
        for i in range(split.test.n)
    ])


# --------------------------------------------------------------------------
# evaluation


def evaluate(forest: TrainedForest, split: SplitPair, prototypes: PrototypeSet, attributions: Attributions,
             alike: AlikeConfig) -> dict:
    reports = [fidelity(prototypes, forest, split.train, split.test)]
    reports.extend(evaluate_baselines(forest, split.train, split.test))
    stats = mask_statistics(test_masks(forest, split, prototypes, attributions, alike))
    return {
        "fidelity": [r.to_dict() for r in reports],
        "mask_statistics": stats.to_dict(),
        "feature_names": list(split.train.feature_names),
    }


def evaluation_csv(doc: dict) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(EVALUATION_COLUMNS)
    for r in doc["fidelity"]:
        writer.writerow([fmt(r[c]) for c in EVALUATION_COLUMNS])
    return buf.getvalue()


# --------------------------------------------------------------------------
# sweep


@dataclass(frozen=True)
class Cell:
    algorithm: str
    estimator: str
    operator: str
    ignore_direction: bool
    normalize: bool
    mask_strategy: str
    beta: float

    @property
    def key(self) -> str:
        return "|".join(fmt(v) for v in (self.algorithm, self.estimator, self.operator, self.ignore_direction,
                                         self.normalize, self.mask_strategy, float(self.beta)))

    @property
    def filename(self) -> str:
        return hashlib.sha1(self.key.encode()).hexdigest()[:16] + ".json"


def sweep_cells(cfg: RunConfig) -> list[Cell]:
    g = cfg.raw["sweep"]
    return [
        Cell(a, e, o, i, n, m, float(b))
        for a, e, o, i, n, m, b in itertools.product(
            g["algorithms"], g["estimators"], g["operators"], g["ignore_direction"],
            g["normalize"], g["mask_strategies"], g["betas"],
        )
    ]


def run_cell(cfg: RunConfig, cell: Cell, forest: TrainedForest, split: SplitPair, attributions: Attributions,
             dist: np.ndarray) -> dict:
    alike = AlikeConfig(cell.ignore_direction, cell.normalize, cell.operator, cell.mask_strategy)
    sel = cfg.selection(algorithm=cell.algorithm, beta=cell.beta, alike=alike)
    prototypes = select(forest, split, sel, attributions.train, dist=dist)
    report = fidelity(prototypes, forest, split.train, split.test)
    masks = test_masks(forest, split, prototypes, attributions, alike)
    return {
        "dataset": cfg.dataset_name,
        "algorithm": cell.algorithm,
        "estimator": cell.estimator,
        "operator": cell.operator,
        "ignore_direction": cell.ignore_direction,
        "normalize": cell.normalize,
        "mask_strategy": cell.mask_strategy,
        "beta": float(cell.beta),
        "n_prototypes": len(prototypes),
        "fidelity": float(report.fidelity),
        "mean_mask_len": float(masks.sum(axis=1).mean()),
    }


def _read_cell(path: Path, cell: Cell) -> dict | None:
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError):
        return None
    if doc.get("key") != cell.key or set(doc.get("row", {})) != set(SWEEP_COLUMNS):
        return None
    return doc["row"]


def wilcoxon_summary(rows: list[dict], pairing: str) -> dict:
    """Best beta=0 fidelity vs best beta>0 fidelity per pairing group."""
    groups: dict[tuple, dict[str, float]] = {}
    for r in rows:
        key = (r["dataset"],) if pairing == "dataset" else (r["dataset"], r["algorithm"], r["estimator"])
        side = "raw" if r["beta"] == 0 else "augmented"
        g = groups.setdefault(key, {})
        g[side] = max(g.get(side, -1.0), r["fidelity"])
    pairs = [(g["augmented"], g["raw"]) for _, g in sorted(groups.items()) if "raw" in g and "augmented" in g]
    summary = {
        "pairing": pairing,
        "groups": [
            {"key": list(k), "raw": g.get("raw"), "augmented": g.get("augmented")}
            for k, g in sorted(groups.items())
        ],
        "n_pairs": len(pairs),
    }
    if not pairs:
        summary["status"] = "no_pairs"
        return summary
    try:
        res = wilcoxon_signed_rank(pairs)
    except AllZeroDifferences:
        summary["status"] = "all_zero_differences"
        return summary
    summary.update(status="ok", statistic=res.statistic, pvalue=res.pvalue, w_plus=res.w_plus,
                   w_minus=res.w_minus, n_nonzero=res.n, method=res.method)
    return summary


def run_sweep(cfg: RunConfig, threads: int = 1, max_cells: int | None = None) -> tuple[list[dict], dict]:
    """Evaluate every grid cell, reusing per-cell result files already present
    under ``<out>/sweep_cells``. ``max_cells`` caps how many new cells are
    computed (used to simulate interruption)."""
    out = cfg.output_dir
    cell_dir = out / "sweep_cells"
    cell_dir.mkdir(parents=True, exist_ok=True)
    ds = load_dataset(cfg)
    split = make_split(cfg, ds)
    forest = train_forest(cfg, split, threads)
    cells = sweep_cells(cfg)

    rows: dict[str, dict] = {}
    todo = []
    for cell in cells:
        cached = _read_cell(cell_dir / cell.filename, cell)
        if cached is not None:
            rows[cell.key] = cached
        else:
            todo.append(cell)
    if max_cells is not None:
        todo = todo[:max_cells]
    log.info("sweep: %d cells, %d cached, %d to run", len(cells), len(rows), len(todo))

    if todo:
        dist = distance_matrix(forest, split.train)
        attributions = {e: attribute(cfg, forest, split, e) for e in sorted({c.estimator for c in todo})}

        def job(cell: Cell) -> tuple[Cell, dict]:
            row = run_cell(cfg, cell, forest, split, attributions[cell.estimator], dist)
            (cell_dir / cell.filename).write_text(dump_json({"key": cell.key, "row": row}), encoding="utf-8")
            return cell, row

        if threads > 1:
            with ThreadPoolExecutor(max_workers=threads) as pool:
                results = list(pool.map(job, todo))
        else:
            results = [job(c) for c in todo]
        for cell, row in results:
            rows[cell.key] = row

    ordered = [rows[c.key] for c in cells if c.key in rows]
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(SWEEP_COLUMNS)
    for r in ordered:
        writer.writerow([fmt(r[c]) for c in SWEEP_COLUMNS])
    (out / "sweep.csv").write_text(buf.getvalue(), encoding="utf-8")
    summary = wilcoxon_summary(ordered, cfg.raw["sweep"]["pairing"])
    summary["complete"] = len(ordered) == len(cells)
    (out / "sweep_summary.json").write_text(dump_json(summary), encoding="utf-8")
    return ordered, summary
