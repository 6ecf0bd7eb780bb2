"""Prototype explanations for tree ensembles with feature-importance-aware
selection and alike-part masks."""

from protolens.alike import AlikeConfig, identify_alike_parts
from protolens.attribution import (
    AttributionVector,
    attribution_matrix,
    saabas_attribution,
    shapley_bruteforce,
)
from protolens.data import (
    MISSING,
    Dataset,
    SplitPair,
    load_blobs2,
    load_csv,
    make_blobs2,
    mean_impute,
    stratified_split,
    write_csv,
)
from protolens.errors import ProtolensError
from protolens.forest import ForestParams, TrainedForest, fit_forest, load_forest, save_forest
from protolens.proximity import distance_matrix, tree_distance
from protolens.selection import PrototypeSet, SelectionConfig, build_context, select_prototypes
from protolens.surrogate import fidelity, surrogate_predict

__version__ = "0.1.0"

__all__ = [
    "AlikeConfig",
    "AttributionVector",
    "Dataset",
    "ForestParams",
    "MISSING",
    "PrototypeSet",
    "ProtolensError",
    "SelectionConfig",
    "SplitPair",
    "TrainedForest",
    "attribution_matrix",
    "build_context",
    "distance_matrix",
    "fidelity",
    "fit_forest",
    "identify_alike_parts",
    "load_blobs2",
    "load_csv",
    "load_forest",
    "make_blobs2",
    "mean_impute",
    "saabas_attribution",
    "save_forest",
    "select_prototypes",
    "shapley_bruteforce",
    "stratified_split",
    "surrogate_predict",
    "tree_distance",
    "write_csv",
]
