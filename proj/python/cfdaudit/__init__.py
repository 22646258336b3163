"""Counterfactual-dataset search for label-bias audits of ReLU classifiers."""

import json

from ._cfdaudit import (
    ConfigError,
    Dataset,
    DatasetError,
    Model,
    SingularMatrixError,
    combine,
    exhaustive_oracle,
    influence_weights,
    init_model,
    lr_scores,
    ridge_solve,
    similarity,
    synthetic_dataset,
    train,
)
from ._cfdaudit import run_audit as _run_audit


def run_audit(dataset, hidden, **kwargs):
    """Runs the audit and returns one result dict per test input."""
    return [json.loads(r) for r in _run_audit(dataset, hidden, **kwargs)]


__all__ = [
    "ConfigError",
    "Dataset",
    "DatasetError",
    "Model",
    "SingularMatrixError",
    "combine",
    "exhaustive_oracle",
    "influence_weights",
    "init_model",
    "lr_scores",
    "ridge_solve",
    "run_audit",
    "similarity",
    "synthetic_dataset",
    "train",
]
