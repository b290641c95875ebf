"""Censored survival models for churn prediction."""

import json as _json

from ._survivalkit import (
    CoxModel,
    ErrorCurve,
    FeatureImportance,
    SurvivalCurve,
    SurvivalDataset,
    SurvivalForest,
    SurvivalkitError,
    brier_curve,
    default_grid,
    fit_cox,
    fit_forest,
    kaplan_meier,
    median_survival,
    roc_auc,
    variable_importance,
    welch_t_test,
)
from ._survivalkit import sample_survival as _sample_survival


def sample_survival(spec):
    """Sample a dataset from a hazard spec given as a dict or a JSON string."""
    if not isinstance(spec, str):
        spec = _json.dumps(spec)
    return _sample_survival(spec)


__all__ = [
    "CoxModel",
    "ErrorCurve",
    "FeatureImportance",
    "SurvivalCurve",
    "SurvivalDataset",
    "SurvivalForest",
    "SurvivalkitError",
    "brier_curve",
    "default_grid",
    "fit_cox",
    "fit_forest",
    "kaplan_meier",
    "median_survival",
    "roc_auc",
    "sample_survival",
    "variable_importance",
    "welch_t_test",
]
