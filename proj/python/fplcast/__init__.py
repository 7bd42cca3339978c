"""Fantasy points forecasting: ridge, boosted trees and a 1D CNN over
per-gameweek player statistics."""

from ._core import (
    FplcastError,
    GbmHyperparams,
    GbmModel,
    RidgeModel,
    average_ranks,
    canonicalize_name,
    fit_gbm,
    fit_ridge,
    fuzzy_match,
    mse,
    run_cli,
    shapley_values,
    spearman_tied,
    synthetic_csv,
    token_sort_similarity,
)

__all__ = [
    "FplcastError",
    "GbmHyperparams",
    "GbmModel",
    "RidgeModel",
    "average_ranks",
    "canonicalize_name",
    "fit_gbm",
    "fit_ridge",
    "fuzzy_match",
    "mse",
    "run_cli",
    "shapley_values",
    "spearman_tied",
    "synthetic_csv",
    "token_sort_similarity",
]
