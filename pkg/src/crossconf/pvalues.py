"""Fold-wise conformal p-values, deterministic and randomized.

The deterministic p-value of a candidate test score against a fold of m
scores is the rank statistic (1 + #{i : s <= S_i}) / (m + 1). The randomized
variant replaces the weak-inequality count with a tau-weighted split of the
ties, using one uniform tau shared by all folds of a prediction task; it is
never larger than the deterministic value.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data_model import FoldAssignment, RandomDraws
from .errors import InvalidConfigurationError
from .scores import CvScores, fold_predictions

__all__ = [
    "PValueVector",
    "FoldWeights",
    "fold_pvalue",
    "fold_pvalue_randomized",
    "all_fold_pvalues",
    "fold_weights",
]


@dataclass(frozen=True)
class PValueVector:
    """Ordered fold p-values for one candidate response.

    The order is the fold-index order of the assignment that produced them,
    which is already randomized; order matters to the asymmetric combination
    rules downstream.
    """

    values: np.ndarray
    fold_sizes: np.ndarray
    randomized: bool = False
    tau: float | None = None

    def __post_init__(self):
        values = np.array(self.values, dtype=float)
        sizes = np.array(self.fold_sizes, dtype=int)
        values.setflags(write=False)
        sizes.setflags(write=False)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "fold_sizes", sizes)
        if values.ndim != 1 or sizes.shape != values.shape:
            raise InvalidConfigurationError("values and fold_sizes must be 1-D and aligned")
        if values.size < 1:
            raise InvalidConfigurationError("need at least one fold p-value")
        if np.any(values <= 0.0) or np.any(values > 1.0):
            raise InvalidConfigurationError("p-values must lie in (0, 1]")
        if self.randomized and self.tau is None:
            raise InvalidConfigurationError("randomized p-values record their tau")

    @property
    def n_folds(self) -> int:
        return self.values.size


@dataclass(frozen=True)
class FoldWeights:
    """Positive fold weights (m_k + 1) / (n + K); they sum to one."""

    weights: np.ndarray

    def __post_init__(self):
        weights = np.array(self.weights, dtype=float)
        weights.setflags(write=False)
        object.__setattr__(self, "weights", weights)
        if np.any(weights <= 0):
            raise InvalidConfigurationError("fold weights must be positive")
        if abs(weights.sum() - 1.0) > 1e-12:
            raise InvalidConfigurationError("fold weights must sum to one")


def fold_pvalue(test_s: float, fold_scores) -> float:
    """Rank-based p-value (1 + #{i : test_s <= S_i}) / (m + 1)."""
    scores = np.asarray(fold_scores, dtype=float)
    if scores.size == 0:
        raise InvalidConfigurationError("fold has no scores")
    if not np.isfinite(scores).all():
        raise InvalidConfigurationError("fold scores must be finite")
    count = int(np.count_nonzero(test_s <= scores))
    return (1 + count) / (scores.size + 1)


def fold_pvalue_randomized(test_s: float, fold_scores, tau: float) -> float:
    """Randomized p-value (tau + tau * #ties + #{test_s < S_i}) / (m + 1).

    Ties are detected by exact floating-point equality: with continuous scores
    they have measure zero, and an approximate-equality window would silently
    inflate the tau-weighted mass.
    """
    if not 0.0 < tau < 1.0:
        raise InvalidConfigurationError("tau must lie strictly inside (0, 1)")
    scores = np.asarray(fold_scores, dtype=float)
    if scores.size == 0:
        raise InvalidConfigurationError("fold has no scores")
    if not np.isfinite(scores).all():
        raise InvalidConfigurationError("fold scores must be finite")
    ties = int(np.count_nonzero(scores == test_s))
    strict = int(np.count_nonzero(test_s < scores))
    return (tau + tau * ties + strict) / (scores.size + 1)


def all_fold_pvalues(
    x,
    y: float,
    cv: CvScores,
    folds: FoldAssignment,
    draws: RandomDraws | None = None,
) -> PValueVector:
    """All K fold p-values of the candidate pair (x, y), in fold-index order.

    Passing ``draws`` switches to randomized p-values with ``draws.tau``
    shared by every fold.
    """
    if cv.n_folds != folds.n_folds:
        raise InvalidConfigurationError(
            f"cv scores carry {cv.n_folds} fold models but the assignment has {folds.n_folds}"
        )
    mu = fold_predictions(cv, x)
    values = np.empty(folds.n_folds)
    for k, members in enumerate(folds.fold_members):
        test_s = abs(float(y) - mu[k])
        scores_k = cv.scores[members]
        if draws is None:
            values[k] = fold_pvalue(test_s, scores_k)
        else:
            values[k] = fold_pvalue_randomized(test_s, scores_k, draws.tau)
    return PValueVector(
        values,
        folds.fold_sizes,
        randomized=draws is not None,
        tau=None if draws is None else draws.tau,
    )


def fold_weights(fold_sizes) -> FoldWeights:
    """Weights (m_k + 1) / (n + K); equal sizes give exactly 1/K each."""
    sizes = np.asarray(fold_sizes, dtype=int)
    if sizes.size < 1 or np.any(sizes < 1):
        raise InvalidConfigurationError("fold sizes must be positive")
    n = int(sizes.sum())
    k = sizes.size
    return FoldWeights((sizes + 1) / (n + k))
