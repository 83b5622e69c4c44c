"""Symmetric regression algorithms used inside the score functions.

Every regressor here is invariant to permutations of its training rows.
The coverage guarantees of all downstream prediction sets rest on that
symmetry, so tie handling must never fall back to row order.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Union

import numpy as np

from .data_model import Dataset
from .errors import InvalidConfigurationError

__all__ = [
    "RegressorSpec",
    "Standardizer",
    "LinearModel",
    "KnnModel",
    "FittedModel",
    "parse_regressor",
    "fit",
    "fit_min_norm_ols",
    "fit_ridge",
    "fit_knn",
]

REGRESSOR_KINDS = ("ols", "ridge", "knn")

# Singular values below RCOND * sigma_max are treated as zero, which keeps the
# pseudoinverse stable in the underdetermined regime (p >= training size).
RCOND = 1e-10


@dataclass(frozen=True)
class RegressorSpec:
    """Which symmetric algorithm to fit, with its parameters.

    ``standardize`` optionally z-scores the feature columns using training
    statistics (column statistics are permutation-invariant, so symmetry is
    preserved).
    """

    kind: str
    ridge_lambda: float = 0.0
    knn_k: int = 1
    standardize: bool = False

    def __post_init__(self):
        if self.kind not in REGRESSOR_KINDS:
            raise InvalidConfigurationError(
                f"unknown regressor {self.kind!r}; choose from {REGRESSOR_KINDS}"
            )
        if self.kind == "ridge" and self.ridge_lambda < 0:
            raise InvalidConfigurationError("ridge penalty must be nonnegative")
        if self.kind == "knn" and self.knn_k < 1:
            raise InvalidConfigurationError("knn neighbor count must be at least 1")


def parse_regressor(text: str) -> RegressorSpec:
    """Parse a CLI regressor string: ``ols``, ``ridge:0.2`` or ``knn:25``."""
    name, _, arg = text.strip().partition(":")
    name = name.strip().lower()
    if name == "ols":
        if arg:
            raise InvalidConfigurationError("ols takes no parameter")
        return RegressorSpec("ols")
    if name == "ridge":
        try:
            lam = float(arg) if arg else 0.0
        except ValueError:
            raise InvalidConfigurationError(f"bad ridge penalty {arg!r}") from None
        return RegressorSpec("ridge", ridge_lambda=lam)
    if name == "knn":
        try:
            k = int(arg)
        except ValueError:
            raise InvalidConfigurationError(f"bad knn neighbor count {arg!r}") from None
        return RegressorSpec("knn", knn_k=k)
    raise InvalidConfigurationError(f"unknown regressor {text!r}")


@dataclass(frozen=True)
class Standardizer:
    """Column-wise z-scoring transform frozen at fit time."""

    mean: np.ndarray
    scale: np.ndarray

    @classmethod
    def from_features(cls, features: np.ndarray) -> "Standardizer":
        mean = features.mean(axis=0)
        scale = features.std(axis=0)
        scale = np.where(scale > 0, scale, 1.0)
        return cls(mean, scale)

    def transform(self, features: np.ndarray) -> np.ndarray:
        return (features - self.mean) / self.scale


def _as_matrix(x) -> np.ndarray:
    arr = np.asarray(x, dtype=float)
    if arr.ndim == 1:
        arr = arr[None, :]
    return arr


@dataclass(frozen=True)
class LinearModel:
    """Linear predictor x -> x @ coef (no intercept term)."""

    coef: np.ndarray
    standardizer: Standardizer | None = None

    def predict(self, x) -> np.ndarray:
        mat = _as_matrix(x)
        if self.standardizer is not None:
            mat = self.standardizer.transform(mat)
        return mat @ self.coef


@dataclass(frozen=True)
class KnnModel:
    """Mean response of the k nearest training rows by Euclidean distance.

    Distance ties break on smaller response value, then on lexicographic
    feature comparison. Row indices are never consulted, so predictions are
    invariant to permutations of the training set.
    """

    train_features: np.ndarray
    train_responses: np.ndarray
    k: int
    standardizer: Standardizer | None = None

    def predict(self, x) -> np.ndarray:
        mat = _as_matrix(x)
        if self.standardizer is not None:
            mat = self.standardizer.transform(mat)
        feats = self.train_features
        resp = self.train_responses
        p = feats.shape[1]
        out = np.empty(mat.shape[0])
        for i, row in enumerate(mat):
            dist = np.sqrt(((feats - row) ** 2).sum(axis=1))
            # np.lexsort sorts by the last key first: distance, then response,
            # then features from column 0 outward.
            keys = [feats[:, j] for j in range(p - 1, -1, -1)] + [resp, dist]
            order = np.lexsort(keys)
            out[i] = resp[order[: self.k]].mean()
        return out


FittedModel = Union[LinearModel, KnnModel]


def fit_min_norm_ols(train: Dataset, standardize: bool = False) -> LinearModel:
    """Least squares via the Moore-Penrose pseudoinverse.

    For full-column-rank features this is ordinary least squares; otherwise it
    returns the minimum-l2-norm solution of the underdetermined system.
    """
    std = Standardizer.from_features(train.features) if standardize else None
    feats = std.transform(train.features) if std else train.features
    coef, *_ = np.linalg.lstsq(feats, train.responses, rcond=RCOND)
    return LinearModel(coef, std)


def fit_ridge(train: Dataset, ridge_lambda: float, standardize: bool = False) -> LinearModel:
    """Ridge regression coef = (X'X + lambda I)^-1 X'y.

    At lambda = 0 this falls back to the minimum-norm least squares solution,
    which coincides with the normal-equation solve whenever X has full column
    rank.
    """
    if ridge_lambda < 0:
        raise InvalidConfigurationError("ridge penalty must be nonnegative")
    if ridge_lambda == 0.0:
        return fit_min_norm_ols(train, standardize=standardize)
    std = Standardizer.from_features(train.features) if standardize else None
    feats = std.transform(train.features) if std else train.features
    p = feats.shape[1]
    gram = feats.T @ feats + ridge_lambda * np.eye(p)
    coef = np.linalg.solve(gram, feats.T @ train.responses)
    return LinearModel(coef, std)


def fit_knn(train: Dataset, k: int, standardize: bool = False) -> KnnModel:
    """k-nearest-neighbor mean with data-valued tie-breaking."""
    if k < 1:
        raise InvalidConfigurationError("knn neighbor count must be at least 1")
    if k > train.n:
        raise InvalidConfigurationError(
            f"knn neighbor count {k} exceeds the training size {train.n}"
        )
    std = Standardizer.from_features(train.features) if standardize else None
    feats = std.transform(train.features) if std else train.features
    return KnnModel(feats, train.responses, k, std)


def fit(spec: RegressorSpec, train: Dataset) -> FittedModel:
    """Fit the regressor described by ``spec`` on ``train``."""
    if spec.kind == "ols":
        return fit_min_norm_ols(train, standardize=spec.standardize)
    if spec.kind == "ridge":
        return fit_ridge(train, spec.ridge_lambda, standardize=spec.standardize)
    return fit_knn(train, spec.knn_k, standardize=spec.standardize)
