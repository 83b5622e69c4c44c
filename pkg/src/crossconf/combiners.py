"""Combination statistics and thresholds defining each prediction-set variant.

A candidate response belongs to a variant's set when the combined statistic of
its fold p-values exceeds the variant's threshold. The combining rules are:

* ``mod``: plain mean of the K p-values.
* ``e-mod``: minimum over l of the mean of the first l p-values; valid for
  exchangeable p-values and never larger than the plain mean.
* ``u-mod``: mean scaled by the randomization factor 1/(2 - U).
* ``eu-mod``: minimum of the randomized first p-value P_1/(2 - U) and the
  e-mod statistic.

All four guarantee marginal coverage of at least 1 - 2*alpha at threshold
alpha. Replacing the threshold by alpha' = alpha + (1 - alpha)(K - 1)/(K + n)
turns them into shrunken versions of the plain cross-validation conformal set.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .data_model import RandomDraws
from .errors import InvalidConfigurationError

__all__ = [
    "COMBINER_KINDS",
    "CombinerSpec",
    "MembershipVerdict",
    "CoverageBounds",
    "stat_mod",
    "stat_emod",
    "stat_umod",
    "stat_eumod",
    "stat_weighted_mean",
    "alpha_prime",
    "coverage_bounds",
    "evaluate_combiner",
]

COMBINER_KINDS = ("mod", "e-mod", "u-mod", "eu-mod")


@dataclass(frozen=True)
class CombinerSpec:
    """Variant choice plus its threshold (alpha or alpha').

    The randomized kinds require a U draw; ``mod`` and ``e-mod`` never consume
    one.
    """

    kind: str
    threshold: float
    draws: RandomDraws | None = None

    def __post_init__(self):
        if self.kind not in COMBINER_KINDS:
            raise InvalidConfigurationError(
                f"unknown combiner {self.kind!r}; choose from {COMBINER_KINDS}"
            )
        if not 0.0 < self.threshold < 1.0:
            raise InvalidConfigurationError("threshold must lie strictly inside (0, 1)")
        if self.kind in ("u-mod", "eu-mod") and self.draws is None:
            raise InvalidConfigurationError(f"{self.kind} requires a U draw")


@dataclass(frozen=True)
class MembershipVerdict:
    statistic: float
    included: bool


@dataclass(frozen=True)
class CoverageBounds:
    """Marginal coverage lower bounds for the plain cross-validation set."""

    bound_small_k: float
    bound_large_k: float
    combined: float


def _values(p) -> np.ndarray:
    values = np.asarray(getattr(p, "values", p), dtype=float)
    if values.ndim != 1 or values.size < 1:
        raise InvalidConfigurationError("need a nonempty 1-D p-value vector")
    return values


def _prefix_means(values: np.ndarray) -> np.ndarray:
    return np.cumsum(values) / np.arange(1, values.size + 1)


def stat_mod(p) -> float:
    """Arithmetic mean of the fold p-values."""
    return float(_prefix_means(_values(p))[-1])


def stat_emod(p) -> float:
    """Minimum over l of the mean of the first l p-values, in vector order."""
    return float(_prefix_means(_values(p)).min())


def stat_umod(p, draws: RandomDraws) -> float:
    """Mean p-value scaled by 1/(2 - U)."""
    if draws is None:
        raise InvalidConfigurationError("u-mod requires a U draw")
    return stat_mod(p) / (2.0 - draws.u)


def stat_eumod(p, draws: RandomDraws) -> float:
    """min(P_1 / (2 - U), running-minimum prefix mean)."""
    if draws is None:
        raise InvalidConfigurationError("eu-mod requires a U draw")
    values = _values(p)
    return min(float(values[0]) / (2.0 - draws.u), stat_emod(values))


def stat_weighted_mean(p, weights) -> float:
    """Weighted average of the p-values; used by the cross-set dual form."""
    values = _values(p)
    w = np.asarray(getattr(weights, "weights", weights), dtype=float)
    if w.shape != values.shape:
        raise InvalidConfigurationError("weights must align with the p-value vector")
    return float(values @ w)


def alpha_prime(alpha: float, k: int, n: int) -> float:
    """Inflated threshold alpha + (1 - alpha)(K - 1)/(K + n).

    At this threshold the mean-p-value set coincides with the plain
    cross-validation conformal set at level alpha.
    """
    if not 0.0 < alpha < 1.0:
        raise InvalidConfigurationError("alpha must lie strictly inside (0, 1)")
    if k < 1:
        raise InvalidConfigurationError("fold count must be at least 1")
    if n < k:
        raise InvalidConfigurationError("need at least as many points as folds")
    return alpha + (1.0 - alpha) * (k - 1) / (k + n)


def coverage_bounds(alpha: float, k: int, n: int) -> CoverageBounds:
    """Both coverage lower bounds for the plain cross set, and their maximum.

    The first bound is tight for small K, the second for K close to n; the
    maximum always dominates 1 - 2*alpha - 2/sqrt(n).
    """
    if not 0.0 < alpha < 1.0:
        raise InvalidConfigurationError("alpha must lie strictly inside (0, 1)")
    if k < 1 or k > n:
        raise InvalidConfigurationError("need 1 <= K <= n")
    small = 1.0 - 2.0 * alpha - 2.0 * (1.0 - alpha) * (1.0 - 1.0 / k) / (n / k + 1.0)
    large = 1.0 - 2.0 * alpha - 2.0 * (1.0 - alpha) * (1.0 - k / n) / (k + 1.0)
    combined = max(small, large)
    floor = 1.0 - 2.0 * alpha - 2.0 / math.sqrt(n)
    if combined < floor - 1e-12:
        raise AssertionError(
            f"combined bound {combined} fell below the 1 - 2a - 2/sqrt(n) floor {floor}"
        )
    return CoverageBounds(small, large, combined)


def evaluate_combiner(spec: CombinerSpec, p) -> MembershipVerdict:
    """Combined statistic of ``p`` under ``spec`` and its threshold verdict."""
    if spec.kind == "mod":
        stat = stat_mod(p)
    elif spec.kind == "e-mod":
        stat = stat_emod(p)
    elif spec.kind == "u-mod":
        stat = stat_umod(p, spec.draws)
    else:
        stat = stat_eumod(p, spec.draws)
    return MembershipVerdict(stat, stat > spec.threshold)
