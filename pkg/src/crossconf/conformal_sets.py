"""Explicit prediction sets on the response line.

With the residual score every membership statistic is a step function of the
candidate response y: each fold indicator flips only where |y - mu_k| crosses
one of that fold's scores, i.e. at y = mu_k +/- S_i. The endpoint scan
evaluates the statistic once per piece (every breakpoint, every gap midpoint,
and the two unbounded rays) and recovers the set exactly as a finite union of
closed intervals. No grid approximation is involved.

Membership uses a strict inequality against the threshold while the rank
counts use weak inequalities, so breakpoints themselves can belong to a set;
they are evaluated directly and intervals are closed.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from .combiners import alpha_prime
from .data_model import Dataset, FoldAssignment, RandomDraws, RandomSource
from .errors import InvalidConfigurationError
from .pvalues import fold_weights
from .regression import FittedModel, RegressorSpec, fit
from .scores import CvScores, ScoreFunctionSpec, compute_cv_scores, fold_predictions

__all__ = [
    "FOLD_METHODS",
    "ALL_METHODS",
    "InformativenessWarning",
    "PredictionSet",
    "SplitState",
    "is_subset",
    "empirical_quantile",
    "split_conformal",
    "split_set",
    "split_set_from_state",
    "split_pvalue",
    "endpoint_scan",
    "candidate_endpoints",
    "cross_membership",
    "cross_membership_pvalue_form",
    "cross_set_direct",
    "cross_set_from_scores",
    "variant_set",
    "variant_set_from_scores",
    "fold_method_sets",
    "cv_plus_set",
    "cv_plus_from_scores",
]

INF = float("inf")

# Methods built from fold p-values; the -cross forms use the inflated
# threshold alpha' and shrink the plain cross-validation conformal set.
FOLD_METHODS = ("mod", "e-mod", "u-mod", "eu-mod", "cross", "e-cross", "u-cross", "eu-cross")
ALL_METHODS = FOLD_METHODS + ("split", "cv+")

_DRAW_METHODS = frozenset({"u-mod", "eu-mod", "u-cross", "eu-cross"})
_EXCHANGEABLE_CROSS = frozenset({"e-cross", "eu-cross"})


class InformativenessWarning(UserWarning):
    """The threshold cannot exclude any response value; sets may span the line."""


@dataclass(frozen=True)
class PredictionSet:
    """Finite union of disjoint closed intervals, sorted by lower endpoint.

    Endpoints may be -inf/+inf. ``hulled`` marks a set that was collapsed to
    its convex hull, in which case it holds exactly one interval.
    """

    intervals: tuple[tuple[float, float], ...]
    hulled: bool = False

    def __post_init__(self):
        ivs = tuple((float(lo), float(hi)) for lo, hi in self.intervals)
        object.__setattr__(self, "intervals", ivs)
        prev_hi = -INF
        first = True
        for lo, hi in ivs:
            if math.isnan(lo) or math.isnan(hi) or lo > hi:
                raise InvalidConfigurationError(f"bad interval [{lo}, {hi}]")
            if not first and lo <= prev_hi:
                raise InvalidConfigurationError("intervals must be sorted and disjoint")
            prev_hi = hi
            first = False
        if self.hulled and len(ivs) != 1:
            raise InvalidConfigurationError("a hulled set holds exactly one interval")

    @classmethod
    def from_raw(cls, pairs, hulled: bool = False) -> "PredictionSet":
        """Normalize arbitrary closed intervals: sort and merge any that overlap
        or touch at an endpoint."""
        cleaned = sorted((float(lo), float(hi)) for lo, hi in pairs)
        merged: list[tuple[float, float]] = []
        for lo, hi in cleaned:
            if merged and lo <= merged[-1][1]:
                merged[-1] = (merged[-1][0], max(merged[-1][1], hi))
            else:
                merged.append((lo, hi))
        return cls(tuple(merged), hulled=hulled)

    @property
    def n_components(self) -> int:
        return len(self.intervals)

    @property
    def is_empty(self) -> bool:
        return not self.intervals

    @property
    def is_whole_line(self) -> bool:
        return self.intervals == ((-INF, INF),)

    @property
    def width(self) -> float:
        """Total Lebesgue measure; +inf if any interval is unbounded."""
        total = 0.0
        for lo, hi in self.intervals:
            total += hi - lo
        return total

    def contains(self, y: float) -> bool:
        return any(lo <= y <= hi for lo, hi in self.intervals)

    def contains_many(self, ys) -> np.ndarray:
        arr = np.asarray(ys, dtype=float)
        mask = np.zeros(arr.shape, dtype=bool)
        for lo, hi in self.intervals:
            mask |= (arr >= lo) & (arr <= hi)
        return mask

    def hull(self) -> "PredictionSet":
        """Single interval spanning the extreme endpoints."""
        if not self.intervals:
            return self
        return PredictionSet(((self.intervals[0][0], self.intervals[-1][1]),), hulled=True)

    def to_jsonable(self) -> list:
        out = []
        for lo, hi in self.intervals:
            out.append([
                "-inf" if lo == -INF else lo,
                "inf" if hi == INF else hi,
            ])
        return out


def is_subset(inner: PredictionSet, outer: PredictionSet) -> bool:
    """Exact containment check between two normalized interval unions."""
    for lo, hi in inner.intervals:
        if not any(olo <= lo and hi <= ohi for olo, ohi in outer.intervals):
            return False
    return True


def empirical_quantile(z, gamma: float) -> float:
    """inf{a : (1/n) * #{z_i <= a} >= gamma}, i.e. the ceil(gamma*n)-th order
    statistic; +inf when gamma exceeds one, -inf when gamma is nonpositive.

    A small tolerance absorbs float rounding in gamma*n so that levels which
    are exact in real arithmetic (like 0.8 * (1 + 1/9) on nine points) select
    the intended order statistic.
    """
    arr = np.asarray(z, dtype=float)
    if arr.size == 0:
        raise InvalidConfigurationError("quantile of an empty vector")
    n = arr.size
    target = gamma * n
    tol = 1e-9 * (1.0 + abs(target))
    if target > n + tol:
        return INF
    if gamma <= 0.0:
        return -INF
    k = int(np.ceil(target - tol))
    k = min(max(k, 1), n)
    return float(np.partition(arr, k - 1)[k - 1])


# ---------------------------------------------------------------------------
# Split conformal prediction
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SplitState:
    """Frozen result of one train/calibration split.

    Reusable across any number of test points. ``gamma`` is the calibration
    quantile level (1 - alpha) * (1 + 1/n_cal).
    """

    train_idx: np.ndarray
    cal_idx: np.ndarray
    cal_scores: np.ndarray
    gamma: float
    model: FittedModel


def split_conformal(
    data: Dataset, alpha: float, spec: ScoreFunctionSpec, rng: RandomSource
) -> SplitState:
    """Random 50/50 split; fit on one half, score residuals on the other.

    With an odd number of points the extra one goes to the training half.
    """
    if data.n < 2:
        raise InvalidConfigurationError("split conformal needs at least two points")
    if not 0.0 < alpha < 1.0:
        raise InvalidConfigurationError("alpha must lie strictly inside (0, 1)")
    perm = rng.generator("split").permutation(data.n)
    n_train = (data.n + 1) // 2
    train_idx, cal_idx = perm[:n_train], perm[n_train:]
    model = fit(spec.regressor, data.subset(train_idx))
    preds = model.predict(data.features[cal_idx])
    cal_scores = np.abs(data.responses[cal_idx] - preds)
    gamma = (1.0 - alpha) * (1.0 + 1.0 / cal_idx.size)
    return SplitState(train_idx, cal_idx, cal_scores, gamma, model)


def split_set_from_state(state: SplitState, test_x) -> PredictionSet:
    """Residual-score split interval mu(test_x) +/- calibration quantile."""
    q = empirical_quantile(state.cal_scores, state.gamma)
    mu = float(state.model.predict(np.atleast_2d(np.asarray(test_x, float)))[0])
    if math.isinf(q):
        warnings.warn(
            f"calibration level {state.gamma:.6g} exceeds one; the split set is the whole line",
            InformativenessWarning,
            stacklevel=2,
        )
        return PredictionSet(((-INF, INF),))
    return PredictionSet(((mu - q, mu + q),))


def split_set(
    data: Dataset, test_x, alpha: float, spec: ScoreFunctionSpec, rng: RandomSource
) -> PredictionSet:
    return split_set_from_state(split_conformal(data, alpha, spec, rng), test_x)


def split_pvalue(state: SplitState, test_x, y: float) -> float:
    """Rank p-value of the candidate against the calibration scores."""
    mu = float(state.model.predict(np.atleast_2d(np.asarray(test_x, float)))[0])
    s = abs(float(y) - mu)
    count = int(np.count_nonzero(s <= state.cal_scores))
    return (1 + count) / (state.cal_scores.size + 1)


# ---------------------------------------------------------------------------
# Endpoint scan
# ---------------------------------------------------------------------------

def _pieces(endpoints: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Evaluation points and interval bounds of the 2M+1 constant pieces.

    The pieces are, in order: the ray left of the first breakpoint, then each
    breakpoint alternating with the open gap after it, then the right ray.
    """
    m = endpoints.size
    ys = np.empty(2 * m + 1)
    los = np.empty(2 * m + 1)
    his = np.empty(2 * m + 1)
    ys[0] = endpoints[0] - 1.0
    ys[1::2] = endpoints
    if m > 1:
        ys[2:-1:2] = 0.5 * (endpoints[:-1] + endpoints[1:])
    ys[-1] = endpoints[-1] + 1.0
    los[0] = -INF
    los[1::2] = endpoints
    los[2::2] = endpoints
    his[-1] = INF
    his[1::2] = endpoints
    his[0:-1:2] = endpoints
    return ys, los, his


def _runs(los: np.ndarray, his: np.ndarray, mask: np.ndarray) -> list[tuple[float, float]]:
    out = []
    i = 0
    total = mask.size
    while i < total:
        if mask[i]:
            j = i
            while j + 1 < total and mask[j + 1]:
                j += 1
            out.append((los[i], his[j]))
            i = j + 1
        else:
            i += 1
    return out


def _eval_membership(membership, ys: np.ndarray) -> np.ndarray:
    try:
        out = np.asarray(membership(ys), dtype=bool)
        if out.shape == ys.shape:
            return out
    except (TypeError, ValueError):
        pass
    return np.array([bool(membership(float(y))) for y in ys])


def endpoint_scan(candidate_endpoints, membership) -> PredictionSet:
    """Exact set recovery of a piecewise-constant membership predicate.

    ``membership`` may be vectorized over an array of y values or accept
    scalars; it must be constant between consecutive candidate endpoints and
    on the two outer rays. Breakpoints are evaluated directly.
    """
    endpoints = np.unique(np.asarray(candidate_endpoints, dtype=float))
    if endpoints.size == 0:
        inside = bool(_eval_membership(membership, np.array([0.0]))[0])
        return PredictionSet(((-INF, INF),) if inside else ())
    ys, los, his = _pieces(endpoints)
    mask = _eval_membership(membership, ys)
    return PredictionSet.from_raw(_runs(los, his, mask))


# ---------------------------------------------------------------------------
# Fold-based membership machinery
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class _FoldContext:
    mu: np.ndarray
    sorted_scores: tuple[np.ndarray, ...]
    sizes: np.ndarray
    n_used: int


def _fold_context(cv: CvScores, folds: FoldAssignment, test_x) -> _FoldContext:
    if cv.n_folds != folds.n_folds:
        raise InvalidConfigurationError(
            f"cv scores carry {cv.n_folds} fold models but the assignment has {folds.n_folds}"
        )
    mu = fold_predictions(cv, test_x)
    sorted_scores = tuple(np.sort(cv.scores[m]) for m in folds.fold_members)
    return _FoldContext(mu, sorted_scores, folds.fold_sizes, folds.n_used)


def _candidates(ctx: _FoldContext) -> np.ndarray:
    parts = []
    for k, s in enumerate(ctx.sorted_scores):
        parts.append(ctx.mu[k] - s)
        parts.append(ctx.mu[k] + s)
    return np.unique(np.concatenate(parts))


def candidate_endpoints(cv: CvScores, folds: FoldAssignment, test_x) -> np.ndarray:
    """All breakpoints mu_k +/- S_i of the membership statistics, deduplicated."""
    return _candidates(_fold_context(cv, folds, test_x))


def _counts(ctx: _FoldContext, ys: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Per fold: weak count #{s(y) <= S_i} and strict count #{s(y) < S_i}."""
    n_pts = ys.size
    k_folds = len(ctx.sorted_scores)
    le = np.empty((n_pts, k_folds), dtype=np.int64)
    lt = np.empty((n_pts, k_folds), dtype=np.int64)
    for k, s in enumerate(ctx.sorted_scores):
        t = np.abs(ys - ctx.mu[k])
        le[:, k] = s.size - np.searchsorted(s, t, side="left")
        lt[:, k] = s.size - np.searchsorted(s, t, side="right")
    return le, lt


def _pmatrix(le: np.ndarray, lt: np.ndarray, sizes: np.ndarray, tau: float | None) -> np.ndarray:
    denom = sizes + 1.0
    if tau is None:
        return (1.0 + le) / denom
    return (tau + tau * (le - lt) + lt) / denom


def _stat_rows(P: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Mean and prefix-min mean, from one shared accumulation so that the
    prefix minimum can never exceed the mean by rounding."""
    cummean = np.cumsum(P, axis=1) / np.arange(1, P.shape[1] + 1)
    return cummean[:, -1], cummean.min(axis=1)


def _method_mask(
    method: str,
    threshold: float,
    le: np.ndarray,
    P: np.ndarray,
    mean_stat: np.ndarray,
    emod_stat: np.ndarray,
    weights: np.ndarray,
    n_used: int,
    draws: RandomDraws | None,
) -> np.ndarray:
    if method == "cross":
        return (1.0 + le.sum(axis=1)) / (n_used + 1.0) > threshold
    if method == "mod":
        return mean_stat > threshold
    if method in ("e-mod", "e-cross"):
        return emod_stat > threshold
    if method == "u-mod":
        return mean_stat / (2.0 - draws.u) > threshold
    if method == "u-cross":
        return (P @ weights) / (2.0 - draws.u) > threshold
    if method in ("eu-mod", "eu-cross"):
        return np.minimum(P[:, 0] / (2.0 - draws.u), emod_stat) > threshold
    raise InvalidConfigurationError(f"unknown method {method!r}")


def _warn_uninformative(entries: list[str]) -> None:
    if entries:
        warnings.warn(
            "threshold too small for the fold sizes (1 >= threshold * (m + 1)) for "
            + ", ".join(entries)
            + "; prediction sets may span the whole line",
            InformativenessWarning,
            stacklevel=3,
        )


def fold_method_sets(
    cv: CvScores,
    folds: FoldAssignment,
    test_x,
    alpha: float,
    methods,
    draws: RandomDraws | None = None,
    smoothed: bool = False,
    hull: bool = False,
) -> dict[str, PredictionSet]:
    """Prediction sets of several fold-based methods from one shared scan.

    All requested methods see the same fold models, scores, tau and U, so
    per-candidate containment relations between them hold exactly. ``smoothed``
    switches the fold p-values to their tau-randomized form (requires
    ``draws``); the plain ``cross`` method always uses the pooled rank count.
    """
    methods = list(methods)
    unknown = [m for m in methods if m not in FOLD_METHODS]
    if unknown:
        raise InvalidConfigurationError(f"unknown fold methods: {unknown}")
    if not 0.0 < alpha < 1.0:
        raise InvalidConfigurationError("alpha must lie strictly inside (0, 1)")
    if draws is None and (smoothed or any(m in _DRAW_METHODS for m in methods)):
        raise InvalidConfigurationError(
            "randomized methods and smoothed p-values require a (tau, U) draw"
        )
    sizes = folds.fold_sizes
    if sizes.min() != sizes.max() and any(m in _EXCHANGEABLE_CROSS for m in methods):
        raise InvalidConfigurationError(
            "e-cross and eu-cross need equal fold sizes; with varying sizes only "
            "u-cross keeps its guarantee"
        )
    ctx = _fold_context(cv, folds, test_x)
    ys, los, his = _pieces(_candidates(ctx))
    le, lt = _counts(ctx, ys)
    P = _pmatrix(le, lt, sizes, draws.tau if smoothed else None)
    mean_stat, emod_stat = _stat_rows(P)
    weights = fold_weights(sizes).weights
    ap = alpha_prime(alpha, folds.n_folds, ctx.n_used)
    out: dict[str, PredictionSet] = {}
    uninformative: list[str] = []
    for method in methods:
        threshold = ap if method.endswith("-cross") else alpha
        mask = _method_mask(
            method, threshold, le, P, mean_stat, emod_stat, weights, ctx.n_used, draws
        )
        if method == "cross":
            if 1.0 >= alpha * (ctx.n_used + 1):
                uninformative.append(method)
        elif np.any(1.0 >= threshold * (sizes + 1)):
            uninformative.append(method)
        result = PredictionSet.from_raw(_runs(los, his, mask))
        out[method] = result.hull() if hull else result
    _warn_uninformative(uninformative)
    return out


def cross_membership(cv: CvScores, folds: FoldAssignment, test_x, alpha: float, ys) -> np.ndarray:
    """Pooled rank-count membership of each y: (1 + total count) / (n + 1) > alpha."""
    ctx = _fold_context(cv, folds, test_x)
    arr = np.atleast_1d(np.asarray(ys, dtype=float))
    le, _ = _counts(ctx, arr)
    return (1.0 + le.sum(axis=1)) / (ctx.n_used + 1.0) > alpha


def cross_membership_pvalue_form(
    cv: CvScores, folds: FoldAssignment, test_x, alpha: float, ys
) -> np.ndarray:
    """Dual membership: weighted mean of fold p-values above the inflated
    threshold alpha + (1 - alpha)(K - 1)/(n + K). Equal fold sizes reduce the
    weights to exactly 1/K."""
    ctx = _fold_context(cv, folds, test_x)
    arr = np.atleast_1d(np.asarray(ys, dtype=float))
    le, lt = _counts(ctx, arr)
    P = _pmatrix(le, lt, ctx.sizes, None)
    weights = fold_weights(ctx.sizes).weights
    threshold = alpha + (1.0 - alpha) * (folds.n_folds - 1) / (ctx.n_used + folds.n_folds)
    return P @ weights > threshold


def cross_set_from_scores(
    cv: CvScores, folds: FoldAssignment, test_x, alpha: float, hull: bool = False
) -> PredictionSet:
    return fold_method_sets(cv, folds, test_x, alpha, ["cross"], hull=hull)["cross"]


def cross_set_direct(
    data: Dataset,
    folds: FoldAssignment,
    test_x,
    alpha: float,
    spec: ScoreFunctionSpec,
    hull: bool = False,
) -> PredictionSet:
    """Plain cross-validation conformal set at level alpha (pooled rank form)."""
    cv = compute_cv_scores(data, folds, spec)
    return cross_set_from_scores(cv, folds, test_x, alpha, hull=hull)


def variant_set_from_scores(
    cv: CvScores,
    folds: FoldAssignment,
    test_x,
    combiner,
    smoothed: bool = False,
    hull: bool = False,
) -> PredictionSet:
    """Set {y : combined statistic of the fold p-values at y > threshold}.

    The caller owns the threshold semantics; note that the asymmetric kinds
    (e-mod, eu-mod) need exchangeable fold positions, which requires equal
    fold sizes or randomly placed larger folds.
    """
    if smoothed and combiner.draws is None:
        raise InvalidConfigurationError("smoothed p-values require a (tau, U) draw")
    ctx = _fold_context(cv, folds, test_x)
    ys, los, his = _pieces(_candidates(ctx))
    le, lt = _counts(ctx, ys)
    P = _pmatrix(le, lt, ctx.sizes, combiner.draws.tau if smoothed else None)
    mean_stat, emod_stat = _stat_rows(P)
    weights = fold_weights(ctx.sizes).weights
    mask = _method_mask(
        combiner.kind, combiner.threshold, le, P, mean_stat, emod_stat,
        weights, ctx.n_used, combiner.draws,
    )
    if np.any(1.0 >= combiner.threshold * (ctx.sizes + 1)):
        _warn_uninformative([combiner.kind])
    result = PredictionSet.from_raw(_runs(los, his, mask))
    return result.hull() if hull else result


def variant_set(
    data: Dataset,
    folds: FoldAssignment,
    test_x,
    spec: ScoreFunctionSpec,
    combiner,
    smoothed: bool = False,
    hull: bool = False,
) -> PredictionSet:
    cv = compute_cv_scores(data, folds, spec)
    return variant_set_from_scores(cv, folds, test_x, combiner, smoothed=smoothed, hull=hull)


# ---------------------------------------------------------------------------
# CV+ (jackknife+ when K = n)
# ---------------------------------------------------------------------------

def cv_plus_from_scores(
    cv: CvScores, folds: FoldAssignment, test_x, alpha: float
) -> PredictionSet:
    """Interval between the empirical quantiles of mu_k(i)(x) -/+ S_i.

    Always a single interval (possibly empty or the whole line); contains the
    plain cross-validation conformal set under the residual score.
    """
    if cv.spec.kind != "residual":
        raise InvalidConfigurationError("CV+ is defined for residual scores only")
    mu = fold_predictions(cv, test_x)
    fold_of = folds.fold_of
    used = fold_of >= 0
    mu_i = mu[fold_of[used]]
    s_i = cv.scores[used]
    gamma = (1.0 - alpha) * (1.0 + 1.0 / folds.n_used)
    hi = empirical_quantile(mu_i + s_i, gamma)
    lo = -empirical_quantile(-(mu_i - s_i), gamma)
    if math.isinf(hi) or math.isinf(lo):
        warnings.warn(
            f"quantile level {gamma:.6g} exceeds one; the CV+ set is the whole line",
            InformativenessWarning,
            stacklevel=2,
        )
        return PredictionSet(((-INF, INF),))
    if lo > hi:  # inverted quantiles can only happen at levels below one half
        return PredictionSet(())
    return PredictionSet(((lo, hi),))


def cv_plus_set(
    data: Dataset,
    folds: FoldAssignment,
    test_x,
    alpha: float,
    regressor: RegressorSpec,
) -> PredictionSet:
    cv = compute_cv_scores(data, folds, ScoreFunctionSpec("residual", regressor))
    return cv_plus_from_scores(cv, folds, test_x, alpha)
