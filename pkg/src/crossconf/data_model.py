"""Core containers, fold assignment and reproducible randomness.

Everything downstream (scores, p-values, prediction sets, experiments)
consumes these types. All containers are immutable after construction and
safe to share across concurrent workers.
"""

from __future__ import annotations

import csv
import hashlib
from dataclasses import dataclass

import numpy as np

from .errors import InvalidConfigurationError, InvalidDataError

__all__ = [
    "Dataset",
    "FoldAssignment",
    "RandomSource",
    "RandomDraws",
    "assign_folds",
    "draw_randomization",
    "load_csv",
    "load_query_csv",
]

FOLD_MODES = ("equal", "varying")


def _frozen_array(values, dtype=float) -> np.ndarray:
    arr = np.array(values, dtype=dtype)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class Dataset:
    """Feature matrix (n rows, p columns) plus a response vector of length n.

    All entries must be finite; row i of ``features`` pairs with
    ``responses[i]``. Arrays are copied and marked read-only.
    """

    features: np.ndarray
    responses: np.ndarray

    def __post_init__(self):
        features = _frozen_array(self.features)
        responses = _frozen_array(self.responses)
        if features.ndim != 2:
            raise InvalidDataError("features must be a 2-D array")
        if responses.ndim != 1:
            raise InvalidDataError("responses must be a 1-D vector")
        if features.shape[0] != responses.shape[0]:
            raise InvalidDataError(
                f"features have {features.shape[0]} rows but responses have "
                f"length {responses.shape[0]}"
            )
        if features.shape[0] < 1 or features.shape[1] < 1:
            raise InvalidDataError("need at least one row and one feature column")
        if not np.isfinite(features).all() or not np.isfinite(responses).all():
            raise InvalidDataError("all feature and response entries must be finite")
        object.__setattr__(self, "features", features)
        object.__setattr__(self, "responses", responses)

    @property
    def n(self) -> int:
        return self.features.shape[0]

    @property
    def p(self) -> int:
        return self.features.shape[1]

    def subset(self, indices) -> "Dataset":
        idx = np.asarray(indices, dtype=int)
        return Dataset(self.features[idx], self.responses[idx])


@dataclass(frozen=True)
class FoldAssignment:
    """Partition of the point indices {0..n-1} into K folds.

    Equal-size mode keeps K folds of exactly floor(n/K) points each and
    discards the n mod K leftover points (chosen uniformly at random so the
    retained sample stays exchangeable). Varying-size mode keeps every point;
    fold sizes differ by at most one and the larger folds sit at uniformly
    random fold indices, which keeps the fold positions exchangeable.
    """

    n: int
    fold_members: tuple[np.ndarray, ...]
    discarded: np.ndarray
    mode: str

    def __post_init__(self):
        members = tuple(_frozen_array(m, dtype=int) for m in self.fold_members)
        discarded = _frozen_array(self.discarded, dtype=int)
        object.__setattr__(self, "fold_members", members)
        object.__setattr__(self, "discarded", discarded)
        if self.mode not in FOLD_MODES:
            raise InvalidConfigurationError(f"unknown fold mode: {self.mode!r}")
        if len(members) == 0:
            raise InvalidConfigurationError("need at least one fold")
        flat = np.sort(np.concatenate(members + (discarded,)))
        if flat.size != self.n or not np.array_equal(flat, np.arange(self.n)):
            raise InvalidConfigurationError(
                "folds plus discarded points must partition the indices 0..n-1"
            )
        sizes = np.array([m.size for m in members])
        if sizes.min() < 1:
            raise InvalidConfigurationError("every fold needs at least one point")
        if self.mode == "equal":
            if sizes.min() != sizes.max():
                raise InvalidConfigurationError(
                    "equal-size mode requires identical fold sizes"
                )
            if discarded.size >= len(members):
                raise InvalidConfigurationError(
                    "equal-size mode discards fewer than K points"
                )
        else:
            if discarded.size != 0:
                raise InvalidConfigurationError("varying-size mode keeps every point")
            if sizes.max() - sizes.min() > 1:
                raise InvalidConfigurationError(
                    "varying-size fold sizes may differ by at most one"
                )

    @property
    def n_folds(self) -> int:
        return len(self.fold_members)

    @property
    def fold_sizes(self) -> np.ndarray:
        return np.array([m.size for m in self.fold_members])

    @property
    def n_used(self) -> int:
        """Number of points that belong to a fold (n minus discarded)."""
        return self.n - self.discarded.size

    @property
    def fold_of(self) -> np.ndarray:
        """Length-n vector mapping each point to its fold index, -1 if discarded."""
        out = np.full(self.n, -1, dtype=int)
        for k, members in enumerate(self.fold_members):
            out[members] = k
        return out

    def complement(self, fold: int) -> np.ndarray:
        """Indices of the points used to train fold ``fold``'s model.

        Discarded points take no part in training or scoring.
        """
        others = [m for k, m in enumerate(self.fold_members) if k != fold]
        if not others:
            return np.empty(0, dtype=int)
        return np.concatenate(others)


@dataclass(frozen=True)
class RandomSource:
    """Deterministic randomness keyed by (seed, stream_id, purpose name).

    Identical keys reproduce identical draw sequences on any machine and any
    thread schedule. Purposes are independent named substreams, so adding a
    new consumer never perturbs the draws seen by an existing one. Concurrent
    trials use distinct ``stream_id`` values and never share a stream.
    """

    seed: int
    stream_id: int = 0

    def __post_init__(self):
        if self.seed < 0:
            raise InvalidConfigurationError("seed must be a nonnegative integer")
        if self.stream_id < 0:
            raise InvalidConfigurationError("stream_id must be nonnegative")

    def generator(self, purpose: str = "main") -> np.random.Generator:
        tag = int.from_bytes(
            hashlib.blake2s(purpose.encode("utf8"), digest_size=4).digest(), "big"
        )
        seq = np.random.SeedSequence(entropy=self.seed, spawn_key=(self.stream_id, tag))
        return np.random.default_rng(seq)

    def stream(self, stream_id: int) -> "RandomSource":
        return RandomSource(self.seed, stream_id)


@dataclass(frozen=True)
class RandomDraws:
    """One shared tau and one U per prediction task, both uniform on (0, 1).

    tau smooths the fold p-values and must be common across all folds of a
    task; U feeds the randomized combination rules. The two draws are mutually
    independent and independent of the data streams.
    """

    tau: float
    u: float

    def __post_init__(self):
        if not 0.0 < self.tau < 1.0:
            raise InvalidConfigurationError("tau must lie strictly inside (0, 1)")
        if not 0.0 < self.u < 1.0:
            raise InvalidConfigurationError("u must lie strictly inside (0, 1)")


def assign_folds(n: int, k: int, mode: str = "equal", rng: RandomSource | None = None) -> FoldAssignment:
    """Uniformly random partition of n points into k folds.

    Equal-size mode discards a uniformly random subset of size n mod k so that
    every fold has exactly floor(n/k) members. Varying-size mode keeps all
    points and places the larger folds at uniformly random fold indices.
    """
    if k < 1:
        raise InvalidConfigurationError("fold count must be at least 1")
    if k > n:
        raise InvalidConfigurationError(f"fold count {k} exceeds the number of points {n}")
    if mode not in FOLD_MODES:
        raise InvalidConfigurationError(f"unknown fold mode: {mode!r}")
    if rng is None:
        raise InvalidConfigurationError("assign_folds requires a RandomSource")
    gen = rng.generator("folds")
    perm = gen.permutation(n)
    if mode == "equal":
        m = n // k
        members = tuple(perm[i * m : (i + 1) * m] for i in range(k))
        discarded = perm[k * m :]
        return FoldAssignment(n, members, discarded, "equal")
    base, extra = divmod(n, k)
    sizes = np.full(k, base, dtype=int)
    if extra:
        big = gen.choice(k, size=extra, replace=False)
        sizes[big] += 1
    stops = np.cumsum(sizes)
    starts = stops - sizes
    members = tuple(perm[a:b] for a, b in zip(starts, stops))
    return FoldAssignment(n, members, np.empty(0, dtype=int), "varying")


def _open_unit(gen: np.random.Generator) -> float:
    x = gen.random()
    while x == 0.0:  # keep the draw strictly inside (0, 1)
        x = gen.random()
    return float(x)


def draw_randomization(rng: RandomSource) -> RandomDraws:
    """Draw the (tau, U) pair for one prediction task.

    tau and U come from separate named substreams, so they are independent of
    each other and of the fold / data streams of the same source.
    """
    return RandomDraws(
        tau=_open_unit(rng.generator("tau")),
        u=_open_unit(rng.generator("u")),
    )


def load_csv(path, target: str) -> tuple[Dataset, list[str]]:
    """Read a numeric dataset from a headered CSV file.

    The column named ``target`` becomes the response; every other column must
    be numeric and becomes a feature. Returns the dataset together with the
    feature column names (in file order).
    """
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise InvalidDataError(f"{path}: empty CSV file") from None
        rows = [row for row in reader if row]
    header = [h.strip() for h in header]
    if target not in header:
        raise InvalidDataError(f"target column {target!r} not found in CSV header")
    if not rows:
        raise InvalidDataError(f"{path}: CSV has a header but no data rows")
    t_col = header.index(target)
    feature_names = [h for i, h in enumerate(header) if i != t_col]
    width = len(header)
    values = np.empty((len(rows), width))
    for r, row in enumerate(rows):
        if len(row) != width:
            raise InvalidDataError(f"row {r + 2} has {len(row)} cells, expected {width}")
        for c, cell in enumerate(row):
            try:
                values[r, c] = float(cell)
            except ValueError:
                raise InvalidDataError(
                    f"non-numeric value {cell.strip()!r} in column {header[c]!r}"
                ) from None
    responses = values[:, t_col]
    features = np.delete(values, t_col, axis=1)
    return Dataset(features, responses), feature_names


def load_query_csv(path, feature_names: list[str]) -> np.ndarray:
    """Read query feature rows from a headered CSV, aligned to ``feature_names``.

    Columns may appear in any order; missing or non-numeric feature columns
    raise an error naming the offending column. Extra columns are ignored.
    """
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise InvalidDataError(f"{path}: empty CSV file") from None
        rows = [row for row in reader if row]
    missing = [name for name in feature_names if name not in header]
    if missing:
        raise InvalidDataError(
            f"query is missing feature column {missing[0]!r} "
            f"(train data has {len(feature_names)} features)"
        )
    if not rows:
        raise InvalidDataError(f"{path}: CSV has a header but no data rows")
    cols = [header.index(name) for name in feature_names]
    out = np.empty((len(rows), len(cols)))
    for r, row in enumerate(rows):
        for j, c in enumerate(cols):
            if c >= len(row):
                raise InvalidDataError(f"row {r + 2} is missing column {header[c]!r}")
            try:
                out[r, j] = float(row[c])
            except ValueError:
                raise InvalidDataError(
                    f"non-numeric value {row[c].strip()!r} in column {header[c]!r}"
                ) from None
    if not np.isfinite(out).all():
        raise InvalidDataError("query rows must be finite")
    return out
