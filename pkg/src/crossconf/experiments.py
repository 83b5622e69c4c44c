"""Monte-Carlo simulation harness, real-data trial runner, and aggregation.

A trial draws fresh data, folds, tau and U, then evaluates every requested
method on the same shared state, so width and containment comparisons between
methods are paired. Trials run on independent random streams and may execute
concurrently; aggregation is a deterministic reduction in trial order, so
results do not depend on the worker count.
"""

from __future__ import annotations

import json
import math
import os
import tempfile
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass

import numpy as np

from .conformal_sets import (
    ALL_METHODS,
    FOLD_METHODS,
    PredictionSet,
    cv_plus_from_scores,
    fold_method_sets,
    split_conformal,
    split_set_from_state,
)
from .data_model import (
    Dataset,
    RandomDraws,
    RandomSource,
    _open_unit,
    assign_folds,
    draw_randomization,
)
from .errors import InvalidConfigurationError, NumericalError
from .regression import RegressorSpec
from .scores import ScoreFunctionSpec, compute_cv_scores

__all__ = [
    "REPORT_COLUMNS",
    "TRIAL_COLUMNS",
    "SimulationConfig",
    "TrialResult",
    "AggregateRow",
    "AggregateReport",
    "mc_standard_error",
    "simulate_instance",
    "run_simulation",
    "run_real_data",
    "trial_results_csv",
    "atomic_write_text",
]

REPORT_COLUMNS = (
    "method",
    "p",
    "reps",
    "coverage",
    "mean_width",
    "sd_width",
    "median_width",
    "min_width",
    "max_width",
    "n_infinite",
)

TRIAL_COLUMNS = ("method", "p", "width", "n_components", "covered")


@dataclass(frozen=True)
class SimulationConfig:
    """Parameters of one simulation (or real-data) campaign."""

    n: int
    p_list: tuple[int, ...]
    alpha: float
    k: int
    reps: int
    regressor: RegressorSpec
    methods: tuple[str, ...]
    seed: int
    fold_mode: str = "equal"
    smoothed: bool = False
    threads: int = 1

    def __post_init__(self):
        object.__setattr__(self, "p_list", tuple(int(p) for p in self.p_list))
        object.__setattr__(self, "methods", tuple(self.methods))
        if self.reps < 1:
            raise InvalidConfigurationError("need at least one replication")
        if not 0.0 < self.alpha < 1.0:
            raise InvalidConfigurationError("alpha must lie strictly inside (0, 1)")
        if not self.methods:
            raise InvalidConfigurationError("need at least one method")
        unknown = [m for m in self.methods if m not in ALL_METHODS]
        if unknown:
            raise InvalidConfigurationError(
                f"unknown methods {unknown}; choose from {list(ALL_METHODS)}"
            )
        if self.threads < 1:
            raise InvalidConfigurationError("threads must be at least 1")

    def to_jsonable(self) -> dict:
        out = asdict(self)
        out["p_list"] = list(self.p_list)
        out["methods"] = list(self.methods)
        return out


@dataclass(frozen=True)
class TrialResult:
    """Outcome of one method on one trial's test point."""

    method: str
    p: int
    covered: bool
    width: float
    n_components: int
    alpha_used: float


@dataclass(frozen=True)
class AggregateRow:
    method: str
    p: int
    reps: int
    coverage: float
    mean_width: float
    sd_width: float
    median_width: float
    min_width: float
    max_width: float
    n_infinite: int


@dataclass(frozen=True)
class AggregateReport:
    """Per (method, p) aggregates plus the fully resolved run configuration.

    Width statistics cover the finite-width trials only; the number of
    infinite-width trials is disclosed in ``n_infinite``. ``n_failed`` counts
    trials skipped after a numerical failure (never silently dropped).
    """

    rows: tuple[AggregateRow, ...]
    config: dict
    n_failed: int = 0

    def to_csv_text(self) -> str:
        lines = ["# config: " + json.dumps(self.config, sort_keys=True)]
        if self.n_failed:
            lines.append(f"# skipped {self.n_failed} trial(s) after numerical failure")
        lines.append(",".join(REPORT_COLUMNS))
        for row in self.rows:
            lines.append(
                ",".join(
                    [
                        row.method,
                        repr(row.p),
                        repr(row.reps),
                        repr(row.coverage),
                        repr(row.mean_width),
                        repr(row.sd_width),
                        repr(row.median_width),
                        repr(row.min_width),
                        repr(row.max_width),
                        repr(row.n_infinite),
                    ]
                )
            )
        return "\n".join(lines) + "\n"

    def to_json_text(self) -> str:
        def scrub(value):
            if isinstance(value, float):
                if math.isnan(value):
                    return None
                if math.isinf(value):
                    return "inf" if value > 0 else "-inf"
            return value

        rows = [
            {col: scrub(getattr(row, col)) for col in REPORT_COLUMNS} for row in self.rows
        ]
        payload = {"config": self.config, "n_failed": self.n_failed, "rows": rows}
        return json.dumps(payload, indent=2) + "\n"

    def write_csv(self, path) -> None:
        atomic_write_text(path, self.to_csv_text())

    def write_json(self, path) -> None:
        atomic_write_text(path, self.to_json_text())

    def row(self, method: str, p: int) -> AggregateRow:
        for r in self.rows:
            if r.method == method and r.p == p:
                return r
        raise KeyError(f"no aggregate row for method={method!r}, p={p}")


def atomic_write_text(path, text: str) -> None:
    """Write via a temp file in the target directory, then rename."""
    path = os.fspath(path)
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=directory, suffix=".tmp")
    try:
        with os.fdopen(fd, "w") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def mc_standard_error(rate: float, reps: int) -> float:
    """Standard error of a Monte-Carlo proportion, sqrt(c(1-c)/reps)."""
    return math.sqrt(rate * (1.0 - rate) / reps)


def trial_results_csv(results) -> str:
    """Per-trial set summaries as CSV with width, n_components and covered."""
    lines = [",".join(TRIAL_COLUMNS)]
    for r in results:
        lines.append(
            f"{r.method},{r.p!r},{r.width!r},{r.n_components!r},{int(r.covered)!r}"
        )
    return "\n".join(lines) + "\n"


def simulate_instance(
    n: int, p: int, rng: RandomSource, return_coef: bool = False
):
    """Gaussian linear instance: X ~ N(0, I_p), Y | X ~ N(X'beta, 1).

    beta = sqrt(10) * u for a uniformly random unit vector u, redrawn on every
    call, so the signal strength ||beta||^2 = 10 regardless of p. Returns the
    n-point training dataset plus one extra test pair from the same law.
    """
    if n < 1 or p < 1:
        raise InvalidConfigurationError("need n >= 1 and p >= 1")
    gen = rng.generator("data")
    direction = gen.standard_normal(p)
    beta = math.sqrt(10.0) * direction / np.linalg.norm(direction)
    x_all = gen.standard_normal((n + 1, p))
    y_all = x_all @ beta + gen.standard_normal(n + 1)
    data = Dataset(x_all[:n], y_all[:n])
    test_pair = (x_all[n], float(y_all[n]))
    if return_coef:
        return data, test_pair, beta
    return data, test_pair


def _trial_states(cfg: SimulationConfig, data: Dataset, src: RandomSource):
    folds = assign_folds(data.n, cfg.k, cfg.fold_mode, src)
    spec = ScoreFunctionSpec("residual", cfg.regressor)
    cv = compute_cv_scores(data, folds, spec)
    split_state = (
        split_conformal(data, cfg.alpha, spec, src) if "split" in cfg.methods else None
    )
    return folds, cv, split_state


def _point_sets(
    cfg: SimulationConfig, folds, cv, split_state, test_x, draws: RandomDraws
) -> dict[str, PredictionSet]:
    sets: dict[str, PredictionSet] = {}
    fold_ms = [m for m in cfg.methods if m in FOLD_METHODS]
    if fold_ms:
        sets.update(
            fold_method_sets(
                cv, folds, test_x, cfg.alpha, fold_ms, draws=draws, smoothed=cfg.smoothed
            )
        )
    if "cv+" in cfg.methods:
        sets["cv+"] = cv_plus_from_scores(cv, folds, test_x, cfg.alpha)
    if "split" in cfg.methods:
        sets["split"] = split_set_from_state(split_state, test_x)
    return sets


def _simulation_trial(cfg: SimulationConfig, p: int, stream_id: int) -> list[TrialResult]:
    src = RandomSource(cfg.seed, stream_id)
    data, (test_x, test_y) = simulate_instance(cfg.n, p, src)
    folds, cv, split_state = _trial_states(cfg, data, src)
    draws = draw_randomization(src)
    sets = _point_sets(cfg, folds, cv, split_state, test_x, draws)
    return [
        TrialResult(m, p, bool(s.contains(test_y)), float(s.width), s.n_components, cfg.alpha)
        for m, s in sets.items()
    ]


def _run_jobs(jobs, worker, threads: int):
    """Run jobs preserving order; failures are recorded as None."""

    def guarded(job):
        try:
            return worker(job)
        except (np.linalg.LinAlgError, NumericalError, FloatingPointError):
            return None

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            return list(pool.map(guarded, jobs))
    return [guarded(job) for job in jobs]


def _width_stats(widths: np.ndarray) -> tuple[float, float, float, float, float, int]:
    finite = widths[np.isfinite(widths)]
    n_infinite = int(widths.size - finite.size)
    if finite.size == 0:
        nan = float("nan")
        return nan, nan, nan, nan, nan, n_infinite
    sd = float(np.std(finite, ddof=1)) if finite.size > 1 else 0.0
    return (
        float(np.mean(finite)),
        sd,
        float(np.median(finite)),
        float(np.min(finite)),
        float(np.max(finite)),
        n_infinite,
    )


def _aggregate_trials(
    results: list[TrialResult], method_order, p_order
) -> tuple[AggregateRow, ...]:
    rows = []
    for method in method_order:
        for p in p_order:
            chunk = [r for r in results if r.method == method and r.p == p]
            if not chunk:
                continue
            covered = np.array([r.covered for r in chunk])
            widths = np.array([r.width for r in chunk])
            mean_w, sd_w, med_w, min_w, max_w, n_inf = _width_stats(widths)
            rows.append(
                AggregateRow(
                    method, p, len(chunk), float(covered.mean()),
                    mean_w, sd_w, med_w, min_w, max_w, n_inf,
                )
            )
    return tuple(rows)


def run_simulation(cfg: SimulationConfig) -> AggregateReport:
    """Run ``reps`` independent trials per covariate count and aggregate.

    Every trial draws a fresh coefficient vector, dataset, fold assignment,
    tau and U on its own random stream keyed by (seed, trial index).
    """
    jobs = [
        (p, p_idx * cfg.reps + rep)
        for p_idx, p in enumerate(cfg.p_list)
        for rep in range(cfg.reps)
    ]
    outcomes = _run_jobs(jobs, lambda job: _simulation_trial(cfg, *job), cfg.threads)
    results = [r for chunk in outcomes if chunk is not None for r in chunk]
    n_failed = sum(1 for chunk in outcomes if chunk is None)
    config = {"command": "simulate", **cfg.to_jsonable()}
    return AggregateReport(
        _aggregate_trials(results, cfg.methods, cfg.p_list), config, n_failed
    )


def _real_data_trial(
    cfg: SimulationConfig, data: Dataset, train_size: int, test_size: int, trial: int
) -> dict[str, tuple[float, float, int]]:
    """One subsample trial; returns per-method (coverage, mean finite width,
    infinite count) over the test points."""
    src = RandomSource(cfg.seed, trial)
    idx = src.generator("subsample").choice(
        data.n, size=train_size + test_size, replace=False
    )
    train = data.subset(idx[:train_size])
    test = data.subset(idx[train_size:])
    folds, cv, split_state = _trial_states(cfg, train, src)
    gen_tau = src.generator("tau")
    gen_u = src.generator("u")
    covered: dict[str, list[bool]] = {m: [] for m in cfg.methods}
    widths: dict[str, list[float]] = {m: [] for m in cfg.methods}
    for j in range(test.n):
        draws = RandomDraws(_open_unit(gen_tau), _open_unit(gen_u))
        sets = _point_sets(cfg, folds, cv, split_state, test.features[j], draws)
        for m, s in sets.items():
            covered[m].append(s.contains(test.responses[j]))
            widths[m].append(s.width)
    out = {}
    for m in cfg.methods:
        w = np.array(widths[m])
        finite = w[np.isfinite(w)]
        mean_w = float(finite.mean()) if finite.size else float("nan")
        out[m] = (float(np.mean(covered[m])), mean_w, int(w.size - finite.size))
    return out


def run_real_data(
    data: Dataset, train_size: int, test_size: int, trials: int, cfg: SimulationConfig
) -> AggregateReport:
    """Repeated subsampling protocol on a fixed dataset.

    Each trial samples disjoint train and test subsets without replacement,
    builds every method once on the training part, and evaluates coverage and
    width over the whole test part. Rows aggregate the per-trial means across
    trials; ``reps`` reports the number of trials.
    """
    if trials < 1:
        raise InvalidConfigurationError("need at least one trial")
    if train_size < 2 or test_size < 1:
        raise InvalidConfigurationError("need train_size >= 2 and test_size >= 1")
    if train_size + test_size > data.n:
        raise InvalidConfigurationError(
            f"train_size + test_size = {train_size + test_size} exceeds n = {data.n}"
        )
    outcomes = _run_jobs(
        range(trials),
        lambda t: _real_data_trial(cfg, data, train_size, test_size, t),
        cfg.threads,
    )
    n_failed = sum(1 for o in outcomes if o is None)
    rows = []
    for method in cfg.methods:
        per_trial = [o[method] for o in outcomes if o is not None]
        if not per_trial:
            continue
        coverage = float(np.mean([c for c, _, _ in per_trial]))
        trial_means = np.array([w for _, w, _ in per_trial])
        n_infinite = int(sum(k for _, _, k in per_trial))
        mean_w, sd_w, med_w, min_w, max_w, _ = _width_stats(trial_means)
        rows.append(
            AggregateRow(
                method, data.p, len(per_trial), coverage,
                mean_w, sd_w, med_w, min_w, max_w, n_infinite,
            )
        )
    config = {
        "command": "run",
        "train_size": train_size,
        "test_size": test_size,
        "trials": trials,
        **cfg.to_jsonable(),
    }
    return AggregateReport(tuple(rows), config, n_failed)
