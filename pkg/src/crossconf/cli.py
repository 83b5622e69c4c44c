"""Command-line front end: simulate, run, predict, bounds.

Exit codes: 0 success, 2 usage error, 3 data error, 4 numerical failure.
Every report embeds the fully resolved configuration, including the seed, so
runs are reproducible byte for byte.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import secrets
import sys
import warnings

import numpy as np

from .combiners import coverage_bounds
from .conformal_sets import ALL_METHODS, FOLD_METHODS, split_conformal
from .data_model import (
    RandomDraws,
    RandomSource,
    _open_unit,
    assign_folds,
    load_csv,
    load_query_csv,
)
from .errors import InvalidConfigurationError, InvalidDataError, NumericalError
from .experiments import (
    SimulationConfig,
    _point_sets,
    atomic_write_text,
    run_real_data,
    run_simulation,
)
from .regression import parse_regressor
from .scores import ScoreFunctionSpec, compute_cv_scores

SEED_ENV = "CROSSCONF_SEED"


def _parse_int_list(text: str) -> tuple[int, ...]:
    """Accept '7', '40,80,120' or inclusive ranges 'start:stop:step'."""
    text = text.strip()
    if ":" in text:
        parts = text.split(":")
        if len(parts) == 2:
            parts.append("1")
        if len(parts) != 3:
            raise InvalidConfigurationError(f"bad range {text!r}; use start:stop:step")
        try:
            start, stop, step = (int(p) for p in parts)
        except ValueError:
            raise InvalidConfigurationError(f"bad range {text!r}") from None
        if step < 1 or stop < start:
            raise InvalidConfigurationError(f"bad range {text!r}")
        return tuple(range(start, stop + 1, step))
    try:
        return tuple(int(p) for p in text.split(","))
    except ValueError:
        raise InvalidConfigurationError(f"bad integer list {text!r}") from None


def _parse_methods(text: str) -> tuple[str, ...]:
    methods = tuple(m.strip() for m in text.split(",") if m.strip())
    unknown = [m for m in methods if m not in ALL_METHODS]
    if unknown:
        raise InvalidConfigurationError(
            f"unknown methods {unknown}; choose from {list(ALL_METHODS)}"
        )
    if not methods:
        raise InvalidConfigurationError("need at least one method")
    return methods


def _resolve_seed(args) -> int:
    if args.seed is not None:
        return args.seed
    env = os.environ.get(SEED_ENV)
    if env is not None:
        try:
            return int(env)
        except ValueError:
            raise InvalidConfigurationError(f"bad {SEED_ENV} value {env!r}") from None
    if getattr(args, "entropy", False):
        return secrets.randbits(63)
    raise InvalidConfigurationError(
        f"randomized methods need --seed (or {SEED_ENV}, or --entropy to draw "
        "a fresh seed that is then recorded in the output)"
    )


def _out_paths(out: str) -> tuple[str, str]:
    base, ext = os.path.splitext(out)
    if ext.lower() == ".csv":
        return out, base + ".json"
    if ext.lower() == ".json":
        return base + ".csv", out
    return out + ".csv", out + ".json"


def cmd_simulate(args) -> int:
    cfg = SimulationConfig(
        n=args.n,
        p_list=_parse_int_list(args.p),
        alpha=args.alpha,
        k=args.k,
        reps=args.reps,
        regressor=parse_regressor(args.regressor),
        methods=_parse_methods(args.methods),
        seed=_resolve_seed(args),
        fold_mode=args.fold_mode,
        threads=args.threads,
    )
    report = run_simulation(cfg)
    csv_path, json_path = _out_paths(args.out)
    report.write_csv(csv_path)
    report.write_json(json_path)
    print(f"wrote {csv_path} and {json_path}")
    return 0


def cmd_run(args) -> int:
    seed = _resolve_seed(args)
    data, _ = load_csv(args.data, args.target)
    cfg = SimulationConfig(
        n=args.train_size,
        p_list=(data.p,),
        alpha=args.alpha,
        k=args.k,
        reps=args.trials,
        regressor=parse_regressor(args.regressor),
        methods=_parse_methods(args.methods),
        seed=seed,
        fold_mode=args.fold_mode,
        threads=args.threads,
    )
    report = run_real_data(data, args.train_size, args.test_size, args.trials, cfg)
    csv_path, json_path = _out_paths(args.out)
    report.write_csv(csv_path)
    report.write_json(json_path)
    print(f"wrote {csv_path} and {json_path}")
    return 0


def _jsonable_set(pset) -> dict:
    width = pset.width
    return {
        "intervals": pset.to_jsonable(),
        "hulled": pset.hulled,
        "width": "inf" if math.isinf(width) else width,
        "n_components": pset.n_components,
    }


def cmd_predict(args) -> int:
    seed = _resolve_seed(args)
    data, feature_names = load_csv(args.data, args.target)
    query = load_query_csv(args.query, feature_names)
    methods = _parse_methods(args.methods)
    spec = ScoreFunctionSpec(args.score, parse_regressor(args.regressor))
    cfg = SimulationConfig(
        n=data.n,
        p_list=(data.p,),
        alpha=args.alpha,
        k=args.k,
        reps=1,
        regressor=spec.regressor,
        methods=methods,
        seed=seed,
        fold_mode=args.fold_mode,
    )
    src = RandomSource(seed)
    folds = assign_folds(data.n, args.k, args.fold_mode, src)
    needs_cv = any(m in FOLD_METHODS or m == "cv+" for m in methods)
    cv = compute_cv_scores(data, folds, spec) if needs_cv else None
    split_state = (
        split_conformal(data, args.alpha, spec, src) if "split" in methods else None
    )
    gen_tau = src.generator("tau")
    gen_u = src.generator("u")
    predictions = []
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        for j in range(query.shape[0]):
            draws = RandomDraws(_open_unit(gen_tau), _open_unit(gen_u))
            sets = _point_sets(cfg, folds, cv, split_state, query[j], draws)
            if args.hull:
                sets = {m: s.hull() for m, s in sets.items()}
            predictions.append(
                {"row": j, "sets": {m: _jsonable_set(s) for m, s in sets.items()}}
            )
    for w in {str(w.message) for w in caught}:
        print(f"warning: {w}", file=sys.stderr)
    payload = {
        "config": {"command": "predict", "alpha": args.alpha, "k": args.k,
                   "methods": list(methods), "seed": seed, "fold_mode": args.fold_mode,
                   "regressor": args.regressor, "hull": bool(args.hull)},
        "predictions": predictions,
    }
    text = json.dumps(payload, indent=2) + "\n"
    if args.out:
        atomic_write_text(args.out, text)
        print(f"wrote {args.out}")
    else:
        print(text, end="")
    return 0


def cmd_bounds(args) -> int:
    k_list = _parse_int_list(args.k_list)
    n_list = _parse_int_list(args.n)
    alpha = args.alpha
    lines = [
        "# config: " + json.dumps(
            {"command": "bounds", "alpha": alpha, "k": list(k_list), "n": list(n_list)},
            sort_keys=True,
        ),
        "k,n,bound_small_k,bound_large_k,combined,sqrt_floor",
    ]
    for k in k_list:
        for n in n_list:
            if k > n:
                continue
            b = coverage_bounds(alpha, k, n)
            floor = 1.0 - 2.0 * alpha - 2.0 / math.sqrt(n)
            lines.append(
                f"{k},{n},{b.bound_small_k!r},{b.bound_large_k!r},{b.combined!r},{floor!r}"
            )
    text = "\n".join(lines) + "\n"
    if args.out:
        atomic_write_text(args.out, text)
        print(f"wrote {args.out}")
    else:
        print(text, end="")
    return 0


def _add_seed_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--seed", type=int, default=None, help="master seed (nonnegative)")
    parser.add_argument(
        "--entropy", action="store_true",
        help="allow running without --seed by drawing a fresh recorded seed",
    )


def _add_model_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--alpha", type=float, default=0.1, help="miscoverage rate")
    parser.add_argument("--k", type=int, default=5, help="number of folds")
    parser.add_argument(
        "--fold-mode", choices=["equal", "varying"], default="equal", dest="fold_mode"
    )
    parser.add_argument("--score", choices=["residual"], default="residual")
    parser.add_argument(
        "--regressor", default="ols", help="ols | ridge:LAMBDA | knn:K"
    )
    parser.add_argument(
        "--methods", default="mod,e-mod,u-mod,eu-mod,cross",
        help="comma-separated subset of " + ",".join(ALL_METHODS),
    )
    parser.add_argument("--threads", type=int, default=os.cpu_count() or 1)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="crossconf",
        description="Distribution-free prediction sets from cross-validation "
        "conformal methods and their exchangeable/randomized variants.",
    )
    sub = parser.add_subparsers(dest="subcommand", required=True)

    p_sim = sub.add_parser("simulate", help="Monte-Carlo simulation campaign")
    p_sim.add_argument("--n", type=int, default=100, help="training points per trial")
    p_sim.add_argument("--p", required=True, help="covariate counts: list or start:stop:step")
    p_sim.add_argument("--reps", type=int, default=1000, help="replications per p")
    p_sim.add_argument("--out", default="simulation.csv")
    _add_model_flags(p_sim)
    _add_seed_flags(p_sim)
    p_sim.set_defaults(func=cmd_simulate)

    p_run = sub.add_parser("run", help="repeated-subsampling evaluation on a CSV dataset")
    p_run.add_argument("--data", required=True, help="training CSV with header row")
    p_run.add_argument("--target", required=True, help="response column name")
    p_run.add_argument("--train-size", type=int, required=True, dest="train_size")
    p_run.add_argument("--test-size", type=int, required=True, dest="test_size")
    p_run.add_argument("--trials", type=int, default=20)
    p_run.add_argument("--out", default="realdata.csv")
    _add_model_flags(p_run)
    _add_seed_flags(p_run)
    p_run.set_defaults(func=cmd_run)

    p_pred = sub.add_parser("predict", help="prediction sets for query rows")
    p_pred.add_argument("--data", required=True, help="training CSV with header row")
    p_pred.add_argument("--target", required=True, help="response column name")
    p_pred.add_argument("--query", required=True, help="CSV of query feature rows")
    p_pred.add_argument("--hull", action="store_true", help="report convex hulls")
    p_pred.add_argument("--out", default=None, help="write JSON here instead of stdout")
    _add_model_flags(p_pred)
    _add_seed_flags(p_pred)
    p_pred.set_defaults(func=cmd_predict)

    p_b = sub.add_parser("bounds", help="coverage lower bounds for the cross method")
    p_b.add_argument("--alpha", type=float, default=0.1)
    p_b.add_argument("--k-list", default="2,5,10", dest="k_list", help="fold counts")
    p_b.add_argument("--n", default="10:1000:10", help="point counts: list or range")
    p_b.add_argument("--out", default=None)
    p_b.set_defaults(func=cmd_bounds)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.func(args)
    except InvalidConfigurationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except InvalidDataError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except (NumericalError, np.linalg.LinAlgError, FloatingPointError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    sys.exit(main())
