"""Tests for the simulation harness, real-data runner and aggregation."""

import json
import math

import numpy as np
import pytest

from crossconf import (
    InvalidConfigurationError,
    RandomSource,
    RegressorSpec,
    SimulationConfig,
    mc_standard_error,
    run_real_data,
    run_simulation,
    simulate_instance,
)
from crossconf.experiments import _simulation_trial, trial_results_csv


def base_config(**overrides):
    defaults = dict(
        n=40, p_list=(4,), alpha=0.1, k=4, reps=5,
        regressor=RegressorSpec("ols"),
        methods=("mod", "e-mod", "u-mod", "eu-mod", "cross"),
        seed=1234,
    )
    defaults.update(overrides)
    return SimulationConfig(**defaults)


class TestSimulateInstance:
    def test_coefficients_have_fixed_norm(self):
        for p in (1, 3, 17):
            _, _, beta = simulate_instance(5, p, RandomSource(0, p), return_coef=True)
            assert np.linalg.norm(beta) == pytest.approx(math.sqrt(10.0), abs=1e-12)

    def test_seed_determinism(self):
        a, (ax, ay) = simulate_instance(20, 4, RandomSource(7, 3))
        b, (bx, by) = simulate_instance(20, 4, RandomSource(7, 3))
        assert np.array_equal(a.features, b.features)
        assert np.array_equal(a.responses, b.responses)
        assert np.array_equal(ax, bx) and ay == by

    def test_response_variance_decomposition(self):
        # Var(Y) = ||beta||^2 + 1 = 11 regardless of the drawn direction
        data, _ = simulate_instance(100_000, 1, RandomSource(5))
        var = data.responses.var(ddof=1)
        se = math.sqrt(2.0 / data.n) * 11.0  # normal approximation for s^2
        assert abs(var - 11.0) < 3 * se

    def test_shapes(self):
        data, (tx, ty) = simulate_instance(12, 7, RandomSource(1))
        assert data.features.shape == (12, 7) and tx.shape == (7,)
        assert isinstance(ty, float)

    def test_preconditions(self):
        with pytest.raises(InvalidConfigurationError):
            simulate_instance(0, 3, RandomSource(1))


class TestRunSimulation:
    def test_report_structure(self):
        report = run_simulation(base_config())
        assert len(report.rows) == 5  # one row per method at the single p
        for row in report.rows:
            assert row.reps == 5
            assert 0.0 <= row.coverage <= 1.0
            assert row.n_infinite >= 0
        assert report.config["seed"] == 1234

    def test_rerun_is_identical(self):
        a = run_simulation(base_config())
        b = run_simulation(base_config())
        assert a.rows == b.rows

    def test_thread_count_does_not_change_results(self):
        a = run_simulation(base_config(reps=8, threads=1))
        b = run_simulation(base_config(reps=8, threads=4))
        assert a.rows == b.rows

    def test_paired_trials_order_widths(self):
        # within one trial every method shares data, folds, tau and U, so the
        # set containments show up as deterministic width orderings
        cfg = base_config(n=60, p_list=(10,), k=5, reps=1)
        for trial in range(25):
            results = {r.method: r for r in _simulation_trial(cfg, 10, trial)}
            assert results["eu-mod"].width <= results["e-mod"].width
            assert results["e-mod"].width <= results["mod"].width
            assert results["u-mod"].width <= results["mod"].width

    def test_vacuous_coverage_floor_at_half(self):
        # at alpha = 0.5 the 1 - 2*alpha guarantee is vacuous; the harness
        # still runs and reports a proper fraction
        cfg = base_config(n=40, p_list=(2,), alpha=0.5, k=2, reps=2000, methods=("mod",))
        row = run_simulation(cfg).row("mod", 2)
        assert 0.0 <= row.coverage <= 1.0

    def test_csv_and_json_outputs(self, tmp_path):
        report = run_simulation(base_config(reps=2))
        csv_path = tmp_path / "r.csv"
        json_path = tmp_path / "r.json"
        report.write_csv(csv_path)
        report.write_json(json_path)
        text = csv_path.read_text()
        header, columns = text.splitlines()[:2]
        assert header.startswith("# config: ") and '"seed": 1234' in header
        assert columns == (
            "method,p,reps,coverage,mean_width,sd_width,median_width,"
            "min_width,max_width,n_infinite"
        )
        payload = json.loads(json_path.read_text())
        assert payload["config"]["seed"] == 1234
        assert {r["method"] for r in payload["rows"]} == set(report.config["methods"])

    def test_unknown_method_rejected(self):
        with pytest.raises(InvalidConfigurationError):
            base_config(methods=("mod", "bogus"))


class TestRunRealData:
    def synthetic(self, n, p, seed=0):
        data, _ = simulate_instance(n, p, RandomSource(seed))
        return data

    def test_degenerate_single_trial_single_point(self):
        data = self.synthetic(50, 3)
        cfg = base_config(n=30, p_list=(3,), methods=("mod",), k=3, seed=5)
        report = run_real_data(data, 30, 1, 1, cfg)
        assert len(report.rows) == 1
        row = report.rows[0]
        assert row.reps == 1 and row.coverage in (0.0, 1.0) and row.p == 3

    def test_split_at_doubled_alpha_covers_eighty_percent(self):
        # synthetic stand-in for the published real-data row: split conformal
        # trained at 2 * 0.1 should cover about 0.80
        data = self.synthetic(20_000, 10, seed=42)
        cfg = base_config(
            n=15_000, p_list=(10,), alpha=0.2, k=5, methods=("split",), seed=99,
        )
        report = run_real_data(data, 15_000, 5000, 1, cfg)
        assert report.rows[0].coverage == pytest.approx(0.80, abs=0.02)

    def test_mod_and_cross_agree_for_large_training_sets(self):
        data = self.synthetic(2600, 5, seed=3)
        cfg = base_config(
            n=2000, p_list=(5,), alpha=0.1, k=5, methods=("mod", "cross"), seed=11,
        )
        report = run_real_data(data, 2000, 500, 1, cfg)
        mod = report.row("mod", 5)
        cross = report.row("cross", 5)
        assert abs(mod.coverage - cross.coverage) <= 0.01

    def test_size_preconditions(self):
        data = self.synthetic(30, 3)
        cfg = base_config(n=20, p_list=(3,), methods=("mod",))
        with pytest.raises(InvalidConfigurationError):
            run_real_data(data, 25, 10, 1, cfg)


class TestHelpers:
    def test_mc_standard_error(self):
        assert mc_standard_error(0.8, 5000) == pytest.approx(math.sqrt(0.8 * 0.2 / 5000))
        assert mc_standard_error(0.0, 10) == 0.0

    def test_trial_results_csv_columns(self):
        results = _simulation_trial(base_config(methods=("mod",)), 4, 0)
        text = trial_results_csv(results)
        lines = text.splitlines()
        assert lines[0] == "method,p,width,n_components,covered"
        cells = lines[1].split(",")
        assert cells[0] == "mod" and cells[4] in ("0", "1")
