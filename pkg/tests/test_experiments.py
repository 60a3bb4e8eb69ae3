import math

import numpy as np
import pytest

from spde_sync.experiments import (
    DegenerateFitError,
    ExperimentConfig,
    bootstrap_se,
    band_limited_field,
    corpus_field,
    csv_lines,
    default_experiment_config,
    derive_seed,
    ensemble_p_mean,
    linear_fit,
    member_seed,
    ordered_corpus_pair,
    pava_nonincreasing,
    rough_field,
    run_experiment,
    splitmix64,
)
from spde_sync.solver import SolverConfig
from spde_sync.torus import TorusGrid, order_gap


@pytest.fixture(scope="module")
def small_solver():
    return SolverConfig(grid=TorusGrid(N=32, L=math.pi / 4), dt=1e-3)


class TestSeedSplitting:
    def test_splitmix_reference_values(self):
        # reference outputs of the standard splitmix64 sequence from seed 0
        assert splitmix64(0) == 0xE220A8397B1DCDAF
        assert splitmix64(0xE220A8397B1DCDAF) != splitmix64(0)

    def test_member_seeds_distinct(self):
        seeds = [member_seed(123, i) for i in range(1000)]
        assert len(set(seeds)) == 1000

    def test_member_seed_deterministic(self):
        assert member_seed(99, 7) == member_seed(99, 7)

    def test_derive_streams_distinct(self):
        s = member_seed(5, 0)
        assert derive_seed(s, 1) != derive_seed(s, 2)


class TestCorpus:
    def test_fields_deterministic(self, small_solver):
        grid = small_solver.grid
        for i in range(8):
            a = corpus_field(grid, 42, i)
            b = corpus_field(grid, 42, i)
            assert np.array_equal(a.values, b.values)

    def test_ordered_pairs_are_ordered(self, small_solver):
        grid = small_solver.grid
        for i in range(12):
            g, f = ordered_corpus_pair(grid, 77, i)
            assert order_gap(g, f) >= 0.0

    def test_band_limited_band_respected(self, small_solver):
        grid = small_solver.grid
        f = band_limited_field(grid, 3, 0, band=4)
        k = np.fft.fftfreq(grid.N, 1 / grid.N).astype(int)
        kx, ky = np.meshgrid(k, k, indexing="ij")
        outside = (np.abs(kx) > 4) | (np.abs(ky) > 4)
        assert np.max(np.abs(f.spectral[outside])) <= 1e-9

    def test_rough_field_scale(self, small_solver):
        f = rough_field(small_solver.grid, 9, 0, scale=2.0)
        g = rough_field(small_solver.grid, 9, 0, scale=1.0)
        assert np.allclose(f.values, 2.0 * g.values)


class TestNumerics:
    def test_linear_fit_recovers_exact_line(self):
        x = np.linspace(0, 10, 40)
        slope, intercept, r2 = linear_fit(x, -0.7 * x + 2.0)
        assert slope == pytest.approx(-0.7, abs=1e-12)
        assert intercept == pytest.approx(2.0, abs=1e-12)
        assert r2 == pytest.approx(1.0, abs=1e-12)

    def test_linear_fit_degenerate(self):
        with pytest.raises(DegenerateFitError):
            linear_fit([1.0, 2.0, 3.0], [5.0, 5.0, 5.0])

    def test_pava_identity_on_monotone(self):
        y = np.array([5.0, 4.0, 2.5, 1.0])
        assert np.array_equal(pava_nonincreasing(y), y)

    def test_pava_pools_violations(self):
        y = np.array([1.0, 3.0, 2.0])
        out = pava_nonincreasing(y)
        assert out[0] >= out[1] >= out[2]
        assert out.sum() == pytest.approx(y.sum())  # mean-preserving pools

    def test_ensemble_p_mean_matches_direct(self):
        d = np.abs(np.random.default_rng(0).normal(size=(8, 5))) + 0.1
        direct = (np.mean(d**3, axis=0)) ** (1 / 3)
        assert np.allclose(ensemble_p_mean(d, 3), direct)

    def test_ensemble_p_mean_large_values_no_overflow(self):
        d = np.full((4, 2), 1e8)
        out = ensemble_p_mean(d, 41)
        assert np.allclose(out, 1e8)

    def test_ensemble_p_mean_zero_column(self):
        d = np.zeros((4, 2))
        assert np.array_equal(ensemble_p_mean(d, 41), np.zeros(2))

    def test_bootstrap_se_scaling(self):
        gen = np.random.default_rng(1)
        small = bootstrap_se(gen.normal(size=(25, 1)), seed=4)
        assert small[0] == pytest.approx(1.0 / 5.0, rel=0.35)


class TestConfigValidation:
    def test_alpha_window_enforced(self, small_solver):
        with pytest.raises(ValueError):
            ExperimentConfig(kind="order", solver=small_solver, alpha=0.2,
                             alpha0=0.1, delta=0.05)
        with pytest.raises(ValueError):
            ExperimentConfig(kind="order", solver=small_solver, alpha=0.05,
                             alpha0=0.1, delta=0.05)

    def test_low_moment_order_warns(self, small_solver):
        with pytest.warns(UserWarning):
            ExperimentConfig(kind="order", solver=small_solver, p=2)

    def test_fit_window_starts_at_one(self, small_solver):
        with pytest.raises(ValueError):
            ExperimentConfig(kind="sync_rate", solver=small_solver,
                             fit_start=0.5)

    def test_unknown_kind_rejected(self, small_solver):
        with pytest.raises(ValueError):
            default_experiment_config("warp_drive", solver=small_solver)

    def test_kind_defaults_applied(self):
        from spde_sync.experiments import DEFAULT_TORUS_SIZE

        cfg = default_experiment_config("pullback")
        assert cfg.ensemble == 16
        assert cfg.solver.grid.L == pytest.approx(DEFAULT_TORUS_SIZE)


class TestRunners:
    def test_order_small(self, small_solver):
        cfg = default_experiment_config("order", solver=small_solver,
                                        order_runs=4, seed=3)
        res = run_experiment(cfg)
        assert res.passed
        assert len(res.rows) == 2 * 4
        assert {r[3] for r in res.rows} == {"initial_sup_gap", "min_gap"}

    def test_lemma_suite_small(self, small_solver):
        cfg = default_experiment_config("lemma_suite", solver=small_solver,
                                        pair_count=12, seed=5)
        res = run_experiment(cfg)
        assert res.passed
        assert res.summary["ordered_pass"] == "36/36"
        assert res.summary["lipschitz_pass"] == "36/36"

    def test_sync_rate_small(self, small_solver):
        # structural checks only; the decay-rate assertions live in the
        # full-scale acceptance suite where the statistics are meaningful
        cfg = default_experiment_config(
            "sync_rate", solver=small_solver, ensemble=2, horizon=2.0,
            fit_end=2.0, seed=11,
        )
        res = run_experiment(cfg)
        assert math.isfinite(res.summary["lambda_hat"])
        assert res.summary["envelope_violation_worst"] <= 1e-8
        assert "gap_norm" in {r[3] for r in res.rows}
        assert res.field_dumps  # member 0 dumps the envelope endpoints

    def test_sync_rate_degenerate_without_gap(self):
        # both extremal levels at 0 make every coupled pair identical, the
        # gap curve is identically zero and the rate is undefined
        solver = SolverConfig(grid=TorusGrid(N=16, L=0.55), dt=1e-3)
        cfg = default_experiment_config(
            "sync_rate", solver=solver, ensemble=2, horizon=2.0, fit_end=2.0,
            extremal=0.0, extremal_alt=0.0, seed=1,
        )
        with pytest.raises(DegenerateFitError):
            run_experiment(cfg)

    def test_coming_down_small(self, small_solver):
        cfg = default_experiment_config("coming_down", solver=small_solver,
                                        ensemble=2, seed=13)
        res = run_experiment(cfg)
        assert res.passed
        quantities = {r[3] for r in res.rows}
        assert "besov_norm_R100" in quantities
        assert "besov_norm_R1e+08" in quantities

    def test_rows_deterministic(self, small_solver):
        cfg = default_experiment_config("order", solver=small_solver,
                                        order_runs=3, seed=21)
        rows_a = run_experiment(cfg).rows
        rows_b = run_experiment(cfg).rows
        assert rows_a == rows_b

    def test_threaded_matches_serial(self, small_solver):
        base = default_experiment_config("order", solver=small_solver,
                                         order_runs=4, seed=22)
        from dataclasses import replace

        threaded = replace(base, threads=2)
        assert run_experiment(base).rows == run_experiment(threaded).rows


class TestCsv:
    def test_schema_and_formatting(self):
        rows = [("order", 12345, 0.1, "min_gap", 0.25)]
        text = csv_lines(rows)
        lines = text.strip().split("\n")
        assert lines[0] == "experiment,seed,t,quantity,value"
        assert lines[1] == "order,12345,0.1,min_gap,0.25"

    def test_round_trip_precision(self):
        value = 0.1234567890123456789
        text = csv_lines([("x", 1, 1.0, "q", value)])
        parsed = float(text.strip().split("\n")[1].split(",")[-1])
        assert parsed == value
