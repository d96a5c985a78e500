import json

import numpy as np
import pytest

from varma_causal import (
    CoefficientSampler,
    EstimationError,
    ModelError,
    SeparationQuery,
    SimulationConfig,
    VarmaSpec,
    endo,
    faithfulness_check,
    fisher_z_pvalue,
    run_faithfulness_experiment,
    run_gmp_experiment,
    sample_stable_spec,
    simulate,
    solve_stationary,
    validate,
)

X, Y = 0, 1


class TestSimulate:
    def test_same_seed_identical_output(self, varma_lagged_spec):
        cfg = SimulationConfig(varma_lagged_spec, n=5_000, seed=2024)
        assert np.array_equal(simulate(cfg), simulate(cfg))

    def test_white_noise_autocorrelation(self):
        spec = VarmaSpec(a=[np.zeros((2, 2)), np.zeros((2, 2))], gamma=[1, 1])
        series = simulate(SimulationConfig(spec, n=20_000, seed=5))
        n = len(series)
        for i in range(2):
            x = series[:, i] - series[:, i].mean()
            r = float(x[1:] @ x[:-1] / (x @ x))
            assert abs(r) < 4 / np.sqrt(n)

    def test_sample_covariances_match_stationary_law(self, varma_lagged_spec):
        n = 100_000
        series = simulate(SimulationConfig(varma_lagged_spec, n=n, seed=77))
        ss = solve_stationary(varma_lagged_spec)
        for h in range(4):
            emp = series[h:].T @ series[: n - h] / (n - h)
            exact = ss.autocov(h)
            scale = max(1.0, np.abs(exact).max())
            assert np.max(np.abs(emp - exact)) / scale < 0.05

    def test_varma_lagged_lag2_outcome_covariance(self, varma_lagged_spec):
        # population value 16/27 from the exact pipeline; 5 batch-mean
        # standard errors at n = 1e5
        n = 100_000
        series = simulate(SimulationConfig(varma_lagged_spec, n=n, seed=123))
        prods = series[2:, Y] * series[: n - 2, X]
        batches = np.array_split(prods, 100)
        means = np.array([b.mean() for b in batches])
        se = means.std(ddof=1) / np.sqrt(len(means))
        assert abs(prods.mean() - 16 / 27) < 5 * se

    def test_innovation_law_pluggable(self, varma_lagged_spec):
        def uniform_law(rng, n, d):
            return rng.uniform(-np.sqrt(3), np.sqrt(3), (n, d))

        cfg = SimulationConfig(varma_lagged_spec, n=50_000, seed=8,
                               innovation_law=uniform_law)
        series = simulate(cfg)
        ss = solve_stationary(varma_lagged_spec)
        emp = series.T @ series / len(series)
        assert np.max(np.abs(emp - ss.autocov(0))) < 0.05

    def test_divergent_innovations_detected(self, varma_lagged_spec):
        def explosive_law(rng, n, d):
            return np.full((n, d), 1e13)

        with pytest.raises(EstimationError, match="diverged"):
            simulate(SimulationConfig(varma_lagged_spec, n=100, seed=1,
                                      innovation_law=explosive_law))

    def test_invalid_spec_rejected(self):
        spec = VarmaSpec(a=[[[0.0]], [[1.2]]], gamma=[1.0])
        with pytest.raises(ModelError, match="unstable"):
            simulate(SimulationConfig(spec, n=10, seed=0))


class TestSampler:
    def test_univariate_small_scale_always_accepted(self):
        sampler = CoefficientSampler(d=1, p=1, q=0, scale=0.8)
        _, rejections = sample_stable_spec(sampler, 3, return_rejections=True)
        assert rejections == 0

    def test_accepted_specs_all_validate(self):
        sampler = CoefficientSampler(d=3, p=2, q=1)
        for seed in range(200):
            spec = sample_stable_spec(sampler, seed)
            assert validate(spec).passed

    def test_acceptance_rate_positive(self):
        sampler = CoefficientSampler(d=3, p=2, q=1)
        rejections = [
            sample_stable_spec(sampler, seed, return_rejections=True)[1]
            for seed in range(50)
        ]
        accept_rate = 50 / (50 + sum(rejections))
        assert accept_rate > 0.2

    def test_max_rejections_error(self):
        sampler = CoefficientSampler(d=3, p=2, q=0, scale=5.0, max_rejections=10)
        with pytest.raises(ModelError, match="reduce the coefficient scale"):
            sample_stable_spec(sampler, 0)

    def test_masks_respected(self):
        mask = np.array([[1, 0], [0, 1]], dtype=float)
        sampler = CoefficientSampler(d=2, p=1, q=1, mask_ar=[mask], mask_ma=[mask])
        spec = sample_stable_spec(sampler, 4)
        assert spec.a[1][0, 1] == 0 and spec.a[1][1, 0] == 0
        assert spec.b[0][0, 1] == 0 and spec.b[0][1, 0] == 0

    def test_sparsity_zeroes_entries(self):
        sampler = CoefficientSampler(d=3, p=2, q=1, sparsity=0.9)
        spec = sample_stable_spec(sampler, 9)
        zeros = sum(int(np.sum(m == 0)) for m in (*spec.a, *spec.b))
        assert zeros > 30  # 54 entries at 90% sparsity


class TestExperiments:
    def test_gmp_no_violations_and_deterministic(self):
        sampler = CoefficientSampler(d=2, p=1, q=1, sparsity=0.6)
        rep1 = run_gmp_experiment(sampler, trials=8, queries_per_trial=6, seed=42)
        rep2 = run_gmp_experiment(sampler, trials=8, queries_per_trial=6, seed=42)
        assert rep1.to_dict() == rep2.to_dict()
        assert rep1.summary["violations"] == 0
        assert rep1.summary["separated"] > 0
        assert rep1.summary["all_stabilized"]

    def test_parallel_matches_serial(self):
        sampler = CoefficientSampler(d=2, p=1, q=0, sparsity=0.6)
        serial = run_gmp_experiment(sampler, trials=6, queries_per_trial=4,
                                    seed=7, threads=1)
        parallel = run_gmp_experiment(sampler, trials=6, queries_per_trial=4,
                                      seed=7, threads=3)
        assert serial.to_dict() == parallel.to_dict()

    def test_thread_cap_from_environment(self, monkeypatch):
        sampler = CoefficientSampler(d=2, p=1, q=0, sparsity=0.6)
        monkeypatch.setenv("VARMA_CAUSAL_THREADS", "2")
        capped = run_gmp_experiment(sampler, trials=4, queries_per_trial=3, seed=7)
        monkeypatch.delenv("VARMA_CAUSAL_THREADS")
        serial = run_gmp_experiment(sampler, trials=4, queries_per_trial=3, seed=7)
        assert capped.to_dict() == serial.to_dict()

    def test_diagonal_var_components_always_separated(self):
        # A0 = B = 0 with diagonal A1: distinct components never connect
        mask_diag = np.eye(2)
        sampler = CoefficientSampler(d=2, p=1, q=0, mask_a0=np.zeros((2, 2)),
                                     mask_ar=[mask_diag])
        report = run_gmp_experiment(sampler, trials=4, queries_per_trial=6, seed=3)
        for rec in report.records:
            comps_a = {v[0] for v in rec.a}
            comps_c = {v[0] for v in rec.c}
            if not (comps_a & comps_c):
                assert rec.separated
                assert rec.magnitude < 1e-10

    def test_faithfulness_low_violation_rate(self):
        sampler = CoefficientSampler(d=2, p=1, q=1, sparsity=0.5)
        report = run_faithfulness_experiment(
            sampler, trials=10, queries_per_trial=6, seed=17)
        assert report.summary["connected"] > 0
        assert report.summary["violation_rate"] < 0.05

    def test_cancellation_spec_flagged(self, cancellation_spec):
        query = SeparationQuery([endo(0, 0)], [], [endo(2, 0)])
        separated, ci, violation, _ = faithfulness_check(cancellation_spec, query)
        assert not separated
        assert ci.independent
        assert violation

    def test_cancellation_inside_experiment(self, cancellation_spec):
        report = run_faithfulness_experiment(
            lambda rng: cancellation_spec, trials=2, queries_per_trial=40,
            window=2, seed=5)
        assert report.summary["violations"] > 0

    def test_empirical_mode_populates_pvalues(self):
        sampler = CoefficientSampler(d=2, p=1, q=0, sparsity=0.5)
        report = run_gmp_experiment(sampler, trials=2, queries_per_trial=3,
                                    seed=9, mode="empirical")
        assert all(r.p_value is not None for r in report.records)

    def test_report_round_trips_to_json_and_csv(self, tmp_path):
        sampler = CoefficientSampler(d=2, p=1, q=0, sparsity=0.5)
        report = run_gmp_experiment(sampler, trials=2, queries_per_trial=2, seed=1)
        jpath = tmp_path / "report.json"
        cpath = tmp_path / "report.csv"
        report.save_json(str(jpath))
        report.save_csv(str(cpath))
        loaded = json.loads(jpath.read_text())
        assert loaded["summary"] == report.summary
        assert len(loaded["records"]) == len(report.records)
        lines = cpath.read_text().strip().splitlines()
        assert len(lines) == 1 + len(report.records)


class TestFisherZ:
    def test_detects_dependence_and_independence(self, varma_lagged_spec):
        series = simulate(SimulationConfig(varma_lagged_spec, n=20_000, seed=31))
        dependent = fisher_z_pvalue(series, endo(X, 0), endo(X, -1))
        assert dependent < 1e-6
        # X_t vs Y_t given {X_(t-1), Y_(t-1)} is m-separated, so the partial
        # correlation should look null
        independent = fisher_z_pvalue(
            series, endo(X, 0), endo(Y, 0), (endo(X, -1), endo(Y, -1)))
        assert independent > 1e-4
