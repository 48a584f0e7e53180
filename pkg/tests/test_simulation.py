import numpy as np
import pytest

import fofr
from fofr.simulation import _raw_predictors, default_truncation, noise_variances


class TestDgpBeta:
    def test_dgp2_formula(self, grid100):
        B = fofr.dgp_beta(2, grid100)
        p = grid100.points
        assert B.values[0, 0] == np.exp(-(p[0] + p[0]))
        assert abs(np.abs(B.values).max() - 1.0) < 0.02

    def test_dgp1_sup_norm(self, grid100):
        B = fofr.dgp_beta(1, grid100)
        # independent series evaluation at the two extreme corners
        p = grid100.points
        for s, t in ((p[0], p[-1]), (p[-1], p[0])):
            val = 1.0
            for j in range(2, 51):
                fj_s = np.sqrt(2) * np.cos((j - 1) * np.pi * s)
                fj_t = np.sqrt(2) * np.cos((j - 1) * np.pi * t)
                val += 4 * (-1) ** (j + 1) * j**-2.0 * fj_s * fj_t
            assert abs(B.values[0 if s == p[0] else -1, -1 if t == p[-1] else 0] - val) < 1e-12
        md = np.abs(B.values).max()
        assert abs(md - 6.0) < 0.15
        corner = np.unravel_index(np.argmax(np.abs(B.values)), B.values.shape)
        assert corner in {(0, 99), (99, 0)}

    def test_dgp3_sup_norm_and_asymmetry(self, grid100):
        B = fofr.dgp_beta(3, grid100)
        assert abs(np.abs(B.values).max() - 11.0) < 0.2
        assert np.abs(B.values - B.values.T).max() > 0.1

    def test_dgp1_symmetry(self, grid100):
        B = fofr.dgp_beta(1, grid100)
        assert np.abs(B.values - B.values.T).max() < 1e-12


class TestPredictors:
    def test_zero_scores_give_zero_curves(self, grid100):
        class ZeroRng:
            def uniform(self, lo, hi, size=None):
                return np.zeros(size)

        raw = _raw_predictors(5, grid100, ZeroRng())
        assert np.all(raw == 0.0)

    def test_uniform_component_variance(self):
        rng = np.random.default_rng(0)
        z = rng.uniform(-np.sqrt(3), np.sqrt(3), size=200_000)
        assert abs(z.var() - 1.0) < 0.01

    def test_sample_covariance_matches_population(self, grid100):
        rng = np.random.default_rng(7)
        X = fofr.dgp_predictors(5000, grid100, rng)
        cov = fofr.empirical_covariance(X)
        F = np.empty((50, 100))
        F[0] = 1.0
        for j in range(2, 51):
            F[j - 1] = np.sqrt(2) * np.cos((j - 1) * np.pi * grid100.points)
        population = ((F / np.arange(1, 51)[:, None]) ** 2).sum(axis=0)
        rel = np.abs(np.diag(cov.matrix) - population) / population
        assert rel.max() < 0.05


class TestErrorCurves:
    def test_zero_amplitude_noiseless(self, grid100):
        spec = fofr.DgpSpec(dgp=2, n=10, G=100, error="i", seed=0)
        rng = np.random.default_rng(1)
        X, Y, beta0 = fofr.generate_dataset(spec, rng, amplitude=0.0)
        raw_x = X.data + X.mean.values
        raw_y = Y.data + Y.mean.values
        assert np.abs(raw_y - grid100.weight * raw_x @ beta0.values).max() < 1e-14

    def test_setting_three_doubles_setting_one(self):
        for dgp in (1, 2, 3):
            nv = noise_variances(dgp, 100)
            assert nv["iii"] == pytest.approx(2.0 * nv["i"], rel=1e-15)

    def test_setting_two_nonnegative(self):
        nv = noise_variances(1, 100)
        assert np.all(nv["ii"] >= 0.0)

    def test_snr_is_ten(self, grid100):
        # fresh draws, independent of the frozen calibration seed
        nv = noise_variances(2, 100)
        rng = np.random.default_rng(999)
        X = _raw_predictors(10_000, grid100, rng)
        ytilde = grid100.weight * X @ fofr.dgp_beta(2, grid100).values
        ratio = grid100.weight * ytilde.var(axis=0).sum() / nv["i"]
        assert abs(ratio - 10.0) < 0.3

    def test_invalid_setting(self):
        with pytest.raises(ValueError):
            fofr.DgpSpec(dgp=1, n=10, error="iv")


class TestStudies:
    def test_single_replicate_quartiles(self):
        spec = fofr.DgpSpec(dgp=2, n=12, G=36, error="i", seed=3)
        report = fofr.run_estimation_study(spec, 1, v=3)
        for q1, q2, q3 in report.quartiles.values():
            assert q1 == q2 == q3

    def test_estimation_determinism(self):
        spec = fofr.DgpSpec(dgp=2, n=12, G=36, error="i", seed=4)
        a = fofr.run_estimation_study(spec, 4, v=3)
        b = fofr.run_estimation_study(spec, 4, v=3)
        assert a.quartiles == b.quartiles

    def test_coverage_nesting_in_alpha(self):
        spec = fofr.DgpSpec(dgp=2, n=16, G=36, error="i", seed=5)
        loose = fofr.run_coverage_study(spec, 8, 30, 0.25, v=3)
        tight = fofr.run_coverage_study(spec, 8, 30, 0.04, v=3)
        assert tight.ucp >= loose.ucp

    def test_power_study_shape(self):
        spec = fofr.DgpSpec(dgp=2, n=16, G=36, error="i", seed=6)
        deltas = np.linspace(0.0, 3.0, 10)
        report = fofr.run_power_study(spec, deltas, replicates=12, Q=30, alpha=0.1, v=3)
        rates = [report.rejection[float(d)] for d in deltas]
        assert report.rejection[3.0] <= 0.1 + 0.03
        inversions = sum(b > a + 1e-12 for a, b in zip(rates, rates[1:]))
        assert inversions <= 2

    def test_power_determinism(self):
        spec = fofr.DgpSpec(dgp=2, n=16, G=36, error="i", seed=7)
        a = fofr.run_power_study(spec, [0.5, 1.0], replicates=4, Q=25, alpha=0.1, v=3)
        b = fofr.run_power_study(spec, [0.5, 1.0], replicates=4, Q=25, alpha=0.1, v=3)
        assert a.rejection == b.rejection

    def test_default_truncation(self):
        assert default_truncation(60) == 6
        assert default_truncation(30) == 4
        # 35^(2/5) = 4.146..., so the ceiling is 5
        assert default_truncation(35) == 5

    def test_report_validation(self):
        with pytest.raises(ValueError):
            fofr.MonteCarloReport(replicates=1, quartiles={"ISE": (2.0, 1.0, 3.0)})
        with pytest.raises(ValueError):
            fofr.MonteCarloReport(replicates=1, rejection={0.5: 1.5})
