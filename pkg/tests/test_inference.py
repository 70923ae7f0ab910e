import math

import numpy as np
import pytest
from conftest import make_estimate, random_spd
from hypothesis import given, settings
from hypothesis import strategies as st

from reslin import (
    Dataset,
    DegenerateCovarianceError,
    Hypothesis,
    SingularMatrixError,
    baseline_lse_inference,
    coefficient_test,
    model_test,
    normal_quantile,
    seeded_rng,
)


class TestModelTest:
    def test_null_exactly_met(self):
        est = make_estimate([1.0, -2.0], np.eye(2))
        res = model_test(est, Hypothesis(np.array([1.0, -2.0])), 0.05)
        assert res.statistic == 0.0
        assert res.p_value == pytest.approx(1.0)
        assert not res.reject

    def test_statistic_five_not_rejected(self):
        est = make_estimate([math.sqrt(5.0), 0.0], np.eye(2))
        res = model_test(est, Hypothesis.zero(2), 0.05)
        assert res.statistic == pytest.approx(5.0, rel=1e-12)
        assert res.threshold == pytest.approx(5.9915, abs=1e-4)
        assert not res.reject
        assert res.p_value == pytest.approx(math.exp(-2.5), abs=1e-10)

    def test_statistic_seven_rejected(self):
        est = make_estimate([math.sqrt(7.0), 0.0], np.eye(2))
        res = model_test(est, Hypothesis.zero(2), 0.05)
        assert res.reject
        assert res.p_value == pytest.approx(math.exp(-3.5), abs=1e-10)

    def test_degenerate_covariance(self):
        est = make_estimate([1.0, 1.0], np.zeros((2, 2)))
        with pytest.raises(DegenerateCovarianceError):
            model_test(est, Hypothesis.zero(2), 0.05)

    def test_diagonal_reduces_to_squared_coefficient(self):
        variances = np.array([0.25, 4.0])
        est = make_estimate([0.9, 0.0], np.diag(variances))
        m = model_test(est, Hypothesis.zero(2), 0.05)
        c = coefficient_test(est, 0, 0.0, 0.05)
        assert m.statistic == pytest.approx(c.statistic**2, abs=1e-10)

    def test_basis_change_invariance(self):
        rng = seeded_rng(60)
        for _ in range(10):
            w = rng.standard_normal(2)
            sigma = random_spd(rng, 2, scale=0.3)
            w_t = rng.standard_normal(2)
            t = rng.standard_normal((2, 2)) + 3.0 * np.eye(2)
            base = model_test(make_estimate(w, sigma), Hypothesis(w_t), 0.05)
            moved = model_test(
                make_estimate(t @ w, t @ sigma @ t.T), Hypothesis(t @ w_t), 0.05
            )
            assert moved.statistic == pytest.approx(base.statistic, rel=1e-8)


class TestCoefficientTest:
    def test_null_met(self):
        est = make_estimate([0.5, 0.0], np.eye(2))
        res = coefficient_test(est, 0, 0.5, 0.05)
        assert res.statistic == 0.0
        assert res.p_value == pytest.approx(1.0)
        assert not res.reject

    def test_boundary_statistic(self):
        stat = 1.959964
        est = make_estimate([stat, 0.0], np.eye(2))
        res = coefficient_test(est, 0, 0.0, 0.05)
        assert not res.reject  # strict inequality at the threshold
        assert res.p_value == pytest.approx(0.05, abs=1e-6)

    def test_statistic_three_rejected(self):
        est = make_estimate([3.0, 0.0], np.eye(2))
        res = coefficient_test(est, 0, 0.0, 0.05)
        assert res.reject
        assert res.p_value == pytest.approx(0.0027, abs=1e-4)

    def test_zero_variance_entry(self):
        est = make_estimate([1.0, 0.0], np.diag([0.0, 1.0]))
        with pytest.raises(DegenerateCovarianceError):
            coefficient_test(est, 0, 0.0, 0.05)

    def test_coordinate_out_of_range(self):
        est = make_estimate([1.0, 0.0], np.eye(2))
        with pytest.raises(ValueError):
            coefficient_test(est, 2, 0.0, 0.05)


class TestDecisionCoherence:
    @given(
        st.floats(0.0, 40.0),
        st.floats(0.005, 0.5),
    )
    @settings(max_examples=120, deadline=None)
    def test_model_test_reject_iff_p_below_delta(self, shift, delta):
        est = make_estimate([math.sqrt(shift), 0.0], np.eye(2))
        res = model_test(est, Hypothesis.zero(2), delta)
        if abs(res.p_value - delta) > 1e-9:
            assert res.reject == (res.p_value < delta)

    @given(
        st.floats(-6.0, 6.0),
        st.floats(0.005, 0.5),
    )
    @settings(max_examples=120, deadline=None)
    def test_coefficient_test_reject_iff_p_below_delta(self, value, delta):
        est = make_estimate([value, 0.0], np.eye(2))
        res = coefficient_test(est, 0, 0.0, delta)
        if abs(res.p_value - delta) > 1e-9:
            assert res.reject == (res.p_value < delta)


class TestNullCalibration:
    def test_model_test_rejection_rate(self):
        rng = seeded_rng(61)
        sigma = random_spd(rng, 2, scale=0.2)
        chol = np.linalg.cholesky(sigma)
        w_t = np.array([0.3, -1.0])
        delta = 0.05
        hits = 0
        n = 10**4
        for _ in range(n):
            w = w_t + chol @ rng.standard_normal(2)
            if model_test(make_estimate(w, sigma), Hypothesis(w_t), delta).reject:
                hits += 1
        assert abs(hits / n - delta) <= 0.02

    def test_coefficient_test_rejection_rate(self):
        rng = seeded_rng(62)
        delta = 0.05
        var = 0.49
        hits = 0
        n = 10**4
        draws = 0.7 * rng.standard_normal(n)
        for z in draws:
            est = make_estimate([z, 0.0], np.diag([var, 1.0]))
            if coefficient_test(est, 0, 0.0, delta).reject:
                hits += 1
        assert abs(hits / n - delta) <= 0.02


class TestBaselineLse:
    def test_exactly_linear_data_degenerate(self):
        x = seeded_rng(63).uniform(0.0, 1.0, 30)
        ds = Dataset.from_raw(x.reshape(-1, 1), 2.0 * x + 1.0)
        with pytest.raises(DegenerateCovarianceError):
            baseline_lse_inference(ds, 0.05, Hypothesis.zero(2))

    def test_reported_slope_std(self):
        rng = seeded_rng(64)
        x = rng.uniform(0.0, 1.0, 100)
        y = x + 0.01 * rng.standard_normal(100)
        ds = Dataset.from_raw(x.reshape(-1, 1), y)
        inf = baseline_lse_inference(ds, 0.05, Hypothesis(np.array([0.0, 1.0])))
        slope_std = math.sqrt(inf.covariance[1, 1])
        assert slope_std == pytest.approx(0.0035, rel=0.4)

    def test_recovers_line_and_rejects_zero_null(self):
        rng = seeded_rng(65)
        x = rng.uniform(0.0, 1.0, 200)
        y = 2.0 * x + 1.0 + 0.05 * rng.standard_normal(200)
        ds = Dataset.from_raw(x.reshape(-1, 1), y)
        inf = baseline_lse_inference(ds, 0.05, Hypothesis.zero(2))
        np.testing.assert_allclose(inf.weights, [1.0, 2.0], atol=0.05)
        assert inf.model.reject
        assert inf.coefficients[1].reject

    def test_singular_design(self):
        feats = np.ones((10, 2))
        ds = Dataset(feats, np.arange(10.0))
        with pytest.raises(SingularMatrixError):
            baseline_lse_inference(ds, 0.05, Hypothesis.zero(2))

    def test_needs_more_samples_than_dims(self):
        ds = Dataset.from_raw(np.array([[0.1], [0.4]]), [1.0, 2.0])
        with pytest.raises(ValueError):
            baseline_lse_inference(ds, 0.05, Hypothesis.zero(2))


class TestResultContract:
    def test_json_fields(self):
        est = make_estimate([1.0, 0.0], np.eye(2))
        doc = model_test(est, Hypothesis.zero(2), 0.05).to_json_dict()
        assert set(doc) == {"kind", "statistic", "threshold", "p_value", "reject", "delta"}

    def test_threshold_matches_quantile(self):
        est = make_estimate([1.0, 0.0], np.eye(2))
        res = coefficient_test(est, 0, 0.0, 0.1)
        assert res.threshold == pytest.approx(normal_quantile(0.95), abs=1e-12)
