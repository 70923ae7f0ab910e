"""Significance tests built on the asymptotic distribution of the corrected
estimator, plus the classical least-squares baseline they are compared to."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .data import Dataset
from .estimator import CorrectedEstimate
from .numerics import (
    SingularMatrixError,
    chi2_cdf,
    chi2_quantile,
    fsum,
    invert_spd,
    mean_weighted_features,
    normal_cdf,
    normal_quantile,
    second_moment,
)

__all__ = [
    "DegenerateCovarianceError",
    "Hypothesis",
    "TestResult",
    "LseInference",
    "model_test",
    "coefficient_test",
    "baseline_lse_inference",
]


class DegenerateCovarianceError(ValueError):
    """Raised when a covariance estimate cannot support a test."""


@dataclass(frozen=True)
class Hypothesis:
    """Null value for the weight vector (all-zero for the canonical test)."""

    w_t: np.ndarray

    def __post_init__(self) -> None:
        w = np.asarray(self.w_t, dtype=float).ravel()
        if not np.isfinite(w).all():
            raise ValueError("null value must be finite")
        object.__setattr__(self, "w_t", w)

    @classmethod
    def zero(cls, d: int) -> "Hypothesis":
        return cls(np.zeros(d))


@dataclass(frozen=True)
class TestResult:
    """Outcome of one significance test.

    Rejection uses strict inequality at the threshold, so ``reject`` holds
    exactly when the p-value drops below ``delta``.
    """

    statistic: float
    threshold: float
    p_value: float
    reject: bool
    kind: str
    delta: float

    def __post_init__(self) -> None:
        if not 0.0 <= self.p_value <= 1.0:
            raise ValueError("p-value must lie in [0, 1]")
        if self.reject != (self.statistic > self.threshold):
            raise ValueError("decision inconsistent with statistic and threshold")

    def to_json_dict(self) -> dict:
        return {
            "kind": self.kind,
            "statistic": self.statistic,
            "threshold": self.threshold,
            "p_value": self.p_value,
            "reject": self.reject,
            "delta": self.delta,
        }


def _model_test(w: np.ndarray, cov: np.ndarray, w_t: np.ndarray, delta: float) -> TestResult:
    d = w.shape[0]
    if w_t.shape[0] != d:
        raise ValueError("null value dimension mismatch")
    try:
        cov_inv = invert_spd(cov)
    except SingularMatrixError as exc:
        raise DegenerateCovarianceError(f"covariance is degenerate: {exc}") from exc
    diff = w - w_t
    statistic = float(diff @ cov_inv @ diff)
    threshold = chi2_quantile(1.0 - delta, d)
    p_value = 1.0 - chi2_cdf(statistic, d)
    return TestResult(statistic, threshold, p_value, statistic > threshold, "model", delta)


def _coefficient_test(w_j: float, var_j: float, w_tj: float, delta: float) -> TestResult:
    if not np.isfinite(var_j) or var_j <= 0.0:
        raise DegenerateCovarianceError(f"coefficient variance {var_j!r} is not positive")
    statistic = float(abs(w_j - w_tj) / math.sqrt(var_j))
    threshold = normal_quantile(1.0 - delta / 2.0)
    p_value = 2.0 * (1.0 - normal_cdf(statistic))
    return TestResult(statistic, threshold, p_value, statistic > threshold, "coefficient", delta)


def model_test(est: CorrectedEstimate, h: Hypothesis, delta: float) -> TestResult:
    """Joint chi-squared test of all coordinates against the null vector."""
    _check_delta(delta)
    return _model_test(est.w_e, est.sigma_e_sq, h.w_t, delta)


def coefficient_test(est: CorrectedEstimate, j: int, w_tj: float, delta: float) -> TestResult:
    """Two-sided normal test of a single coordinate against ``w_tj``."""
    _check_delta(delta)
    if not 0 <= j < est.d:
        raise ValueError(f"coordinate {j} out of range for d={est.d}")
    return _coefficient_test(float(est.w_e[j]), float(est.sigma_e_sq[j, j]), float(w_tj), delta)


def _check_delta(delta: float) -> None:
    if not 0.0 < delta < 1.0:
        raise ValueError("delta must lie in (0, 1)")


@dataclass(frozen=True)
class LseInference:
    """Classical least-squares fit with homoskedastic covariance and tests."""

    weights: np.ndarray
    covariance: np.ndarray
    sigma_sq: float
    model: TestResult
    coefficients: tuple[TestResult, ...]


def baseline_lse_inference(dataset: Dataset, delta: float, h: Hypothesis) -> LseInference:
    """Ordinary least squares on the full labeled set with classical inference.

    Uses the textbook covariance ``sigma^2 (sum_i x_i x_i^T)^{-1}`` with
    ``sigma^2 = RSS / (N - d)``; exactly interpolated data leaves a zero
    variance estimate and raises :class:`DegenerateCovarianceError`.
    """
    _check_delta(delta)
    n, d = dataset.n, dataset.d
    if n <= d:
        raise ValueError(f"need more than d={d} labeled samples, got {n}")
    x = dataset.features
    y = dataset.labels
    moment_inv = invert_spd(second_moment(x))
    w = moment_inv @ mean_weighted_features(x, y)
    residuals = y - x @ w
    rss = fsum(residuals * residuals)
    sigma_sq = rss / (n - d)
    if sigma_sq <= 0.0:
        raise DegenerateCovarianceError(
            "residual variance is zero; classical inference is degenerate"
        )
    cov = sigma_sq * moment_inv / n
    cov = (cov + cov.T) / 2.0
    model = _model_test(w, cov, h.w_t, delta)
    coefficients = tuple(
        _coefficient_test(float(w[j]), float(cov[j, j]), float(h.w_t[j]), delta)
        for j in range(d)
    )
    return LseInference(w, cov, sigma_sq, model, coefficients)
