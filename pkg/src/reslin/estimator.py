"""Core estimation machinery: inverse second-moment estimates, the linear
approximation of a trained predictor, the residual-corrected estimator with
its covariance, and the concentration-bound calculators.

The estimator targets the population least-squares projection of an unknown
ground-truth function onto linear functions.  A predictor fitted on the train
split provides a first linear approximation; feature-weighted residuals from
the validation split supply an additive correction whose average is exactly
the gap between that approximation and the target, making the corrected
estimator unbiased given the fitted predictor.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .data import BoundsPair, Dataset, empirical_bounds
from .models import LinearPredictor, Predictor, predict_batch
from .numerics import (
    EigenBounds,
    SingularMatrixError,
    eigen_bounds,
    fsum,
    invert_spd,
    mean_weighted_features,
    second_moment,
)

__all__ = [
    "SecondMomentEstimate",
    "LinearApprox",
    "ResidualStats",
    "CorrectedEstimate",
    "ConfidenceParams",
    "ConcentrationConstants",
    "BoundReport",
    "A_HAT_SOURCES",
    "estimate_second_moment_inverse",
    "exact_second_moment_inverse",
    "exact_linear_approx_analytic",
    "linear_approx_of_predictor",
    "residuals_z",
    "corrected_estimator",
    "lemma1_range_bound",
    "mse_bound",
    "second_moment_concentration_bound",
    "bias_bound",
    "bias_bound_from_constants",
]

A_HAT_SOURCES = ("validation-only", "all-data", "exact-analytic")

# Inverse of the population second moment of (1, u) with u ~ U(0, 1):
# E(xx^T) = [[1, 1/2], [1/2, 1/3]].
_UNIFORM_INTERCEPT_A = np.array([[4.0, -6.0], [-6.0, 12.0]])


@dataclass(frozen=True)
class SecondMomentEstimate:
    """Inverse mean outer product of the feature vectors, with provenance."""

    a_hat: np.ndarray
    source: str
    n_used: int
    eigen: EigenBounds

    def __post_init__(self) -> None:
        if self.source not in A_HAT_SOURCES:
            raise ValueError(f"unknown second-moment source {self.source!r}")
        if self.eigen.m_hat <= 0.0:
            raise SingularMatrixError("second-moment inverse must be positive definite")

    @property
    def d(self) -> int:
        return self.a_hat.shape[0]


@dataclass(frozen=True)
class LinearApprox:
    """Weights of the best linear approximation of a predictor."""

    w1: np.ndarray
    provenance: str

    def __post_init__(self) -> None:
        w = np.asarray(self.w1, dtype=float).ravel()
        if not np.isfinite(w).all():
            raise ValueError("approximation weights must be finite")
        object.__setattr__(self, "w1", w)


@dataclass(frozen=True)
class ResidualStats:
    """Feature-weighted validation residuals z_i = x_i (y_i - f(x_i)).

    ``d_hat`` is the sample covariance of the z vectors with divisor
    ``n - d``, matching the covariance estimate the significance tests use.
    """

    z_samples: np.ndarray
    z_bar: np.ndarray
    d_hat: np.ndarray
    n: int


@dataclass(frozen=True)
class CorrectedEstimate:
    """Residual-corrected weights and their estimated covariance."""

    w_e: np.ndarray
    sigma_e_sq: np.ndarray
    w1: LinearApprox
    residuals: ResidualStats
    second_moment: SecondMomentEstimate

    @property
    def d(self) -> int:
        return self.w_e.shape[0]

    def reported_std(self) -> np.ndarray:
        return np.sqrt(np.clip(np.diag(self.sigma_e_sq), 0.0, None))

    def to_json_dict(self) -> dict:
        return {
            "w_e": [float(v) for v in self.w_e],
            "sigma_e_sq": self.sigma_e_sq.tolist(),
            "w1": [float(v) for v in self.w1.w1],
            "w1_provenance": self.w1.provenance,
            "z_bar": [float(v) for v in self.residuals.z_bar],
            "n_validation": self.residuals.n,
            "a_hat_source": self.second_moment.source,
            "a_hat_n_used": self.second_moment.n_used,
        }


@dataclass(frozen=True)
class ConfidenceParams:
    """Failure probabilities for the concentration bounds."""

    delta: float
    delta0: float = 0.1

    def __post_init__(self) -> None:
        if not 0.0 < self.delta < 1.0:
            raise ValueError("delta must lie in (0, 1)")
        if not 0.0 < self.delta0 < 1.0:
            raise ValueError("delta0 must lie in (0, 1)")


@dataclass(frozen=True)
class ConcentrationConstants:
    """Constants entering the concentration bounds.

    ``K`` bounds the feature norm relative to its root mean square, ``c`` is
    the unspecified absolute constant of the second-moment concentration
    bound (defaults to 1; it scales diagnostic reports only, never the
    estimator itself), ``r`` is the assumed range of the bounded quantity,
    and ``m``/``big_m`` bracket the eigenvalues of the inverse second moment.
    """

    k: float = 1.0
    c: float = 1.0
    r: BoundsPair = field(default_factory=lambda: BoundsPair(0.0, 1.0, source="assumed"))
    m: float = 1.0
    big_m: float = 1.0

    def __post_init__(self) -> None:
        if self.k < 1.0:
            raise ValueError("K must be at least 1")
        if self.c <= 0.0:
            raise ValueError("C must be positive")
        if not 0.0 < self.m <= self.big_m:
            raise ValueError("need 0 < m <= M")

    @classmethod
    def estimated_from(
        cls,
        features: np.ndarray,
        a_hat: "SecondMomentEstimate",
        c: float = 1.0,
        r: BoundsPair | None = None,
    ) -> "ConcentrationConstants":
        """Estimate K from the feature pool and m, M from the inverse moment."""
        x = np.asarray(features, dtype=float)
        norms_sq = (x * x).sum(axis=1)
        k = float(np.sqrt(norms_sq.max() / norms_sq.mean()))
        return cls(
            k=max(1.0, k),
            c=c,
            r=r if r is not None else BoundsPair(0.0, 1.0, source="assumed"),
            m=a_hat.eigen.m_hat,
            big_m=a_hat.eigen.M_hat,
        )


@dataclass(frozen=True)
class BoundReport:
    """Evaluated concentration bounds with every input echoed for audit.

    ``caveat`` flags reports that depend on the unspecified absolute constant.
    """

    epsilon: float
    g_gap_bound: float
    w_gap_bound: float
    confidence: float
    coordinate_bounds: dict[int, float] | None = None
    inputs: dict | None = None
    caveat: str = ""

    def to_json_dict(self) -> dict:
        out = {
            "epsilon": self.epsilon,
            "g_gap_bound": self.g_gap_bound,
            "w_gap_bound": self.w_gap_bound,
            "confidence": self.confidence,
        }
        if self.coordinate_bounds is not None:
            out["coordinate_bounds"] = {str(j): v for j, v in self.coordinate_bounds.items()}
        if self.inputs is not None:
            out["inputs"] = self.inputs
        if self.caveat:
            out["caveat"] = self.caveat
        return out


# ---------------------------------------------------------------------------
# Estimation operations
# ---------------------------------------------------------------------------


def estimate_second_moment_inverse(features: np.ndarray, source: str) -> SecondMomentEstimate:
    """Invert the empirical second moment of a feature pool."""
    x = np.asarray(features, dtype=float)
    if x.ndim != 2:
        raise ValueError("features must be an (n, d) array")
    n, d = x.shape
    if n < d:
        raise SingularMatrixError(f"need at least d={d} feature vectors, got {n}")
    a_hat = invert_spd(second_moment(x))
    return SecondMomentEstimate(a_hat, source, n, eigen_bounds(a_hat))


def exact_second_moment_inverse() -> SecondMomentEstimate:
    """Population inverse second moment for intercept-featurized U(0, 1) inputs."""
    a = _UNIFORM_INTERCEPT_A.copy()
    return SecondMomentEstimate(a, "exact-analytic", 0, eigen_bounds(a))


def exact_linear_approx_analytic(ground_truth: str, constant: float = 0.0) -> np.ndarray:
    """Closed-form best linear approximation for the built-in ground truths.

    Inputs are intercept-featurized U(0, 1) draws, so the weights come from
    the population moment integrals:

    - ``square``  (y = u^2):      (-1/6, 1)
    - ``linear``  (y = u):        (0, 1)
    - ``constant`` (y = c):       (c, 0)
    """
    if ground_truth == "square":
        return np.array([-1.0 / 6.0, 1.0])
    if ground_truth == "linear":
        return np.array([0.0, 1.0])
    if ground_truth == "constant":
        return np.array([float(constant), 0.0])
    raise ValueError(f"no analytic linear approximation for scenario {ground_truth!r}")


def linear_approx_of_predictor(
    p: Predictor,
    features: np.ndarray,
    a_hat: SecondMomentEstimate,
    intercept: bool = True,
) -> LinearApprox:
    """Best linear approximation of a predictor over a feature pool.

    Computes ``A_hat @ mean(x * f(raw(x)))`` with ``raw(x)`` the features
    minus the intercept column.  A linear predictor is its own best linear
    approximation, so it short-circuits to its exact weights regardless of
    the pool.
    """
    if isinstance(p, LinearPredictor):
        return LinearApprox(p.weights.copy(), provenance="linear-passthrough")
    x = np.asarray(features, dtype=float)
    if x.ndim != 2 or x.shape[0] == 0:
        raise ValueError("a nonlinear predictor needs a non-empty feature pool")
    raw = x[:, 1:] if intercept else x
    preds = predict_batch(p, raw)
    moment = mean_weighted_features(x, preds)
    return LinearApprox(a_hat.a_hat @ moment, provenance=f"pool[n={x.shape[0]}]")


def residuals_z(p: Predictor, validation: Dataset) -> ResidualStats:
    """Feature-weighted residuals of ``p`` on the validation split.

    The observed label stands in for the unknown ground-truth value, which
    keeps the statistics well defined under label noise.  Requires
    ``n > d`` so the covariance divisor ``n - d`` stays positive.
    """
    n, d = validation.n, validation.d
    if n <= d:
        raise ValueError(f"need more than d={d} validation samples, got {n}")
    errors = validation.labels - predict_batch(p, validation.raw_features)
    z = validation.features * errors[:, None]
    z_bar = np.array([fsum(z[:, j]) / n for j in range(d)])
    centered = z - z_bar
    d_hat = centered.T @ centered / (n - d)
    d_hat = (d_hat + d_hat.T) / 2.0
    return ResidualStats(z, z_bar, d_hat, n)


def corrected_estimator(
    w1: LinearApprox,
    rs: ResidualStats,
    a_hat: SecondMomentEstimate,
) -> CorrectedEstimate:
    """Residual-corrected estimator ``w_e = w1 + A_hat z_bar``.

    Its covariance estimate is ``(1/n) A_hat D_hat A_hat``, feeding the
    asymptotic significance tests.
    """
    d = w1.w1.shape[0]
    if a_hat.d != d or rs.z_bar.shape[0] != d:
        raise ValueError("dimension mismatch between approximation, residuals and A_hat")
    w_e = w1.w1 + a_hat.a_hat @ rs.z_bar
    sigma = a_hat.a_hat @ rs.d_hat @ a_hat.a_hat / rs.n
    sigma = (sigma + sigma.T) / 2.0
    return CorrectedEstimate(w_e, sigma, w1, rs, a_hat)


# ---------------------------------------------------------------------------
# Concentration bounds
# ---------------------------------------------------------------------------


def lemma1_range_bound(empirical: BoundsPair, n: int, delta0: float) -> float:
    """Inflated empirical range ``(upper - lower) * delta0 ** (-1/(n-1))``.

    Upper-bounds an unknown population range from its empirical counterpart
    under a uniform prior on the range; the inflation vanishes as the sample
    grows or as ``delta0`` approaches 1.
    """
    if n < 2:
        raise ValueError("range inflation needs at least two samples")
    if not 0.0 < delta0 < 1.0:
        raise ValueError("delta0 must lie in (0, 1)")
    return empirical.width * delta0 ** (-1.0 / (n - 1))


def mse_bound(
    losses,
    cc: ConcentrationConstants,
    cp: ConfidenceParams,
    d: int,
    use_empirical_range: bool = False,
) -> BoundReport:
    """Deviation bounds for the linear approximation driven by validation loss.

    ``epsilon = sqrt(mean_loss + R * sqrt(log(1/delta) / (2 n)))`` with ``R``
    either the assumed range or, with ``use_empirical_range``, the inflated
    empirical loss range (costing ``delta0`` extra failure probability).
    The function-space gap is bounded by ``sqrt(d) (M/m) epsilon`` and the
    weight gap by ``sqrt(d) (M/sqrt(m)) epsilon``.
    """
    n = losses.n
    if use_empirical_range:
        if n < 2:
            raise ValueError("empirical range mode needs at least two losses")
        r = lemma1_range_bound(empirical_bounds(losses.losses), n, cp.delta0)
        confidence = 1.0 - cp.delta - cp.delta0
    else:
        r = cc.r.width
        confidence = 1.0 - cp.delta
    epsilon = math.sqrt(losses.mean + r * math.sqrt(math.log(1.0 / cp.delta) / (2.0 * n)))
    g_gap = math.sqrt(d) * (cc.big_m / cc.m) * epsilon
    w_gap = math.sqrt(d) * (cc.big_m / math.sqrt(cc.m)) * epsilon
    return BoundReport(
        epsilon=epsilon,
        g_gap_bound=g_gap,
        w_gap_bound=w_gap,
        confidence=confidence,
        inputs={
            "n": n,
            "mean_loss": losses.mean,
            "range": r,
            "use_empirical_range": use_empirical_range,
            "delta": cp.delta,
            "delta0": cp.delta0 if use_empirical_range else None,
            "d": d,
            "m": cc.m,
            "M": cc.big_m,
        },
    )


def second_moment_concentration_bound(
    n: int,
    d: int,
    cc: ConcentrationConstants,
    delta: float,
) -> float:
    """Deviation bound for the inverse second-moment estimate from n samples.

    ``C (M^2/m) (sqrt(K^2 d log(4d/delta) / n) + K^2 d log(4d/delta) / n)``;
    the absolute constant ``C`` is not pinned down by theory, so treat the
    value as a diagnostic scale, not a certified number.  Any positive
    ``delta`` below ``4d`` keeps the log factor real; values of interest
    live in (0, 1).
    """
    if n < 1:
        raise ValueError("n must be positive")
    if not 0.0 < delta < 4.0 * d:
        raise ValueError("delta must lie in (0, 4d)")
    t = cc.k**2 * d * math.log(4.0 * d / delta) / n
    return cc.c * (cc.big_m**2 / cc.m) * (math.sqrt(t) + t)


def bias_bound_from_constants(
    n_validation: int,
    n_total: int,
    d: int,
    cc: ConcentrationConstants,
    cp: ConfidenceParams,
    z_bar_norm: float,
    max_z_norm: float = 0.0,
    empirical_range: float | None = None,
) -> float:
    """Coordinate-wise deviation bound for the corrected estimator.

    Without ``empirical_range`` this is the two-term bound: an averaging term
    ``R * sqrt(log(4/delta) / (2 n))`` plus the second-moment substitution
    term scaled by ``||z_bar||`` (confidence ``1 - delta``).  With an
    empirical range the averaging term uses the inflated range widened by
    twice the substitution error ``b`` computed at ``max ||z_i||``, and the
    total is that plus ``b`` (confidence ``1 - 3 delta - delta0``).
    """
    if n_validation < 1:
        raise ValueError("n_validation must be positive")
    hoeffding = math.sqrt(math.log(4.0 / cp.delta) / (2.0 * n_validation))
    if n_total > 0:
        t = cc.k**2 * d * math.log(4.0 * d / cp.delta) / n_total
        nu = math.sqrt(t) + t
    else:
        # An exact inverse second moment carries no substitution error.
        nu = 0.0
    scale = cc.c * (cc.big_m**2 / cc.m)
    if empirical_range is None:
        return cc.r.width * hoeffding + scale * z_bar_norm * nu
    if n_validation < 2:
        raise ValueError("empirical range mode needs at least two samples")
    b = scale * max_z_norm * nu
    inflation = cp.delta0 ** (-1.0 / (n_validation - 1))
    return (empirical_range + 2.0 * b) * inflation * hoeffding + b


def bias_bound(
    rs: ResidualStats,
    a_hat: SecondMomentEstimate,
    cc: ConcentrationConstants,
    cp: ConfidenceParams,
    j: int,
    use_empirical_range: bool = False,
) -> float:
    """Evaluate the coordinate-wise bound from residual statistics.

    In empirical-range mode the range is measured from the per-sample values
    of row ``j`` of ``A_hat`` applied to the residual vectors.
    """
    d = rs.z_bar.shape[0]
    if not 0 <= j < d:
        raise ValueError(f"coordinate {j} out of range for d={d}")
    z_bar_norm = float(np.linalg.norm(rs.z_bar))
    if not use_empirical_range:
        return bias_bound_from_constants(
            rs.n, a_hat.n_used, d, cc, cp, z_bar_norm=z_bar_norm
        )
    ajz = rs.z_samples @ a_hat.a_hat[j]
    max_z_norm = float(np.sqrt((rs.z_samples**2).sum(axis=1).max()))
    return bias_bound_from_constants(
        rs.n,
        a_hat.n_used,
        d,
        cc,
        cp,
        z_bar_norm=z_bar_norm,
        max_z_norm=max_z_norm,
        empirical_range=float(ajz.max() - ajz.min()),
    )
