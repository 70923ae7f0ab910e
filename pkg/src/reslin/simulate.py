"""Scenario generation, trial execution, experiment orchestration, metric
computation (KS, efficiency, bias, rejection rates), and result export.

An experiment runs ``repetitions x trials`` independent simulations.  Each
trial draws a fresh dataset from the configured scenario, fits the chosen
method, and tests the estimate against the known analytic target; per-trial
statistics are aggregated per repetition and summarized as mean plus a 95%
confidence half-width (1.96 times the std over repetitions).

Every trial owns an independent random substream derived from
``(base_seed, repetition, trial)``, so results are bit-identical across runs
and across worker counts.
"""

from __future__ import annotations

import dataclasses
import datetime
import json
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .data import Dataset, split_dataset
from .estimator import (
    A_HAT_SOURCES,
    corrected_estimator,
    estimate_second_moment_inverse,
    exact_linear_approx_analytic,
    exact_second_moment_inverse,
    linear_approx_of_predictor,
    residuals_z,
)
from .inference import (
    DegenerateCovarianceError,
    Hypothesis,
    baseline_lse_inference,
    coefficient_test,
    model_test,
)
from .models import TrainConfig, TrainingDivergedError, train_linear, train_mlp
from .numerics import SingularMatrixError, chi2_cdf, derive_seed, ks_statistic, normal_cdf, seeded_rng

__all__ = [
    "GROUND_TRUTHS",
    "METHODS",
    "ScenarioConfig",
    "TrialRecord",
    "MetricsTable",
    "ExperimentResult",
    "generate_scenario_data",
    "run_trial",
    "run_experiment",
    "run_bias_experiment",
    "export_results",
    "TRIALS_CSV_COLUMNS",
]

GROUND_TRUTHS = ("square", "linear")
METHODS = ("baseline", "ours-l", "ours-nn")

TRIALS_CSV_COLUMNS = (
    "repetition,trial,method,w0,w1,std0,std1,u0,u1,chi2,"
    "reject_model,reject_w0,reject_w1,failed"
)


@dataclass(frozen=True)
class ScenarioConfig:
    """Full description of one simulation experiment.

    ``ground_truth`` picks the label function on U(0, 1) inputs: ``square``
    is the noiseless y = x^2 benchmark, ``linear`` is y = x plus centered
    Gaussian noise of scale ``noise_sigma``.  ``a_hat_source`` defaults per
    method: the linear-form method inverts the validation second moment only,
    the network method uses every available feature vector.
    """

    ground_truth: str = "square"
    noise_sigma: float = 0.0
    n_labeled: int = 100
    n_unlabeled: int = 50000
    split_ratio: float = 0.7
    method: str = "ours-l"
    a_hat_source: str | None = None
    trials: int = 1000
    repetitions: int = 6
    base_seed: int = 0
    delta: float = 0.05
    train: TrainConfig = field(default_factory=TrainConfig)

    def __post_init__(self) -> None:
        if self.ground_truth not in GROUND_TRUTHS:
            raise ValueError(f"unknown ground truth {self.ground_truth!r}")
        if self.method not in METHODS:
            raise ValueError(f"unknown method {self.method!r}")
        if self.a_hat_source is not None and self.a_hat_source not in A_HAT_SOURCES:
            raise ValueError(f"unknown a_hat_source {self.a_hat_source!r}")
        if self.noise_sigma < 0.0:
            raise ValueError("noise_sigma cannot be negative")
        if self.ground_truth == "square" and self.noise_sigma != 0.0:
            raise ValueError("the square scenario is noiseless")
        if self.n_labeled < 2:
            raise ValueError("need at least two labeled samples")
        if self.n_unlabeled < 0:
            raise ValueError("n_unlabeled cannot be negative")
        if not 0.0 < self.split_ratio < 1.0:
            raise ValueError("split_ratio must lie in (0, 1)")
        if self.trials < 1 or self.repetitions < 1:
            raise ValueError("trials and repetitions must be at least 1")
        if not 0.0 < self.delta < 1.0:
            raise ValueError("delta must lie in (0, 1)")
        if self.base_seed < 0:
            raise ValueError("base_seed must be non-negative")

    @property
    def resolved_a_hat_source(self) -> str:
        if self.a_hat_source is not None:
            return self.a_hat_source
        return "all-data" if self.method == "ours-nn" else "validation-only"

    def analytic_weights(self) -> np.ndarray:
        return exact_linear_approx_analytic(self.ground_truth)

    def to_dict(self) -> dict:
        out = dataclasses.asdict(self)
        out["train"]["hidden_sizes"] = list(self.train.hidden_sizes)
        return out

    @classmethod
    def from_dict(cls, raw: dict) -> "ScenarioConfig":
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(raw) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        kwargs = dict(raw)
        if "train" in kwargs and kwargs["train"] is not None:
            train_raw = dict(kwargs["train"])
            train_known = {f.name for f in dataclasses.fields(TrainConfig)}
            train_unknown = set(train_raw) - train_known
            if train_unknown:
                raise ValueError(f"unknown train config keys: {sorted(train_unknown)}")
            if "hidden_sizes" in train_raw:
                train_raw["hidden_sizes"] = tuple(train_raw["hidden_sizes"])
            kwargs["train"] = TrainConfig(**train_raw)
        return cls(**kwargs)

    @classmethod
    def from_json_file(cls, path: str | Path) -> "ScenarioConfig":
        with Path(path).open(encoding="utf-8") as fh:
            raw = json.load(fh)
        if not isinstance(raw, dict):
            raise ValueError(f"{path}: config must be a JSON object")
        return cls.from_dict(raw)


@dataclass(frozen=True)
class TrialRecord:
    """Per-trial estimate, covariance, test statistics and decisions."""

    trial: int
    repetition: int
    method: str
    weights: np.ndarray
    covariance: np.ndarray
    u: np.ndarray
    chi2: float
    reported_std: np.ndarray
    reject_model: bool
    reject_coef: tuple[bool, ...]
    seed: int
    failed: bool = False
    failure_reason: str = ""


class MetricsTable:
    """Per-repetition metric values keyed by ``(metric, coordinate)``.

    Aggregates are mean and a 95% confidence half-width computed as 1.96
    times the (population) standard deviation of the repetition values.
    """

    def __init__(self, values: dict[tuple[str, str], list[float]]):
        self._values = {k: [float(v) for v in vs] for k, vs in values.items()}

    def keys(self) -> list[tuple[str, str]]:
        return list(self._values.keys())

    def values(self, metric: str, coordinate: str = "") -> list[float]:
        return list(self._values[(metric, coordinate)])

    def mean(self, metric: str, coordinate: str = "") -> float:
        vs = self._values[(metric, coordinate)]
        return float(np.mean(vs))

    def ci95(self, metric: str, coordinate: str = "") -> float:
        vs = self._values[(metric, coordinate)]
        return float(1.96 * np.std(vs))

    def rows(self) -> list[tuple[str, str, str, float]]:
        """Flat (metric, coordinate, repetition, value) rows incl. aggregates."""
        out = []
        for (metric, coord), vs in self._values.items():
            for rep, v in enumerate(vs):
                out.append((metric, coord, str(rep), v))
            out.append((metric, coord, "mean", self.mean(metric, coord)))
            out.append((metric, coord, "ci95", self.ci95(metric, coord)))
        return out


@dataclass(frozen=True)
class ExperimentResult:
    config: ScenarioConfig
    metrics: MetricsTable
    records: tuple[TrialRecord, ...]
    repetition_seeds: tuple[int, ...]

    @property
    def failed_per_repetition(self) -> list[int]:
        counts = [0] * self.config.repetitions
        for rec in self.records:
            if rec.failed:
                counts[rec.repetition] += 1
        return counts


# ---------------------------------------------------------------------------
# Data generation and single-trial execution
# ---------------------------------------------------------------------------


def generate_scenario_data(cfg: ScenarioConfig, seed: int) -> Dataset:
    """Draw one dataset from the scenario: labeled inputs, labels, then the
    unlabeled pool, all from a single seeded stream."""
    rng = seeded_rng(seed)
    x = rng.uniform(0.0, 1.0, cfg.n_labeled)
    if cfg.ground_truth == "square":
        y = x * x
    else:
        y = x.copy()
        if cfg.noise_sigma > 0.0:
            y = y + cfg.noise_sigma * rng.standard_normal(cfg.n_labeled)
    x_unlabeled = rng.uniform(0.0, 1.0, cfg.n_unlabeled) if cfg.n_unlabeled else None
    return Dataset.from_raw(
        x.reshape(-1, 1),
        y,
        None if x_unlabeled is None else x_unlabeled.reshape(-1, 1),
        intercept=True,
    )


_TRIAL_ERRORS = (SingularMatrixError, TrainingDivergedError, DegenerateCovarianceError)


def run_trial(cfg: ScenarioConfig, trial_seed: int) -> TrialRecord:
    """Execute one simulation trial; numerical failures become tagged records.

    Role seeds for data generation, splitting and model initialization are
    derived from ``trial_seed``, so a record is fully reproducible from
    ``(cfg, trial_seed)`` alone.
    """
    data_seed = derive_seed(trial_seed, 0)
    split_seed = derive_seed(trial_seed, 1)
    train_seed = derive_seed(trial_seed, 2)
    dataset = generate_scenario_data(cfg, data_seed)
    w_star = cfg.analytic_weights()
    d = w_star.shape[0]
    try:
        if cfg.method == "baseline":
            inf = baseline_lse_inference(dataset, cfg.delta, Hypothesis(w_star))
            weights, cov = inf.weights, inf.covariance
            chi2 = inf.model.statistic
            reject_model = inf.model.reject
            reject_coef = tuple(t.reject for t in inf.coefficients)
        else:
            split = split_dataset(dataset, cfg.split_ratio, split_seed)
            if cfg.method == "ours-l":
                predictor = train_linear(split.train, cfg.train)
            else:
                predictor = train_mlp(
                    split.train, dataclasses.replace(cfg.train, seed=train_seed)
                )
            source = cfg.resolved_a_hat_source
            if source == "validation-only":
                a_hat = estimate_second_moment_inverse(split.validation.features, source)
            elif source == "all-data":
                a_hat = estimate_second_moment_inverse(dataset.all_features, source)
            else:
                a_hat = exact_second_moment_inverse()
            pool = dataset.unlabeled if dataset.n_unlabeled else dataset.all_features
            w1 = linear_approx_of_predictor(predictor, pool, a_hat)
            rs = residuals_z(predictor, split.validation)
            est = corrected_estimator(w1, rs, a_hat)
            mt = model_test(est, Hypothesis(w_star), cfg.delta)
            cts = [coefficient_test(est, j, float(w_star[j]), cfg.delta) for j in range(d)]
            weights, cov = est.w_e, est.sigma_e_sq
            chi2 = mt.statistic
            reject_model = mt.reject
            reject_coef = tuple(t.reject for t in cts)
        std = np.sqrt(np.diag(cov))
        if not (std > 0.0).all():
            raise DegenerateCovarianceError("zero variance entry in covariance diagonal")
        u = (weights - w_star) / std
    except _TRIAL_ERRORS as exc:
        nan_vec = np.full(d, np.nan)
        return TrialRecord(
            trial=0,
            repetition=0,
            method=cfg.method,
            weights=nan_vec,
            covariance=np.full((d, d), np.nan),
            u=nan_vec.copy(),
            chi2=float("nan"),
            reported_std=nan_vec.copy(),
            reject_model=False,
            reject_coef=tuple([False] * d),
            seed=int(trial_seed),
            failed=True,
            failure_reason=f"{type(exc).__name__}: {exc}",
        )
    return TrialRecord(
        trial=0,
        repetition=0,
        method=cfg.method,
        weights=weights,
        covariance=cov,
        u=u,
        chi2=float(chi2),
        reported_std=std,
        reject_model=bool(reject_model),
        reject_coef=reject_coef,
        seed=int(trial_seed),
    )


def _trial_task(args: tuple[ScenarioConfig, int]) -> TrialRecord:
    cfg, seed = args
    return run_trial(cfg, seed)


# ---------------------------------------------------------------------------
# Experiment orchestration
# ---------------------------------------------------------------------------


def run_experiment(cfg: ScenarioConfig, workers: int = 1) -> ExperimentResult:
    """Run ``repetitions x trials`` simulations and compute all metrics.

    Trials within a repetition may execute on a process pool; records are
    collected in trial order and every trial seeds its own substream, so the
    result does not depend on ``workers``.
    """
    if workers < 1:
        raise ValueError("workers must be at least 1")
    w_star = cfg.analytic_weights()
    d = w_star.shape[0]
    coords = [f"w{j}" for j in range(d)]
    rep_seeds = tuple(derive_seed(cfg.base_seed, rep) for rep in range(cfg.repetitions))
    all_records: list[TrialRecord] = []
    values: dict[tuple[str, str], list[float]] = {}
    for coord in coords:
        values[("ks_normal", coord)] = []
    values[("ks_chi2", "")] = []
    for coord in coords:
        values[("efficiency", coord)] = []
    for coord in coords:
        values[("bias", coord)] = []
    for coord in coords:
        values[("mean_w", coord)] = []
    values[("reject_model", "")] = []
    for coord in coords:
        values[("reject_coef", coord)] = []
    values[("failed_trials", "")] = []

    executor = ProcessPoolExecutor(max_workers=workers) if workers > 1 else None
    try:
        for rep, rep_seed in enumerate(rep_seeds):
            tasks = [(cfg, derive_seed(rep_seed, t)) for t in range(cfg.trials)]
            if executor is None:
                records = [_trial_task(task) for task in tasks]
            else:
                chunk = max(1, cfg.trials // (workers * 8))
                records = list(executor.map(_trial_task, tasks, chunksize=chunk))
            records = [
                dataclasses.replace(rec, trial=t, repetition=rep)
                for t, rec in enumerate(records)
            ]
            all_records.extend(records)
            ok = [r for r in records if not r.failed]
            values[("failed_trials", "")].append(float(len(records) - len(ok)))
            if not ok:
                for key in values:
                    if key != ("failed_trials", ""):
                        values[key].append(float("nan"))
                continue
            chi2s = [r.chi2 for r in ok]
            values[("ks_chi2", "")].append(
                ks_statistic(chi2s, lambda v: chi2_cdf(v, d)).statistic
            )
            values[("reject_model", "")].append(float(np.mean([r.reject_model for r in ok])))
            for j, coord in enumerate(coords):
                u_j = [r.u[j] for r in ok]
                values[("ks_normal", coord)].append(ks_statistic(u_j, normal_cdf).statistic)
                values[("efficiency", coord)].append(float(np.mean([r.reported_std[j] for r in ok])))
                mean_w = float(np.mean([r.weights[j] for r in ok]))
                values[("mean_w", coord)].append(mean_w)
                values[("bias", coord)].append(mean_w - float(w_star[j]))
                values[("reject_coef", coord)].append(
                    float(np.mean([r.reject_coef[j] for r in ok]))
                )
    finally:
        if executor is not None:
            executor.shutdown()
    return ExperimentResult(cfg, MetricsTable(values), tuple(all_records), rep_seeds)


def run_bias_experiment(cfg: ScenarioConfig, workers: int = 1) -> ExperimentResult:
    """Bias-focused experiment: the protocol of interest records the mean
    estimate per repetition and reports per-coordinate bias with its CI.

    The canonical configuration uses a deliberately small labeled set
    (n_labeled=20, split_ratio=0.5) and a second moment estimated from the
    full data pool; the metric table is the same as ``run_experiment``'s,
    with the ``bias``/``mean_w`` rows as the headline output.
    """
    return run_experiment(cfg, workers=workers)


# ---------------------------------------------------------------------------
# Export
# ---------------------------------------------------------------------------


def _fmt(v: float) -> str:
    return repr(float(v))


def export_results(result: ExperimentResult, out_dir: str | Path) -> dict[str, Path]:
    """Write metrics.csv, trials.csv and manifest.json into ``out_dir``.

    The two CSV files are deterministic functions of the experiment result
    (identical runs export byte-identical files); the manifest carries a
    creation timestamp and is not byte-stable.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    metrics_path = out / "metrics.csv"
    trials_path = out / "trials.csv"
    manifest_path = out / "manifest.json"

    with metrics_path.open("w", newline="", encoding="utf-8") as fh:
        fh.write("metric,coordinate,repetition,value\n")
        for metric, coord, rep, value in result.metrics.rows():
            fh.write(f"{metric},{coord},{rep},{_fmt(value)}\n")

    d = result.config.analytic_weights().shape[0]
    if d != 2:
        raise ValueError("trials.csv schema is defined for two-coordinate scenarios")
    with trials_path.open("w", newline="", encoding="utf-8") as fh:
        fh.write(TRIALS_CSV_COLUMNS + "\n")
        for rec in result.records:
            fh.write(
                ",".join(
                    [
                        str(rec.repetition),
                        str(rec.trial),
                        rec.method,
                        _fmt(rec.weights[0]),
                        _fmt(rec.weights[1]),
                        _fmt(rec.reported_std[0]),
                        _fmt(rec.reported_std[1]),
                        _fmt(rec.u[0]),
                        _fmt(rec.u[1]),
                        _fmt(rec.chi2),
                        str(int(rec.reject_model)),
                        str(int(rec.reject_coef[0])),
                        str(int(rec.reject_coef[1])),
                        str(int(rec.failed)),
                    ]
                )
                + "\n"
            )

    from . import __version__

    manifest = {
        "config": result.config.to_dict(),
        "resolved_a_hat_source": result.config.resolved_a_hat_source,
        "base_seed": result.config.base_seed,
        "repetition_seeds": list(result.repetition_seeds),
        "failed_trials_per_repetition": result.failed_per_repetition,
        "version": __version__,
        "created_utc": datetime.datetime.now(datetime.timezone.utc).isoformat(),
        "files": ["metrics.csv", "trials.csv"],
    }
    with manifest_path.open("w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return {"metrics": metrics_path, "trials": trials_path, "manifest": manifest_path}
