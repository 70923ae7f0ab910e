"""Assumption-free estimation of the best linear approximation of an unknown
ground-truth function, with significance tests and a simulation harness.

The pipeline: split labeled data into train/validation, fit any predictor on
the train side, take its best linear approximation, then correct it with the
average feature-weighted validation residual.  The corrected estimator is
asymptotically normal around the population linear approximation, which
yields model and coefficient significance tests that stay calibrated even
when the ground truth is not linear.
"""

from .data import (
    BoundsPair,
    Dataset,
    SplitResult,
    empirical_bounds,
    featurize,
    load_dataset_csv,
    save_dataset_csv,
    split_dataset,
)
from .estimator import (
    BoundReport,
    ConcentrationConstants,
    ConfidenceParams,
    CorrectedEstimate,
    LinearApprox,
    ResidualStats,
    SecondMomentEstimate,
    bias_bound,
    bias_bound_from_constants,
    corrected_estimator,
    estimate_second_moment_inverse,
    exact_linear_approx_analytic,
    exact_second_moment_inverse,
    lemma1_range_bound,
    linear_approx_of_predictor,
    mse_bound,
    residuals_z,
    second_moment_concentration_bound,
)
from .inference import (
    DegenerateCovarianceError,
    Hypothesis,
    LseInference,
    TestResult,
    baseline_lse_inference,
    coefficient_test,
    model_test,
)
from .models import (
    LinearPredictor,
    LossSummary,
    MLPPredictor,
    TrainConfig,
    TrainingDivergedError,
    mlp_gradient,
    mse_loss,
    predict,
    predict_batch,
    train_linear,
    train_mlp,
)
from .numerics import (
    EigenBounds,
    KSResult,
    SingularMatrixError,
    chi2_cdf,
    chi2_pdf,
    chi2_quantile,
    derive_seed,
    eigen_bounds,
    invert_spd,
    ks_statistic,
    normal_cdf,
    normal_pdf,
    normal_quantile,
    second_moment,
    seeded_rng,
    substream,
)
from .simulate import (
    ExperimentResult,
    MetricsTable,
    ScenarioConfig,
    TrialRecord,
    export_results,
    generate_scenario_data,
    run_bias_experiment,
    run_experiment,
    run_trial,
)

__version__ = "0.1.0"
