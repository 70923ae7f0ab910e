"""Command-line interface.

Subcommands:

- ``simulate``: run a configured experiment, export metrics/trials/manifest,
  and render histogram figures alongside the delimited output.
- ``fit``: estimate and test on a user-supplied CSV dataset.
- ``bounds``: evaluate the concentration-bound calculators for supplied
  constants.
- ``analytic``: print the closed-form linear approximation of a built-in
  scenario.
- ``plot``: re-render histogram figures from an exported trials.csv.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import sys
from pathlib import Path

import numpy as np

from .data import BoundsPair, load_dataset_csv, split_dataset
from .estimator import (
    ConcentrationConstants,
    ConfidenceParams,
    bias_bound_from_constants,
    corrected_estimator,
    estimate_second_moment_inverse,
    exact_linear_approx_analytic,
    lemma1_range_bound,
    linear_approx_of_predictor,
    mse_bound,
    residuals_z,
    second_moment_concentration_bound,
)
from .inference import Hypothesis, baseline_lse_inference, coefficient_test, model_test
from .models import LossSummary, TrainConfig, train_linear, train_mlp
from .simulate import ScenarioConfig, export_results, run_bias_experiment, run_experiment

__all__ = ["main", "build_parser"]


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="reslin",
        description="Residual-corrected linear approximation: estimation, "
        "significance tests, and simulation harness.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_sim = sub.add_parser("simulate", help="run a simulation experiment from a JSON config")
    p_sim.add_argument("--config", type=Path, default=None, help="JSON config file")
    p_sim.add_argument("--out", type=Path, default=Path("results"), help="output directory")
    p_sim.add_argument("--seed", type=int, default=None, help="override base seed")
    p_sim.add_argument("--method", default=None, help="override method")
    p_sim.add_argument("--delta", type=float, default=None, help="override significance level")
    p_sim.add_argument("--trials", type=int, default=None, help="override trials per repetition")
    p_sim.add_argument("--repetitions", type=int, default=None, help="override repetitions")
    p_sim.add_argument("--workers", type=int, default=1, help="parallel trial workers")
    p_sim.add_argument(
        "--bias", action="store_true", help="run the bias-focused experiment protocol"
    )
    p_sim.add_argument(
        "--no-figures", action="store_true", help="skip histogram figure rendering"
    )
    p_sim.set_defaults(func=_cmd_simulate)

    p_fit = sub.add_parser("fit", help="estimate and test on a CSV dataset")
    p_fit.add_argument("data", type=Path, help="CSV file with a header row")
    p_fit.add_argument("--label-column", default="y", help="name of the response column")
    p_fit.add_argument("--method", default="ours-l", choices=("baseline", "ours-l", "ours-nn"))
    p_fit.add_argument("--ratio", type=float, default=0.7, help="train split fraction")
    p_fit.add_argument("--seed", type=int, default=0, help="split / initialization seed")
    p_fit.add_argument("--delta", type=float, default=0.05, help="significance level")
    p_fit.add_argument(
        "--null", default=None, help="comma-separated null weight vector (default: zeros)"
    )
    p_fit.add_argument(
        "--a-hat-source",
        default=None,
        choices=("validation-only", "all-data"),
        help="feature pool for the inverse second moment (default per method)",
    )
    p_fit.add_argument("--epochs", type=int, default=None, help="network training epochs")
    p_fit.add_argument("--learning-rate", type=float, default=None, help="training step size")
    p_fit.add_argument("--json", action="store_true", help="print machine-readable JSON")
    p_fit.set_defaults(func=_cmd_fit)

    p_bounds = sub.add_parser("bounds", help="evaluate concentration-bound reports")
    p_bounds.add_argument("--mean-loss", type=float, default=None, help="mean validation loss")
    p_bounds.add_argument("--n2", type=int, required=True, help="validation sample count")
    p_bounds.add_argument("--n-total", type=int, default=0, help="total feature count")
    p_bounds.add_argument("--d", type=int, default=2, help="feature dimension")
    p_bounds.add_argument("--delta", type=float, default=0.05)
    p_bounds.add_argument("--delta0", type=float, default=0.1)
    p_bounds.add_argument("--k-factor", type=float, default=1.0, help="feature norm factor K")
    p_bounds.add_argument("--c-constant", type=float, default=1.0, help="absolute constant C")
    p_bounds.add_argument("--eig-min", type=float, default=1.0, help="smallest eigenvalue m")
    p_bounds.add_argument("--eig-max", type=float, default=1.0, help="largest eigenvalue M")
    p_bounds.add_argument("--range-width", type=float, default=1.0, help="assumed range")
    p_bounds.add_argument(
        "--empirical-lower", type=float, default=None, help="empirical lower bound"
    )
    p_bounds.add_argument(
        "--empirical-upper", type=float, default=None, help="empirical upper bound"
    )
    p_bounds.add_argument("--z-bar-norm", type=float, default=None, help="norm of mean residual")
    p_bounds.add_argument("--max-z-norm", type=float, default=0.0, help="max residual norm")
    p_bounds.add_argument(
        "--empirical-range-ajz", type=float, default=None,
        help="empirical range of the projected residuals for the bias bound",
    )
    p_bounds.set_defaults(func=_cmd_bounds)

    p_analytic = sub.add_parser("analytic", help="print the closed-form linear approximation")
    p_analytic.add_argument("--scenario", default="square", choices=("square", "linear", "constant"))
    p_analytic.add_argument("--constant", type=float, default=0.0, help="constant scenario value")
    p_analytic.set_defaults(func=_cmd_analytic)

    p_plot = sub.add_parser("plot", help="render histogram figures from trials.csv")
    p_plot.add_argument("trials", type=Path, help="exported trials.csv")
    p_plot.add_argument("--out", type=Path, default=Path("figures"))
    p_plot.add_argument("--repetition", type=int, default=0)
    p_plot.add_argument("--dof", type=int, default=2)
    p_plot.set_defaults(func=_cmd_plot)

    return parser


def _cmd_simulate(args: argparse.Namespace) -> int:
    if args.config is not None:
        cfg = ScenarioConfig.from_json_file(args.config)
    else:
        cfg = ScenarioConfig()
    overrides = {}
    if args.seed is not None:
        overrides["base_seed"] = args.seed
    if args.method is not None:
        overrides["method"] = args.method
    if args.delta is not None:
        overrides["delta"] = args.delta
    if args.trials is not None:
        overrides["trials"] = args.trials
    if args.repetitions is not None:
        overrides["repetitions"] = args.repetitions
    if overrides:
        cfg = dataclasses.replace(cfg, **overrides)
    runner = run_bias_experiment if args.bias else run_experiment
    result = runner(cfg, workers=args.workers)
    paths = export_results(result, args.out)
    print(f"wrote {paths['metrics']}")
    print(f"wrote {paths['trials']}")
    print(f"wrote {paths['manifest']}")
    if not args.no_figures:
        from .plots import records_to_rows, render_statistic_histograms

        for rep in range(cfg.repetitions):
            fig = render_statistic_histograms(
                records_to_rows(result.records), args.out, repetition=rep
            )
            print(f"wrote {fig}")
    failed = sum(result.failed_per_repetition)
    for metric, coord in result.metrics.keys():
        label = f"{metric}[{coord}]" if coord else metric
        print(
            f"{label}: mean={result.metrics.mean(metric, coord):.6g} "
            f"ci95={result.metrics.ci95(metric, coord):.6g}"
        )
    if failed:
        print(f"failed trials: {failed}", file=sys.stderr)
    return 0


def _parse_null(raw: str | None, d: int) -> np.ndarray:
    if raw is None:
        return np.zeros(d)
    values = np.array([float(v) for v in raw.split(",")])
    if values.shape[0] != d:
        raise ValueError(f"null vector has {values.shape[0]} entries, expected {d}")
    return values


def _cmd_fit(args: argparse.Namespace) -> int:
    dataset = load_dataset_csv(args.data, args.label_column)
    d = dataset.d
    w_t = _parse_null(args.null, d)
    if args.method == "baseline":
        inf = baseline_lse_inference(dataset, args.delta, Hypothesis(w_t))
        weights, cov = inf.weights, inf.covariance
        model, coefficients = inf.model, inf.coefficients
        extra = {"sigma_sq": inf.sigma_sq}
    else:
        split = split_dataset(dataset, args.ratio, args.seed)
        train_cfg = TrainConfig(seed=args.seed)
        if args.epochs is not None:
            train_cfg = dataclasses.replace(train_cfg, epochs=args.epochs)
        if args.learning_rate is not None:
            train_cfg = dataclasses.replace(train_cfg, learning_rate=args.learning_rate)
        if args.method == "ours-l":
            predictor = train_linear(split.train, train_cfg)
            default_source = "validation-only"
        else:
            predictor = train_mlp(split.train, train_cfg)
            default_source = "all-data"
        source = args.a_hat_source or default_source
        pool_features = (
            split.validation.features if source == "validation-only" else dataset.all_features
        )
        a_hat = estimate_second_moment_inverse(pool_features, source)
        approx_pool = dataset.unlabeled if dataset.n_unlabeled else dataset.all_features
        w1 = linear_approx_of_predictor(predictor, approx_pool, a_hat)
        rs = residuals_z(predictor, split.validation)
        est = corrected_estimator(w1, rs, a_hat)
        weights, cov = est.w_e, est.sigma_e_sq
        model = model_test(est, Hypothesis(w_t), args.delta)
        coefficients = tuple(
            coefficient_test(est, j, float(w_t[j]), args.delta) for j in range(d)
        )
        extra = {"w1": [float(v) for v in w1.w1], "a_hat_source": source}
    report = {
        "method": args.method,
        "n_labeled": dataset.n,
        "n_unlabeled": dataset.n_unlabeled,
        "weights": [float(v) for v in weights],
        "reported_std": [float(np.sqrt(cov[j, j])) for j in range(d)],
        "covariance": np.asarray(cov).tolist(),
        "model_test": model.to_json_dict(),
        "coefficient_tests": [t.to_json_dict() for t in coefficients],
        **extra,
    }
    if args.json:
        print(json.dumps(report, indent=2, sort_keys=True))
        return 0
    print(f"method: {args.method}  (N={dataset.n}, N_u={dataset.n_unlabeled}, d={d})")
    for j in range(d):
        print(f"  w[{j}] = {report['weights'][j]:+.6f}  (std {report['reported_std'][j]:.6f})")
    print(
        f"model test: statistic={model.statistic:.4f} threshold={model.threshold:.4f} "
        f"p={model.p_value:.4g} reject={model.reject}"
    )
    for j, t in enumerate(coefficients):
        print(
            f"coefficient w[{j}] vs {w_t[j]:+g}: statistic={t.statistic:.4f} "
            f"p={t.p_value:.4g} reject={t.reject}"
        )
    return 0


def _cmd_bounds(args: argparse.Namespace) -> int:
    cc = ConcentrationConstants(
        k=args.k_factor,
        c=args.c_constant,
        r=BoundsPair(0.0, args.range_width, source="assumed"),
        m=args.eig_min,
        big_m=args.eig_max,
    )
    cp = ConfidenceParams(delta=args.delta, delta0=args.delta0)
    report: dict = {
        "constants": {
            "K": cc.k,
            "C": cc.c,
            "m": cc.m,
            "M": cc.big_m,
            "assumed_range": cc.r.width,
            "delta": cp.delta,
            "delta0": cp.delta0,
        },
        "caveat": "bounds scale with the unspecified absolute constant C",
    }
    if args.empirical_lower is not None and args.empirical_upper is not None:
        emp = BoundsPair(args.empirical_lower, args.empirical_upper)
        report["range_inflation"] = lemma1_range_bound(emp, args.n2, cp.delta0)
    if args.mean_loss is not None:
        losses = LossSummary(np.full(args.n2, args.mean_loss), args.mean_loss)
        report["mse_bound"] = mse_bound(losses, cc, cp, args.d).to_json_dict()
    if args.n_total > 0:
        report["second_moment_bound"] = second_moment_concentration_bound(
            args.n_total, args.d, cc, cp.delta
        )
    if args.z_bar_norm is not None:
        report["bias_bound"] = bias_bound_from_constants(
            args.n2,
            args.n_total,
            args.d,
            cc,
            cp,
            z_bar_norm=args.z_bar_norm,
            max_z_norm=args.max_z_norm,
            empirical_range=args.empirical_range_ajz,
        )
    print(json.dumps(report, indent=2, sort_keys=True))
    return 0


def _cmd_analytic(args: argparse.Namespace) -> int:
    w = exact_linear_approx_analytic(args.scenario, args.constant)
    print(f"w* = ({', '.join(f'{v:.6f}' for v in w)})")
    return 0


def _cmd_plot(args: argparse.Namespace) -> int:
    from .plots import render_from_trials_csv

    path = render_from_trials_csv(
        args.trials, args.out, repetition=args.repetition, dof=args.dof
    )
    print(f"wrote {path}")
    return 0


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return int(args.func(args))
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
