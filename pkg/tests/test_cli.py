import json

import numpy as np
import pytest

from reslin import seeded_rng
from reslin.cli import main


def write_line_csv(path, n=120, noise=0.05, seed=77):
    rng = seeded_rng(seed)
    x = rng.uniform(0.0, 1.0, n)
    y = 2.0 * x + 1.0 + noise * rng.standard_normal(n)
    lines = ["y,x0"] + [f"{float(yi)!r},{float(xi)!r}" for yi, xi in zip(y, x)]
    path.write_text("\n".join(lines) + "\n")


class TestAnalytic:
    def test_square(self, capsys):
        assert main(["analytic", "--scenario", "square"]) == 0
        out = capsys.readouterr().out
        assert "-0.166667" in out
        assert "1.000000" in out

    def test_constant(self, capsys):
        assert main(["analytic", "--scenario", "constant", "--constant", "2.0"]) == 0
        assert "2.000000" in capsys.readouterr().out


class TestSimulate:
    def test_missing_config_file(self, tmp_path, capsys):
        code = main(["simulate", "--config", str(tmp_path / "missing.json")])
        assert code != 0
        assert "error:" in capsys.readouterr().err

    def test_small_run_writes_outputs(self, tmp_path, capsys):
        cfg = {"method": "ours-l", "n_unlabeled": 0, "trials": 6, "repetitions": 2}
        cfg_path = tmp_path / "cfg.json"
        cfg_path.write_text(json.dumps(cfg))
        out_dir = tmp_path / "out"
        code = main(
            [
                "simulate", "--config", str(cfg_path), "--out", str(out_dir),
                "--seed", "9", "--no-figures",
            ]
        )
        assert code == 0
        assert (out_dir / "metrics.csv").exists()
        assert (out_dir / "trials.csv").exists()
        assert (out_dir / "manifest.json").exists()
        manifest = json.loads((out_dir / "manifest.json").read_text())
        assert manifest["base_seed"] == 9

    def test_figures_rendered(self, tmp_path):
        cfg = {"method": "baseline", "n_unlabeled": 0, "trials": 6, "repetitions": 1}
        cfg_path = tmp_path / "cfg.json"
        cfg_path.write_text(json.dumps(cfg))
        out_dir = tmp_path / "out"
        code = main(["simulate", "--config", str(cfg_path), "--out", str(out_dir)])
        assert code == 0
        assert (out_dir / "histograms_baseline_rep0.png").exists()

    def test_unknown_config_key_fails(self, tmp_path, capsys):
        cfg_path = tmp_path / "cfg.json"
        cfg_path.write_text(json.dumps({"trials": 4, "mystery": True}))
        assert main(["simulate", "--config", str(cfg_path)]) == 1
        assert "unknown config keys" in capsys.readouterr().err


class TestFit:
    def test_ours_l_recovers_line_and_rejects(self, tmp_path, capsys):
        data = tmp_path / "line.csv"
        write_line_csv(data)
        code = main(["fit", str(data), "--json", "--seed", "3"])
        assert code == 0
        report = json.loads(capsys.readouterr().out)
        np.testing.assert_allclose(report["weights"], [1.0, 2.0], atol=0.12)
        assert report["model_test"]["reject"] is True
        assert report["method"] == "ours-l"

    def test_baseline_method(self, tmp_path, capsys):
        data = tmp_path / "line.csv"
        write_line_csv(data)
        code = main(["fit", str(data), "--method", "baseline", "--json"])
        assert code == 0
        report = json.loads(capsys.readouterr().out)
        np.testing.assert_allclose(report["weights"], [1.0, 2.0], atol=0.1)
        assert "sigma_sq" in report

    def test_custom_null_not_rejected(self, tmp_path, capsys):
        data = tmp_path / "line.csv"
        write_line_csv(data)
        code = main(["fit", str(data), "--json", "--null", "1.0,2.0"])
        assert code == 0
        report = json.loads(capsys.readouterr().out)
        assert report["model_test"]["reject"] is False

    def test_human_readable_output(self, tmp_path, capsys):
        data = tmp_path / "line.csv"
        write_line_csv(data)
        assert main(["fit", str(data)]) == 0
        out = capsys.readouterr().out
        assert "model test" in out
        assert "w[1]" in out

    def test_missing_file(self, tmp_path, capsys):
        assert main(["fit", str(tmp_path / "none.csv")]) == 1
        assert "error:" in capsys.readouterr().err


class TestBounds:
    def test_report_structure(self, capsys):
        code = main(
            [
                "bounds", "--mean-loss", "0.01", "--n2", "100", "--n-total", "5000",
                "--z-bar-norm", "0.05", "--eig-min", "0.7889", "--eig-max", "15.2111",
            ]
        )
        assert code == 0
        report = json.loads(capsys.readouterr().out)
        assert report["mse_bound"]["epsilon"] == pytest.approx(0.36385, abs=1e-4)
        assert "second_moment_bound" in report
        assert "bias_bound" in report
        assert "caveat" in report

    def test_range_inflation_included(self, capsys):
        code = main(
            [
                "bounds", "--n2", "11", "--delta0", "0.1",
                "--empirical-lower", "0.3", "--empirical-upper", "0.5",
            ]
        )
        assert code == 0
        report = json.loads(capsys.readouterr().out)
        assert report["range_inflation"] == pytest.approx(0.25179, abs=1e-5)


class TestPlot:
    def test_renders_from_trials_csv(self, tmp_path):
        cfg = {"method": "ours-l", "n_unlabeled": 0, "trials": 8, "repetitions": 1}
        cfg_path = tmp_path / "cfg.json"
        cfg_path.write_text(json.dumps(cfg))
        out_dir = tmp_path / "out"
        assert main(
            ["simulate", "--config", str(cfg_path), "--out", str(out_dir), "--no-figures"]
        ) == 0
        fig_dir = tmp_path / "figs"
        code = main(["plot", str(out_dir / "trials.csv"), "--out", str(fig_dir)])
        assert code == 0
        assert (fig_dir / "histograms_ours-l_rep0.png").exists()


class TestUsage:
    def test_unknown_subcommand_exits_2(self, capsys):
        assert main(["frobnicate"]) == 2

    def test_unknown_flag_exits_2(self, capsys):
        assert main(["analytic", "--bogus"]) == 2

    def test_no_command_exits_2(self, capsys):
        assert main([]) == 2
