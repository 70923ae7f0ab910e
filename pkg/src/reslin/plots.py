"""Figure rendering for exported trial statistics.

Consumes the per-trial statistics the simulation harness exports (either
in-memory records or a trials.csv file) and renders histogram panels of the
standardized coordinate statistics and the joint chi-squared statistic
against their reference densities, one figure per repetition.
"""

from __future__ import annotations

import csv
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .numerics import chi2_pdf, normal_pdf

__all__ = ["load_trials_csv", "render_statistic_histograms", "render_from_trials_csv"]


def load_trials_csv(path: str | Path) -> list[dict]:
    """Read an exported trials.csv back into a list of row dicts."""
    rows = []
    with Path(path).open(newline="", encoding="utf-8") as fh:
        for row in csv.DictReader(fh):
            rows.append(
                {
                    "repetition": int(row["repetition"]),
                    "trial": int(row["trial"]),
                    "method": row["method"],
                    "u0": float(row["u0"]),
                    "u1": float(row["u1"]),
                    "chi2": float(row["chi2"]),
                    "failed": bool(int(row["failed"])),
                }
            )
    return rows


def render_statistic_histograms(
    rows: list[dict],
    out_dir: str | Path,
    repetition: int = 0,
    dof: int = 2,
    bins: int = 40,
) -> Path:
    """Render one three-panel histogram figure for a repetition's statistics.

    Panels show u0 and u1 against the standard normal density and the joint
    statistic against the chi-squared density with ``dof`` degrees of
    freedom.  Returns the path of the written PNG.
    """
    keep = [r for r in rows if r["repetition"] == repetition and not r["failed"]]
    if not keep:
        raise ValueError(f"no usable trials for repetition {repetition}")
    method = keep[0]["method"]
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)

    fig, axes = plt.subplots(1, 3, figsize=(12, 3.4))
    for ax, key, label in zip(axes[:2], ("u0", "u1"), ("$u_0$", "$u_1$")):
        vals = np.array([r[key] for r in keep])
        ax.hist(vals, bins=bins, density=True, color="#6699cc", edgecolor="white")
        grid = np.linspace(min(-4.0, vals.min()), max(4.0, vals.max()), 400)
        ax.plot(grid, [normal_pdf(g) for g in grid], color="darkorange", lw=2)
        ax.set_title(f"{method}: {label} vs N(0,1)")
        ax.set_xlabel(label)
    chi2_vals = np.array([r["chi2"] for r in keep])
    ax = axes[2]
    ax.hist(chi2_vals, bins=bins, density=True, color="#6699cc", edgecolor="white")
    grid = np.linspace(1e-6, max(12.0, float(chi2_vals.max())), 400)
    ax.plot(grid, [chi2_pdf(g, dof) for g in grid], color="darkorange", lw=2)
    ax.set_title(f"{method}: joint statistic vs $\\chi^2_{{{dof}}}$")
    ax.set_xlabel("statistic")
    fig.tight_layout()
    path = out / f"histograms_{method}_rep{repetition}.png"
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path


def render_from_trials_csv(
    trials_csv: str | Path,
    out_dir: str | Path,
    repetition: int = 0,
    dof: int = 2,
) -> Path:
    """Render the histogram figure straight from an exported trials.csv."""
    return render_statistic_histograms(
        load_trials_csv(trials_csv), out_dir, repetition=repetition, dof=dof
    )


def records_to_rows(records) -> list[dict]:
    """Adapt in-memory trial records to the row dicts the renderer expects."""
    return [
        {
            "repetition": rec.repetition,
            "trial": rec.trial,
            "method": rec.method,
            "u0": float(rec.u[0]),
            "u1": float(rec.u[1]),
            "chi2": rec.chi2,
            "failed": rec.failed,
        }
        for rec in records
    ]
