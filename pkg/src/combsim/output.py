"""Report emission: delimited CSV files, JSON mirrors, and rendered figures.

CSV schemas are versioned; the golden-file tests pin the exact header rows.
Figures are rendered headless to PNG next to the delimited output.
"""
from __future__ import annotations

import csv
import json
import math
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402  (backend must be set first)
import numpy as np  # noqa: E402

from .solver import GlobalResult, SolutionTrajectory  # noqa: E402
from .wellposed import DependenceReport  # noqa: E402

__all__ = [
    "CSV_SCHEMA_VERSION",
    "write_solution_csvs",
    "write_diagnostics_csv",
    "write_dependence_csv",
    "write_json",
    "plot_solution",
    "plot_norms",
    "plot_dependence",
]

CSV_SCHEMA_VERSION = 1

SOLUTION_HEADER = ["t", "x", "u"]
DIAGNOSTICS_HEADER = [
    "t", "l2_norm", "h2_norm", "picard_iterations", "contraction_ratio", "gronwall_bound",
]
DEPENDENCE_HEADER = [
    "epsilon", "input_distance", "output_distance", "time_derivative_distance", "ratio",
]


def _fmt(value: float) -> str:
    if isinstance(value, float) and math.isnan(value):
        return ""
    return repr(float(value))


def write_solution_csvs(
    traj: SolutionTrajectory, out_dir: Path, stride: int | None = None
) -> list[Path]:
    """One long-format CSV per layer with columns t, x, u."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    nt = len(traj.times)
    if stride is None:
        stride = max(1, nt // 201)
    keep = list(range(0, nt, stride))
    if keep[-1] != nt - 1:
        keep.append(nt - 1)
    x = traj.grid.nodes()
    paths = []
    for i in range(traj.n_layers):
        path = out_dir / f"layer_{i + 1:02d}.csv"
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(SOLUTION_HEADER)
            for m in keep:
                t = traj.times[m]
                for j in range(traj.grid.nx):
                    writer.writerow([_fmt(t), _fmt(x[j]), _fmt(traj.states[m, i, j])])
        paths.append(path)
    return paths


def write_diagnostics_csv(
    traj: SolutionTrajectory, out_dir: Path, gronwall_bound: np.ndarray | None = None
) -> Path:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    path = out_dir / "diagnostics.csv"
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(DIAGNOSTICS_HEADER)
        for m, t in enumerate(traj.times):
            bound = gronwall_bound[m] if gronwall_bound is not None else math.nan
            writer.writerow([
                _fmt(t), _fmt(traj.l2[m]), _fmt(traj.h2[m]),
                int(traj.iterations[m]), _fmt(traj.contraction_ratio[m]), _fmt(bound),
            ])
    return path


def write_dependence_csv(report: DependenceReport, out_dir: Path) -> Path:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    path = out_dir / "dependence.csv"
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(DEPENDENCE_HEADER)
        for row in report.rows:
            writer.writerow([
                _fmt(row.epsilon), _fmt(row.input_distance), _fmt(row.output_distance),
                _fmt(row.time_derivative_distance), _fmt(row.ratio),
            ])
    return path


def write_json(data: dict, path: Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(data, fh, indent=2, sort_keys=True, default=_json_default)
        fh.write("\n")
    return path


def _json_default(obj):
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def plot_solution(traj: SolutionTrajectory, path: Path, n_snapshots: int = 6) -> Path:
    """Per-layer temperature profiles at a handful of times."""
    x = traj.grid.nodes()
    nt = len(traj.times)
    picks = np.unique(np.linspace(0, nt - 1, n_snapshots).astype(int))
    n = traj.n_layers
    fig, axes = plt.subplots(n, 1, figsize=(7.0, 2.6 * n), sharex=True, squeeze=False)
    for i in range(n):
        ax = axes[i, 0]
        for m in picks:
            ax.plot(x, traj.states[m, i], lw=1.2, label=f"t={traj.times[m]:.3g}")
        ax.set_ylabel(f"u_{i + 1}")
        ax.grid(alpha=0.3)
    axes[0, 0].legend(fontsize=8, ncol=2)
    axes[-1, 0].set_xlabel("x")
    fig.tight_layout()
    fig.savefig(path, dpi=130)
    plt.close(fig)
    return Path(path)


def plot_norms(
    traj: SolutionTrajectory, path: Path, gronwall_bound: np.ndarray | None = None
) -> Path:
    fig, ax = plt.subplots(figsize=(7.0, 4.0))
    ax.plot(traj.times, traj.l2, label="L2 norm")
    ax.plot(traj.times, traj.h2, label="H2 norm")
    if gronwall_bound is not None:
        ax.plot(traj.times, gronwall_bound, "--", label="L2 monitor bound")
        ax.set_yscale("log")
    ax.set_xlabel("t")
    ax.set_ylabel("norm")
    ax.grid(alpha=0.3)
    ax.legend(fontsize=9)
    fig.tight_layout()
    fig.savefig(path, dpi=130)
    plt.close(fig)
    return Path(path)


def plot_dependence(report: DependenceReport, path: Path) -> Path:
    rows = [r for r in report.rows if r.epsilon > 0.0]
    eps = [r.epsilon for r in rows]
    out = [r.output_distance for r in rows]
    fig, ax = plt.subplots(figsize=(6.0, 4.0))
    ax.loglog(eps, out, "o-", label="output distance")
    ax.loglog(
        eps, [report.fitted_kappa_tilde * e for e in eps], "--",
        label=f"fitted slope (kappa~={report.fitted_kappa_tilde:.3g})",
    )
    ax.set_xlabel("epsilon")
    ax.set_ylabel("sup-t H2 distance")
    ax.grid(alpha=0.3, which="both")
    ax.legend(fontsize=9)
    ax.set_title(f"target={report.target}, driver={report.driver}")
    fig.tight_layout()
    fig.savefig(path, dpi=130)
    plt.close(fig)
    return Path(path)


def plot_global_monitors(result: GlobalResult, path: Path) -> Path:
    traj = result.trajectory
    fig, ax = plt.subplots(figsize=(7.0, 4.0))
    ax.semilogy(traj.times, traj.l2, label="L2 norm")
    ax.semilogy(traj.times, result.gronwall_bound, "--", label="exp((beta+mu) t) bound")
    for w in result.windows:
        ax.axvline(w.t_start, color="gray", alpha=0.25, lw=0.8)
    ax.set_xlabel("t")
    ax.legend(fontsize=9)
    ax.grid(alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=130)
    plt.close(fig)
    return Path(path)
