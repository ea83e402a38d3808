"""Figure rendering for the report outputs.

Figures are written next to the delimited files and never replace them; every
plot here has a CSV or JSON counterpart carrying the same numbers.
"""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .bench import RmseCurves, TimingRow, TuningResult
from .simulate import StepObservation

_COLORS = {"gsf": "tab:blue", "rstkf-gsf": "tab:red"}


def _color(label: str):
    return _COLORS.get(label, None)


def plot_rmse_curves(curves: RmseCurves, path, title: str | None = None) -> Path:
    """Position and velocity RMSE over time, one line per tracker."""
    fig, (ax_p, ax_v) = plt.subplots(2, 1, sharex=True, figsize=(7, 6))
    steps = None
    for label in curves.labels:
        pos = curves.pos_rmse[label]
        vel = curves.vel_rmse[label]
        steps = np.arange(1, pos.shape[0] + 1)
        ax_p.plot(steps, pos, label=label, color=_color(label))
        ax_v.plot(steps, vel, label=label, color=_color(label))
    ax_p.set_ylabel("position RMSE [m]")
    ax_v.set_ylabel("velocity RMSE [m/s]")
    ax_v.set_xlabel("time step")
    ax_p.legend()
    ax_p.grid(alpha=0.3)
    ax_v.grid(alpha=0.3)
    if title:
        ax_p.set_title(title)
    fig.tight_layout()
    path = Path(path)
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return path


def plot_demo_run(
    obs: list[StepObservation],
    estimates: dict,
    outlier_step: int,
    path,
) -> Path:
    """Truth, detections and tracker estimates over time for one run.

    estimates maps tracker label to an array of shape (steps, 4) holding the
    posterior point estimate per step.
    """
    steps = np.arange(1, len(obs) + 1)
    truth = np.stack([ob.truth.as_array() for ob in obs])
    fig, axes = plt.subplots(2, 2, sharex=True, figsize=(10, 6))
    panels = [
        (axes[0, 0], 0, "x position [m]"),
        (axes[0, 1], 1, "y position [m]"),
        (axes[1, 0], 2, "x velocity [m/s]"),
        (axes[1, 1], 3, "y velocity [m/s]"),
    ]
    for ax, idx, ylabel in panels:
        if idx < 2:
            for k, ob in zip(steps, obs):
                for det in ob.detections:
                    ax.plot(k, det[idx], "k.", markersize=2.5, alpha=0.5)
        ax.plot(steps, truth[:, idx], "g--", label="truth")
        for label, est in estimates.items():
            ax.plot(steps, est[:, idx], label=label, color=_color(label))
        ax.axvline(outlier_step, color="red", linestyle=":", linewidth=1)
        ax.set_ylabel(ylabel)
        ax.grid(alpha=0.3)
    axes[1, 0].set_xlabel("time step")
    axes[1, 1].set_xlabel("time step")
    axes[0, 0].legend(fontsize=8)
    fig.tight_layout()
    path = Path(path)
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return path


def plot_timing(rows: list[TimingRow], path) -> Path:
    """Median update time with inner-90th-percentile bars, log time axis."""
    fig, ax = plt.subplots(figsize=(7, 4))
    names = []
    for i, row in enumerate(rows):
        name = row.name if row.iters is None else f"{row.name} ({row.iters} it)"
        names.append(name)
        ax.errorbar(
            row.median_s,
            i,
            xerr=[[row.median_s - row.p05_s], [row.p95_s - row.median_s]],
            fmt="o",
            capsize=4,
        )
    ax.set_yticks(range(len(rows)), names)
    ax.set_xscale("log")
    ax.set_xlabel("wall time per update [s]")
    ax.grid(alpha=0.3, axis="x")
    fig.tight_layout()
    path = Path(path)
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return path


def plot_tuning(result: TuningResult, path) -> Path:
    """Total RMSE against the process-noise scale, with the robust reference."""
    fig, ax = plt.subplots(figsize=(7, 4))
    ax.semilogx(result.c_grid, result.gsf_total_rmse, color="tab:blue", label="gsf (scaled Q)")
    ax.axhline(result.rstkf_total_rmse, color="tab:red", label="rstkf-gsf")
    ax.axvline(result.best_c, color="green", linestyle=":", label=f"best c = {result.best_c:.1f}")
    ax.set_xlabel("process noise scale c")
    ax.set_ylabel("total position RMSE [m]")
    ax.legend()
    ax.grid(alpha=0.3)
    fig.tight_layout()
    path = Path(path)
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return path


def plot_simulation(obs: list[StepObservation], path) -> Path:
    """Birds-eye view of one simulated dataset: trajectory plus detections."""
    truth = np.stack([ob.truth.as_array() for ob in obs])
    fig, ax = plt.subplots(figsize=(6, 6))
    for ob in obs:
        for det in ob.detections:
            ax.plot(det[0], det[1], "k.", markersize=2.5, alpha=0.4)
    ax.plot(truth[:, 0], truth[:, 1], "g-", label="truth")
    ax.set_xlabel("x [m]")
    ax.set_ylabel("y [m]")
    ax.set_aspect("equal", adjustable="datalim")
    ax.legend()
    ax.grid(alpha=0.3)
    fig.tight_layout()
    path = Path(path)
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return path
