"""Matplotlib report figures rendered to files next to the delimited output."""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np


def save_bench_figure(report: dict, path) -> None:
    """Traffic totals per protocol and the sample/tile ratio against the
    per-worker sample count, with the 9-vs-(1+6S) model line."""
    fig, (ax0, ax1) = plt.subplots(1, 2, figsize=(9, 3.5))
    for protocol, marker in (("sample_broadcast", "o"), ("tile_aggregate", "s")):
        rows = [e for e in report["entries"] if e["protocol"] == protocol]
        xs = [e["samples_per_ray_per_worker"] for e in rows]
        ys = [e["scalars_total"] for e in rows]
        ax0.plot(xs, ys, marker=marker, label=protocol)
    ax0.set_xlabel("samples per ray per worker")
    ax0.set_ylabel("payload scalars sent")
    ax0.legend(fontsize=8)
    ax0.set_title("traffic vs. step refinement")

    xs = np.array([r["s_bar"] for r in report["ratios"]])
    ys = np.array([r["sample_over_tile"] for r in report["ratios"]])
    ax1.plot(xs, ys, "o", label="measured")
    if len(xs) > 0:
        grid = np.linspace(0.0, xs.max() * 1.05, 50)
        ax1.plot(grid, (1.0 + 6.0 * grid) / 9.0, "--", label="(1 + 6S) / 9 model")
    if report.get("fit"):
        fit = report["fit"]
        grid = np.linspace(0.0, xs.max() * 1.05, 50)
        ax1.plot(grid, fit["slope"] * grid + fit["intercept"], ":", label="fit")
    ax1.set_xlabel("samples per ray per worker")
    ax1.set_ylabel("sample / tile scalar ratio")
    ax1.legend(fontsize=8)
    ax1.set_title("protocol cost ratio")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def save_balance_figure(report: dict, path) -> None:
    """Per-tile point (and sample) counts as bars."""
    counts = report["leaf_point_counts"]
    sample_counts = report.get("leaf_sample_counts")
    n_plots = 2 if sample_counts else 1
    fig, axes = plt.subplots(1, n_plots, figsize=(4.5 * n_plots, 3.2), squeeze=False)
    x = np.arange(len(counts))
    axes[0, 0].bar(x, counts, color="#4878cf")
    axes[0, 0].set_xlabel("tile id")
    axes[0, 0].set_ylabel("points")
    axes[0, 0].set_title("point balance")
    if sample_counts:
        axes[0, 1].bar(x, sample_counts, color="#6acc65")
        axes[0, 1].set_xlabel("tile id")
        axes[0, 1].set_ylabel("ray samples")
        axes[0, 1].set_title("render workload")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
