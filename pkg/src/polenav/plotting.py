"""Cost-versus-performance figure, drawn from a report CSV only."""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")
matplotlib.rcParams["svg.hashsalt"] = "polenav"
import matplotlib.pyplot as plt  # noqa: E402

from .report import read_report, summarize  # noqa: E402

TRAVEL_LABEL = "travel distance [m]"
RANK_LABEL = "ground-truth rank"
ITERATIONS_LABEL = "iterations"


def plot_summary(summaries, path, title="Cost vs. performance"):
    """One point per method: mean rank across, mean cost up.

    The left panel uses travel distance as the cost, the right panel the
    number of iterations.
    """
    fig, axes = plt.subplots(1, 2, figsize=(9, 4), constrained_layout=True)
    for ax, attr, label in ((axes[0], "mean_travel", TRAVEL_LABEL), (axes[1], "mean_iterations", ITERATIONS_LABEL)):
        for s in summaries:
            y = getattr(s, attr)
            ax.scatter(s.mean_rank, y, s=36)
            ax.annotate(s.method, (s.mean_rank, y), textcoords="offset points", xytext=(4, 4), fontsize=8)
        ax.set_xlabel(RANK_LABEL)
        ax.set_ylabel(label)
        ax.grid(True, alpha=0.3)
    fig.suptitle(title)
    # fixed metadata keeps the SVG byte-stable across runs
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)
    return path


def plot_report(csv_path, out_path):
    """Parse ``csv_path`` first so a malformed report never leaves a figure behind."""
    rows = read_report(csv_path)
    return plot_summary(summarize(rows), out_path)
