"""Static figure rendering for report output.

Batch-only: every report run writes vector graphics (SVG) next to the
delimited tables, with deterministic hash salts so reruns produce stable
files.  No interactive UI.
"""

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np


def _styled_axes(title, xlabel, ylabel):
    fig, ax = plt.subplots(figsize=(5.0, 3.2))
    ax.set_title(title, fontsize=10)
    ax.set_xlabel(xlabel, fontsize=9)
    ax.set_ylabel(ylabel, fontsize=9)
    ax.tick_params(labelsize=8)
    ax.grid(True, alpha=0.3, linewidth=0.5)
    return fig, ax


def save_histogram(hist, path, title="", xlabel="value", ylabel="count", salt=""):
    """Render a Histogram to an SVG file."""
    matplotlib.rcParams["svg.hashsalt"] = salt or "bosegas"
    fig, ax = _styled_axes(title, xlabel, ylabel)
    widths = np.diff(hist.edges)
    ax.bar(hist.edges[:-1], hist.counts, width=widths, align="edge",
           color="#4878a8", edgecolor="white", linewidth=0.4)
    fig.tight_layout()
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)
    return path


def save_series(xs, ys, path, title="", xlabel="", ylabel="", yerr=None, salt=""):
    """Render a simple (optionally error-barred) series to an SVG file."""
    matplotlib.rcParams["svg.hashsalt"] = salt or "bosegas"
    fig, ax = _styled_axes(title, xlabel, ylabel)
    if yerr is not None:
        ax.errorbar(xs, ys, yerr=yerr, fmt="o-", ms=3, lw=1, capsize=2,
                    color="#a84848")
    else:
        ax.plot(xs, ys, "o-", ms=3, lw=1, color="#a84848")
    fig.tight_layout()
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)
    return path
