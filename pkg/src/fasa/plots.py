"""Figure rendering for the report-producing CLI paths.

Each renderer writes a PNG next to the delimited/JSON report it accompanies.
Import stays local to this module so library use never touches matplotlib
display machinery.
"""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np


def render_heatmap(path, labels, matrix) -> None:
    """Agreement heatmap: chunks on x, heads on y, values in [0, 1]."""
    matrix = np.asarray(matrix, dtype=np.float64)
    fig, ax = plt.subplots(
        figsize=(max(4.0, 0.12 * matrix.shape[1]), max(2.5, 0.3 * len(labels) + 1.2))
    )
    im = ax.imshow(matrix, aspect="auto", cmap="viridis", vmin=0.0, vmax=1.0)
    ax.set_xlabel("frequency chunk")
    ax.set_ylabel("head")
    ax.set_yticks(range(len(labels)), labels=labels)
    fig.colorbar(im, ax=ax, label="mean agreement")
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def render_bench(path, rows, asymptote: float) -> None:
    """Cost-model curves: speedup and traffic fraction against context length."""
    t = [r["t"] for r in rows]
    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(9, 3.5))

    ax1.plot(t, [r["model_speedup"] for r in rows], "o-", label="model")
    ax1.axhline(asymptote, color="gray", ls="--", lw=1, label=f"asymptote {asymptote:g}")
    ax1.set_xscale("log", base=2)
    ax1.set_xlabel("context length t")
    ax1.set_ylabel("speedup vs dense")
    ax1.legend()

    ax2.plot(t, [r["model_fraction"] for r in rows], "o-", label="model")
    ax2.plot(t, [r["measured_fraction"] for r in rows], "s--", label="measured")
    ax2.set_xscale("log", base=2)
    ax2.set_xlabel("context length t")
    ax2.set_ylabel("fraction of dense traffic")
    ax2.legend()

    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
