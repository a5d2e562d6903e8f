"""Report figures rendered next to the delimited training trace.

Everything here draws straight to files through the Agg backend, so the
renderers work the same headless as interactively. Columns that were never
measured (held-out metrics without a held-out split) arrive as NaN and are
simply left off the axes.
"""

from __future__ import annotations

import math

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np


def _finite_series(rows, name: str) -> tuple[list[int], list[float]]:
    xs, ys = [], []
    for row in rows:
        value = getattr(row, name)
        if math.isfinite(value):
            xs.append(row.epoch)
            ys.append(value)
    return xs, ys


def convergence_figure(rows, path, title: str | None = None) -> str:
    """Two panels over epochs: the training objectives with held-out accuracy
    on a twin axis, and the perplexities on a log scale."""
    fig, (ax_obj, ax_perp) = plt.subplots(2, 1, figsize=(7.0, 7.5), sharex=True)

    for name, style in (("train_ncll", "-"), ("train_hinge", "--")):
        xs, ys = _finite_series(rows, name)
        if xs:
            ax_obj.plot(xs, ys, style, color="tab:blue",
                        label=name.replace("_", " "))
    ax_obj.set_ylabel("training objective", color="tab:blue")
    ax_obj.tick_params(axis="y", labelcolor="tab:blue")

    xs, ys = _finite_series(rows, "heldout_accuracy")
    if xs:
        ax_acc = ax_obj.twinx()
        ax_acc.plot(xs, ys, "-", color="tab:red", label="heldout accuracy")
        ax_acc.set_ylabel("heldout accuracy", color="tab:red")
        ax_acc.tick_params(axis="y", labelcolor="tab:red")
        ax_acc.set_ylim(0.0, 1.0)
    ax_obj.legend(loc="upper right", fontsize="small")

    for name, style in (("train_perplexity", "-"), ("test_perplexity", "--")):
        xs, ys = _finite_series(rows, name)
        if xs and all(v > 0.0 for v in ys):
            ax_perp.plot(xs, ys, style, label=name.replace("_", " "))
    ax_perp.set_yscale("log")
    ax_perp.set_xlabel("epoch")
    ax_perp.set_ylabel("per-token perplexity")
    ax_perp.legend(loc="upper right", fontsize="small")

    if title:
        fig.suptitle(title)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return str(path)


def toy_fit_figure(y: np.ndarray, x: np.ndarray, params, path,
                   title: str | None = None) -> str:
    """Per-class histograms of the one-dimensional feature with the fitted
    class-weighted normal densities drawn on top."""
    fig, ax = plt.subplots(figsize=(7.0, 4.5))
    colors = ("tab:blue", "tab:orange")
    grid = np.linspace(float(x.min()) - 1.0, float(x.max()) + 1.0, 600)
    for k in (0, 1):
        values = x[y == k]
        if values.size:
            ax.hist(values, bins=80, density=True, alpha=0.35,
                    color=colors[k], label=f"class {k} data")
        p = params.class_probs[k]
        mean = params.means[k]
        sigma = params.sigmas[k]
        density = p * np.exp(-0.5 * ((grid - mean) / sigma) ** 2) / (
            sigma * math.sqrt(2.0 * math.pi)
        )
        ax.plot(grid, density, color=colors[k],
                label=f"class {k} fit (p={p:.2f}, m={mean:.2f}, s={sigma:.2f})")
    ax.set_xlabel("feature value")
    ax.set_ylabel("density (class weighted)")
    ax.legend(fontsize="small")
    if title:
        ax.set_title(title)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return str(path)
