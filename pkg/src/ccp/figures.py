"""Matplotlib report figures written next to the CSV outputs."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

STYLE = {
    "figure.dpi": 100,
    "savefig.dpi": 150,
    "font.size": 10,
    "axes.spines.top": False,
    "axes.spines.right": False,
}

# one colour per method, in the order the five bars are usually shown
METHOD_COLORS = {
    "ccp": "#1f77b4",
    "ccp+external": "#ff7f0e",
    "ccp+tsne": "#2ca02c",
    "raw+external": "#d62728",
    "raw+tsne": "#9467bd",
}


def savefig(fig, path):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(path, bbox_inches="tight", metadata={"Software": None})
    plt.close(fig)
    return path


def ari_bars(reports, path, title=None):
    """Bar chart of mean ARI per method with one-std error bars."""
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=(1.2 * len(reports) + 1.5, 3.2))
        names = [r.method for r in reports]
        means = [r.mean_ari for r in reports]
        stds = [r.std_ari for r in reports]
        colors = [METHOD_COLORS.get(n, "#7f7f7f") for n in names]
        ax.bar(range(len(names)), means, yerr=stds, color=colors, capsize=3)
        ax.set_xticks(range(len(names)), names, rotation=20)
        ax.set_ylabel("mean ARI")
        ax.set_ylim(min(0.0, min(means) - 0.05), 1.05)
        if title:
            ax.set_title(title)
        return savefig(fig, path)


def variance_curve(variances, cutoffs, path, title=None):
    """Gene variances in descending order with the LV cutoff positions marked."""
    v = np.sort(np.asarray(variances, dtype=np.float64))[::-1]
    n = v.size
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=(5.5, 3.2))
        ax.plot(np.arange(1, n + 1), v, color="black", lw=1)
        for k, vc in enumerate(cutoffs):
            pos = int(np.floor(vc * n))
            color = plt.cm.tab10(k % 10)
            ax.axvline(pos, ls="--", color=color, lw=1, label=f"v_c={vc:g} ({n - pos} LV genes)")
        ax.set_xlabel("gene rank")
        ax.set_ylabel("variance")
        ax.set_yscale("symlog", linthresh=max(1e-6, float(v[v > 0].min()) if (v > 0).any() else 1e-6))
        ax.legend(frameon=False, fontsize=8)
        if title:
            ax.set_title(title)
        return savefig(fig, path)


def ari_heatmap(vc_values, n_values, grid, path, title=None):
    """Mean ARI over the (v_c, N) sweep; NaN cells are failed runs."""
    grid = np.asarray(grid, dtype=np.float64)
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=(0.9 * len(n_values) + 2, 0.7 * len(vc_values) + 1.5))
        im = ax.imshow(np.ma.masked_invalid(grid), vmin=0, vmax=1, cmap="viridis", aspect="auto")
        ax.set_xticks(range(len(n_values)), [str(n) for n in n_values])
        ax.set_yticks(range(len(vc_values)), [f"{v:g}" for v in vc_values])
        ax.set_xlabel("super-genes N")
        ax.set_ylabel("variance cutoff v_c")
        for r in range(grid.shape[0]):
            for c in range(grid.shape[1]):
                txt = "fail" if np.isnan(grid[r, c]) else f"{grid[r, c]:.2f}"
                ax.text(c, r, txt, ha="center", va="center", fontsize=8, color="white")
        fig.colorbar(im, ax=ax, label="mean ARI")
        if title:
            ax.set_title(title)
        return savefig(fig, path)
