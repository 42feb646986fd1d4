"""Report figures rendered to image files with the Agg backend."""
from __future__ import annotations

from collections import defaultdict
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

STYLE = {
    "figure.dpi": 120,
    "font.size": 9,
    "axes.spines.top": False,
    "axes.spines.right": False,
    "axes.grid": True,
    "grid.alpha": 0.3,
    "legend.frameon": False,
}


def _save(fig, path) -> Path:
    path = Path(path)
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)
    return path


def plot_samples(real_by_class: dict[int, np.ndarray], gen_by_class: dict[int, np.ndarray], path,
                 dims: tuple[int, int] = (0, 1)) -> Path:
    """Real and generated points per class, projected on two coordinates."""
    i, j = dims
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=(5, 4))
        colors = plt.cm.viridis(np.linspace(0, 0.9, max(len(real_by_class), 2)))
        for col, c in zip(colors, sorted(real_by_class)):
            r = real_by_class[c]
            ax.scatter(r[:, i], r[:, j] if r.shape[1] > 1 else np.zeros(len(r)), s=4, color=col,
                       alpha=0.25, label=f"class {c} real")
            if c in gen_by_class:
                g = gen_by_class[c]
                ax.scatter(g[:, i], g[:, j] if g.shape[1] > 1 else np.zeros(len(g)), s=4, color=col,
                           marker="x", alpha=0.6, label=f"class {c} gen")
        ax.set_xlabel(f"x{i + 1}")
        ax.set_ylabel(f"x{j + 1}")
        ax.legend(fontsize=7, markerscale=2, ncol=2)
        return _save(fig, path)


def plot_frechet_by_class(per_variant: dict[str, list[float]], path) -> Path:
    """Grouped bars of per-class Frechet distance, one group per class."""
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=(5, 3.2))
        names = list(per_variant)
        C = len(per_variant[names[0]])
        width = 0.8 / len(names)
        x = np.arange(1, C + 1)
        for k, name in enumerate(names):
            ax.bar(x + (k - (len(names) - 1) / 2) * width, per_variant[name], width, label=name)
        ax.set_xticks(x)
        ax.set_xlabel("class")
        ax.set_ylabel("Frechet distance")
        ax.set_yscale("log")
        ax.legend()
        return _save(fig, path)


def plot_geometry(records, path) -> Path:
    """Ordinal residual against timestep, one line per class triplet."""
    lines = defaultdict(list)
    for r in records:
        lines[(r.p, r.q, r.r)].append((r.t, r.residual))
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=(5, 3.2))
        for key, pts in sorted(lines.items()):
            pts.sort()
            ax.plot([p[0] for p in pts], [p[1] for p in pts], marker="o", ms=3,
                    label="-".join(map(str, key)))
        ax.set_xlabel("t")
        ax.set_ylabel("residual")
        if any(p[1] > 0 for pts in lines.values() for p in pts):
            ax.set_yscale("symlog", linthresh=1e-8)
        ax.legend(title="triplet", fontsize=7)
        return _save(fig, path)


def plot_loss_log(rows, path, window: int = 200) -> Path:
    """Running mean of the logged loss terms against iteration."""
    arr = np.array([r[:6] for r in rows], dtype=float)
    w = max(1, min(window, len(arr)))
    kernel = np.ones(w) / w
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=(5, 3.2))
        it = arr[w - 1:, 0]
        for col, name in ((3, "dm"), (4, "ordinal"), (5, "total")):
            if not np.any(arr[:, col] > 0):
                continue
            ax.plot(it, np.convolve(arr[:, col], kernel, mode="valid"), label=name, lw=1)
        ax.set_xlabel("iteration")
        ax.set_ylabel("loss")
        ax.set_yscale("log")
        ax.legend()
        return _save(fig, path)
