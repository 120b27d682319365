"""Figures that accompany the CLI's delimited output."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

STYLE = {
    "font.size": 9,
    "axes.titlesize": 9,
    "axes.labelsize": 9,
    "legend.fontsize": 8,
    "xtick.labelsize": 8,
    "ytick.labelsize": 8,
    "axes.spines.top": False,
    "axes.spines.right": False,
    "figure.dpi": 150,
    "savefig.bbox": "tight",
}

GOLDEN = (np.sqrt(5) - 1) / 2


def figure(width: float = 4.5, height: float | None = None, **kw):
    return plt.subplots(figsize=(width, height or width * GOLDEN), **kw)


def _save(fig, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(path)
    plt.close(fig)
    return path


def plot_loss_trace(trace: list[dict], path, keys=("total", "mse", "lpips", "decoupling", "cycle", "p")) -> Path:
    with plt.rc_context(STYLE):
        fig, ax = figure()
        it = np.arange(1, len(trace) + 1)
        for k in keys:
            ax.plot(it, [t[k] for t in trace], label=k, lw=1.2)
        ax.set_xlabel("iteration")
        ax.set_ylabel("loss")
        ax.legend(frameon=False, ncol=2)
        return _save(fig, path)


def plot_mapper_trajectory(trajectory: list[dict], path) -> Path:
    """Mean (and range) of h, j, mu per iteration, plus lambda_p."""
    with plt.rc_context(STYLE):
        fig, axes = figure(6.5, 2.2, ncols=4)
        it = np.arange(1, len(trajectory) + 1)
        for ax, key in zip(axes, ("h", "j", "mu")):
            vals = np.array([np.atleast_1d(s[key]) for s in trajectory])
            ax.plot(it, vals.mean(1), lw=1.2)
            ax.fill_between(it, vals.min(1), vals.max(1), alpha=0.25, lw=0)
            ax.set_title(key)
            ax.set_xlabel("iteration")
        axes[3].plot(it, [s["lambda_p"] for s in trajectory], lw=1.2)
        axes[3].set_title("lambda_p")
        axes[3].set_xlabel("iteration")
        fig.tight_layout()
        return _save(fig, path)


def plot_p_marginals(p_codes: np.ndarray, mean: np.ndarray, std: np.ndarray, path, n_dims: int = 4) -> Path:
    """Histograms of true P coordinates against the fitted Gaussian densities."""
    n_dims = min(n_dims, p_codes.shape[1])
    with plt.rc_context(STYLE):
        fig, axes = figure(1.8 * n_dims, 1.8, ncols=n_dims, squeeze=False)
        for d, ax in enumerate(axes[0]):
            x = p_codes[:, d]
            ax.hist(x, bins=60, density=True, alpha=0.6, label="P (true)")
            grid = np.linspace(x.min(), x.max(), 200)
            pdf = np.exp(-0.5 * ((grid - mean[d]) / std[d]) ** 2) / (std[d] * np.sqrt(2 * np.pi))
            ax.plot(grid, pdf, lw=1.2, label="P (pseudo)")
            ax.set_title(f"dim {d}")
            ax.set_yticks([])
        axes[0][0].legend(frameon=False)
        fig.tight_layout()
        return _save(fig, path)


def plot_kl_bars(bundles, path) -> Path:
    from .domain_stats import KL_KEYS

    with plt.rc_context(STYLE):
        fig, ax = figure(5.5)
        names = [b.domain_name for b in bundles]
        x = np.arange(len(names))
        width = 0.8 / len(KL_KEYS)
        for i, key in enumerate(KL_KEYS):
            ax.bar(x + i * width, [b.kl_report[key] for b in bundles], width, label=key)
        ax.set_xticks(x + 0.4 - width / 2, names)
        ax.set_ylabel("KL (nats)")
        ax.set_yscale("symlog", linthresh=0.1)
        ax.legend(frameon=False, fontsize=7)
        return _save(fig, path)


def plot_metric_bars(rows: list[dict], path) -> Path:
    """One panel per metric, one bar per task."""
    keys = sorted({(r["metric"], str(r["bins"])) for r in rows})
    with plt.rc_context(STYLE):
        fig, axes = figure(2.2 * len(keys), 2.2, ncols=len(keys), squeeze=False)
        for ax, (metric, bins) in zip(axes[0], keys):
            sel = [r for r in rows if r["metric"] == metric and str(r["bins"]) == bins]
            ax.bar([r["task"] for r in sel], [r["value"] for r in sel])
            ax.set_title(metric + (f" ({bins} bins)" if bins else ""))
            ax.tick_params(axis="x", rotation=45)
        fig.tight_layout()
        return _save(fig, path)
