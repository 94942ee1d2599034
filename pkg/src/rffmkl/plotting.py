"""Figures for CLI reports: kernel weights, top-k accuracy curves and method
comparison bars.  Rendered off-screen to PNG."""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

_PNG_META = {"Software": None}


def _save(fig, path):
    fig.tight_layout()
    fig.savefig(path, dpi=100, metadata=_PNG_META)
    plt.close(fig)


def plot_kernel_weights(beta, group_names, path, title: str = "Kernel weights"):
    """Bars of beta, one cluster per group, one bar per bandwidth."""
    beta = np.asarray(beta)
    p, q = beta.shape
    fig, ax = plt.subplots(figsize=(min(12.0, max(5.0, 0.12 * p * q + 2)), 3.5))
    x = np.arange(p * q)
    colors = plt.cm.tab10(np.repeat(np.arange(p) % 10, q))
    ax.bar(x, beta.ravel(), color=colors, width=0.85)
    ax.set_xticks(np.arange(p) * q + (q - 1) / 2)
    step = -(-p // 25)  # at most 25 labels
    ax.set_xticks(ax.get_xticks()[::step])
    ax.set_xticklabels(list(group_names)[::step], rotation=45 if p > 6 else 0,
                       ha="right" if p > 6 else "center", fontsize=8 if p > 12 else 10)
    for l in range(1, p if q > 1 else 0):
        ax.axvline(l * q - 0.5, color="0.8", lw=0.8)
    ax.set_ylabel("beta")
    ax.set_title(title)
    if q > 1:
        ax.set_xlabel("group (bars within a group: increasing bandwidth)")
    _save(fig, path)


def plot_accuracy_curve(points, path, title: str = "Accuracy vs. selected features"):
    ks = np.array([pt.k for pt in points])
    mean = np.array([pt.mean_acc for pt in points])
    std = np.array([pt.std_acc for pt in points])
    fig, ax = plt.subplots(figsize=(5.0, 3.5))
    ax.errorbar(ks, mean, yerr=std, marker="o", capsize=3)
    if len(ks) > 2 and ks.max() / ks.min() >= 8:
        ax.set_xscale("log", base=2)
        ax.set_xticks(ks)
        ax.set_xticklabels([str(k) for k in ks])
        ax.minorticks_off()
    ax.set_xlabel("number of top-ranked features k")
    ax.set_ylabel("test accuracy")
    ax.set_title(title)
    ax.grid(alpha=0.3)
    _save(fig, path)


def plot_bench(summaries, path, metric: str = "acc"):
    """Mean +/- std of one metric per method."""
    names = [s.method for s in summaries]
    mean = [s.mean[metric] for s in summaries]
    std = [s.std[metric] for s in summaries]
    fig, ax = plt.subplots(figsize=(max(4.0, 0.9 * len(names) + 1.5), 3.5))
    ax.bar(np.arange(len(names)), mean, yerr=std, capsize=3, color="tab:blue")
    ax.set_xticks(np.arange(len(names)))
    ax.set_xticklabels(names, rotation=30, ha="right")
    ax.set_ylabel(metric.upper())
    lo = min((m - s for m, s in zip(mean, std)), default=0.0) - 0.05
    ax.set_ylim(min(0.0, lo) if metric == "mcc" else max(0.0, lo), 1.02)
    ax.set_title(f"Mean {metric.upper()} over trials")
    _save(fig, path)
