"""Figure rendering for the report path: PNGs written next to the CSV output."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt

from .harness import METRICS

# strip creation timestamps so reruns produce identical bytes
_SAVE_KW = {"dpi": 110, "metadata": {"Date": None}}


def render_eval_figure(report, path):
    """Per-case metric values, one panel per metric."""
    rows = [r for r in report.rows if r["status"] == "ok"]
    fig, axes = plt.subplots(2, 2, figsize=(10, 7), sharex=True)
    labels = [r["case_id"] for r in rows]
    x = range(len(rows))
    for ax, metric in zip(axes.ravel(), METRICS):
        values = [r.get(metric) for r in rows]
        known = [(i, v) for i, v in zip(x, values) if v is not None]
        if known:
            ax.bar([i for i, _ in known], [v for _, v in known], color="#4878d0")
        mean, sd, n = report.aggregates[metric]
        if mean is not None:
            ax.axhline(mean, color="#d65f5f", lw=1.2,
                       label=f"mean {mean:.3f} ± {sd:.3f} (n={n})")
            ax.legend(fontsize=8, loc="lower right")
        ax.set_title(metric)
        ax.set_xticks(list(x))
        ax.set_xticklabels(labels, rotation=75, fontsize=6)
    unit = report.config.get("unit", "voxel")
    fig.suptitle(f"per-case metrics ({report.config.get('backend')}, unit={unit})")
    fig.tight_layout()
    fig.savefig(Path(path), **_SAVE_KW)
    plt.close(fig)


def render_sweep_figure(rows, path):
    """Mean Dice vs box-expansion level with a one-sigma band."""
    fig, ax = plt.subplots(figsize=(7, 4.5))
    by_backend = {}
    for r in rows:
        by_backend.setdefault(r["backend"], []).append(r)
    for backend, rws in by_backend.items():
        rws = sorted(rws, key=lambda r: r["level"])
        levels = [r["level"] for r in rws]
        means = [r["mean_dice"] for r in rws]
        sds = [r["sd_dice"] or 0.0 for r in rws]
        ax.plot(levels, means, "o-", label=backend)
        ax.fill_between(
            levels,
            [m - s for m, s in zip(means, sds)],
            [m + s for m, s in zip(means, sds)],
            alpha=0.2,
        )
    ax.set_xlabel("box expansion (pixels)")
    ax.set_ylabel("mean Dice")
    ax.set_title("segmentation robustness to box expansion")
    ax.legend()
    ax.grid(alpha=0.3)
    fig.tight_layout()
    fig.savefig(Path(path), **_SAVE_KW)
    plt.close(fig)


def render_ablate_figure(rows, path):
    """Grouped bars: metric means per input configuration."""
    fig, axes = plt.subplots(1, len(METRICS), figsize=(13, 3.6))
    configs = [r["config"] for r in rows]
    for ax, metric in zip(axes, METRICS):
        means = [r[f"{metric}_mean"] for r in rows]
        sds = [r[f"{metric}_sd"] or 0.0 for r in rows]
        xs = range(len(configs))
        known = [(x, m, s) for x, m, s in zip(xs, means, sds) if m is not None]
        if known:
            ax.bar([x for x, _, _ in known], [m for _, m, _ in known],
                   yerr=[s for _, _, s in known], color="#6acc64", capsize=3)
        ax.set_xticks(list(xs))
        ax.set_xticklabels(configs, rotation=30, fontsize=7, ha="right")
        ax.set_title(metric)
    fig.suptitle("input-channel ablation")
    fig.tight_layout()
    fig.savefig(Path(path), **_SAVE_KW)
    plt.close(fig)
