"""Figure rendering for the report paths (training history, experiment comparison)."""

from __future__ import annotations

from pathlib import Path
from typing import Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt

from .training import EpochRecord

_SAMPLER_COLORS = {"bag": "tab:blue", "random": "tab:orange"}


def plot_history(
    histories: dict[str, list[EpochRecord]], path: str | Path, title: str = "training history"
) -> None:
    """Loss and dev-MRR curves, one line per labelled run."""
    fig, (ax_loss, ax_mrr) = plt.subplots(1, 2, figsize=(10, 4))
    for label, records in histories.items():
        epochs = [r.epoch for r in records]
        ax_loss.plot(epochs, [r.mean_total for r in records], label=label, alpha=0.8)
        dev = [(r.epoch, r.dev_mrr) for r in records if r.dev_mrr is not None]
        if dev:
            ax_mrr.plot([e for e, _ in dev], [m for _, m in dev], label=label, alpha=0.8)
    ax_loss.set_xlabel("epoch")
    ax_loss.set_ylabel("mean training loss")
    ax_loss.legend(fontsize=7)
    ax_mrr.set_xlabel("epoch")
    ax_mrr.set_ylabel("dev MRR")
    fig.suptitle(title)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def plot_experiment(
    rows: Sequence[tuple[str, int, float]],
    bm25_mrr: float,
    path: str | Path,
    k: int = 100,
) -> None:
    """Per-seed dev MRR by sampler, with per-sampler means and the BM25 baseline."""
    fig, ax = plt.subplots(figsize=(6, 4))
    samplers = sorted({sampler for sampler, _, _ in rows})
    for x, sampler in enumerate(samplers):
        values = [mrr for s, _, mrr in rows if s == sampler]
        color = _SAMPLER_COLORS.get(sampler, "tab:gray")
        ax.scatter([x] * len(values), values, color=color, alpha=0.7, label=f"{sampler} (seeds)")
        mean = sum(values) / len(values)
        ax.hlines(mean, x - 0.25, x + 0.25, color=color, linewidth=2)
        ax.annotate(f"{mean:.3f}", (x + 0.27, mean), fontsize=8, va="center")
    ax.axhline(bm25_mrr, color="tab:green", linestyle="--", label=f"BM25 first stage ({bm25_mrr:.3f})")
    ax.set_xticks(range(len(samplers)))
    ax.set_xticklabels(samplers)
    ax.set_ylabel(f"dev MRR@{k}")
    ax.set_title("reranker dev MRR by sampler")
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
