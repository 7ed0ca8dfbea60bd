"""Report figures for training logs and evaluation metrics.

Figures are rendered with the Agg backend and saved without timestamps, so
the same inputs give byte-identical PNG files.
"""

from __future__ import annotations

import json

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

_PNG_META = {"Software": None}


def read_log(path) -> list[dict]:
    with open(path, encoding="utf-8") as fh:
        return [json.loads(line) for line in fh if line.strip()]


def _save(fig, path):
    fig.savefig(path, dpi=100, metadata=_PNG_META)
    plt.close(fig)
    return path


def plot_loss_curve(history: list[dict], path):
    """Total loss and its parts against optimizer step."""
    fig, ax = plt.subplots(figsize=(6, 4))
    if history:
        steps = [r["step"] for r in history]
        for key, label in (("loss", "total"), ("l_r", "reconstruction"),
                           ("l_c", "contrastive"), ("l_mse", "alignment")):
            vals = np.array([r.get(key, 0.0) for r in history])
            if key == "loss" or vals.any():
                ax.plot(steps, vals, label=label, lw=1.2 if key == "loss" else 0.8)
        ax.legend(frameon=False)
    ax.set_xlabel("step")
    ax.set_ylabel("loss")
    ax.set_title("training loss")
    fig.tight_layout()
    return _save(fig, path)


def plot_metrics(rows: list[dict], ranks: dict[str, list[int]], path):
    """Per-task metric bars beside a histogram of positive ranks."""
    fig, (left, right) = plt.subplots(1, 2, figsize=(10, 4))
    keys = ("mrr", "hits1", "hits5", "hits10")
    width = 0.8 / max(len(rows), 1)
    x = np.arange(len(keys))
    for i, row in enumerate(rows):
        left.bar(x + i * width, [row[k] for k in keys], width, label=row["task"])
    left.set_xticks(x + width * (len(rows) - 1) / 2, keys)
    left.set_ylim(0, 1)
    left.set_title("metrics")
    if rows:
        left.legend(frameon=False, fontsize="small")
    all_ranks = [r for rs in ranks.values() for r in rs]
    top = max(all_ranks, default=1)
    right.hist([ranks[k] for k in ranks] if ranks else [[]], bins=np.arange(1, top + 2) - 0.5,
               label=list(ranks) or None, stacked=True)
    right.set_xlabel("rank of positive")
    right.set_ylabel("queries")
    right.set_title("rank distribution")
    fig.tight_layout()
    return _save(fig, path)
