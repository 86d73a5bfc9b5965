"""Report figures written next to the CSV outputs (headless Agg backend)."""

from __future__ import annotations

import os
import tempfile
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402


def _save(fig, path):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    os.close(fd)
    try:
        fig.savefig(tmp, format=path.suffix.lstrip(".") or "png", dpi=120,
                    metadata={"Software": None})
        os.replace(tmp, path)
    finally:
        plt.close(fig)
        if os.path.exists(tmp):
            os.unlink(tmp)
    return path


def plot_rp_curves(curves: dict, path, title: str = "Recall vs 1-precision"):
    """``curves`` maps a legend label to a list of ``RPCurvePoint``."""
    fig, ax = plt.subplots(figsize=(5, 4))
    for label, pts in curves.items():
        ax.plot([p.one_minus_precision for p in pts], [p.recall for p in pts], marker=".", label=str(label))
    ax.set_xlim(0, 1)
    ax.set_ylim(0, 1)
    ax.set_xlabel("1 - precision")
    ax.set_ylabel("recall")
    ax.set_title(title)
    ax.legend(loc="lower right", fontsize="small")
    ax.grid(alpha=0.3)
    return _save(fig, path)


def plot_lrf_histogram(edges, counts, path):
    counts = np.asarray(counts, dtype=float)
    share = counts / counts.sum() * 100 if counts.sum() else counts
    fig, ax = plt.subplots(figsize=(5, 3.5))
    ax.bar(edges[:-1], share, width=np.diff(edges), align="edge", edgecolor="k")
    ax.set_xlabel("LRF error (degrees)")
    ax.set_ylabel("% of point pairs")
    ax.set_xlim(edges[0], edges[-1])
    return _save(fig, path)


def plot_sweep(labels, aucs, path, xlabel: str):
    fig, ax = plt.subplots(figsize=(5, 3.5))
    ax.plot(range(len(aucs)), aucs, marker="o")
    ax.set_xticks(range(len(aucs)))
    ax.set_xticklabels([str(v) for v in labels])
    ax.set_xlabel(xlabel)
    ax.set_ylabel("area under RP curve")
    ax.grid(alpha=0.3)
    return _save(fig, path)
