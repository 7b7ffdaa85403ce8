"""PNG figures written next to the CLI's CSV outputs."""

from __future__ import annotations

from pathlib import Path
from typing import Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .model import TARGETS  # noqa: E402

STYLE = {
    "figure.figsize": (5.0, 3.4),
    "figure.dpi": 120,
    "font.size": 9,
    "axes.spines.top": False,
    "axes.spines.right": False,
    "axes.grid": True,
    "grid.alpha": 0.3,
    "legend.frameon": False,
    "svg.hashsalt": "hlsgraph",
}


def _save(fig, path: Path) -> Path:
    # no timestamp metadata so reruns produce identical files
    fig.tight_layout()
    fig.savefig(path, metadata={"Software": None})
    plt.close(fig)
    return path


def training_curve(history: Sequence[dict], path: str | Path) -> Path:
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        epochs = [h["epoch"] for h in history]
        ax.plot(epochs, [h["train_loss"] for h in history], label="train loss")
        ax.plot(epochs, [h["val_mae"] for h in history], label="validation MAE")
        best = int(np.argmin([h["val_mae"] for h in history]))
        ax.axvline(epochs[best], color="0.6", lw=0.8, ls="--")
        ax.set_yscale("log")
        ax.set_xlabel("epoch")
        ax.set_ylabel("log-space MAE")
        ax.legend()
        return _save(fig, Path(path))


def parity(pred: np.ndarray, true: np.ndarray, path: str | Path) -> Path:
    """Predicted against true value, one panel per target."""
    with plt.rc_context(STYLE):
        fig, axes = plt.subplots(1, 4, figsize=(10, 2.8))
        for k, (ax, name) in enumerate(zip(axes, TARGETS)):
            t, p = true[:, k], pred[:, k]
            ax.scatter(t, p, s=6, alpha=0.6)
            hi = max(float(t.max(initial=0)), float(p.max(initial=0)), 1.0)
            ax.plot([0, hi], [0, hi], color="0.4", lw=0.8)
            ax.set_title(name)
            ax.set_xlabel("true")
        axes[0].set_ylabel("predicted")
        return _save(fig, Path(path))


def adrs_curve(ks: Sequence[int], adrs: Sequence[float], synth: Sequence[float], path: str | Path) -> Path:
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        ax.plot(ks, adrs, marker="o", label="ADRS")
        ax.set_xlabel("Pareto fronts queried")
        ax.set_ylabel("ADRS")
        ax.set_xticks(list(ks))
        twin = ax.twinx()
        twin.plot(ks, synth, marker="s", color="C1", label="syntheses")
        twin.set_ylabel("syntheses")
        twin.grid(False)
        lines = ax.get_lines() + twin.get_lines()
        ax.legend(lines, [l.get_label() for l in lines], loc="upper center")
        return _save(fig, Path(path))


def ablation_bars(settings: Sequence[str], mape: dict[str, dict[str, float]], path: str | Path) -> Path:
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=(6, 3.4))
        width = 0.8 / len(settings)
        x = np.arange(len(TARGETS))
        for j, s in enumerate(settings):
            ax.bar(x + j * width, [mape[s][t] for t in TARGETS], width, label=s)
        ax.set_xticks(x + width * (len(settings) - 1) / 2)
        ax.set_xticklabels(TARGETS)
        ax.set_ylabel("MAPE (%)")
        ax.legend(ncol=2)
        return _save(fig, Path(path))


def pareto_plot(true_pts: np.ndarray, reference: np.ndarray, found: np.ndarray, path: str | Path) -> Path:
    """Columns are (latency, area)."""
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        ax.scatter(true_pts[:, 1], true_pts[:, 0], s=5, color="0.75", label="all configurations")
        ref = reference[np.argsort(reference[:, 1])]
        ax.step(ref[:, 1], ref[:, 0], where="post", color="C0", label="true front")
        ax.scatter(found[:, 1], found[:, 0], s=14, color="C3", marker="x", label="explored front")
        ax.set_xlabel("aggregate area")
        ax.set_ylabel("latency")
        ax.legend()
        return _save(fig, Path(path))
