"""Matplotlib figures written as SVG next to the CSV/JSON outputs.

SVG output is made byte-reproducible by fixing the element-id hash salt
and dropping the creation date from the metadata.
"""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402

from .signal_model import LabelClass  # noqa: E402

STYLE = {
    "svg.hashsalt": "deepbrain",
    "svg.fonttype": "none",
    "font.size": 9,
    "axes.grid": True,
    "grid.alpha": 0.3,
    "figure.figsize": (5.0, 3.6),
}


def _save(fig, path):
    fig.tight_layout()
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)


def plot_roc(curves: dict, path, title: str = "ROC") -> None:
    """``curves`` maps a legend label to ``(RocCurve, auc)``."""
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        ax.plot([0, 1], [0, 1], color="0.6", lw=0.8, ls="--")
        for label, (curve, area) in curves.items():
            ax.plot(curve.fpr, curve.tpr, lw=1.4, label=f"{label} (AUC {area:.3f})")
        ax.set_xlim(0, 1)
        ax.set_ylim(0, 1.02)
        ax.set_xlabel("False positive rate")
        ax.set_ylabel("True positive rate")
        ax.set_title(title)
        ax.legend(loc="lower right", fontsize=7)
        _save(fig, path)


def plot_history(history, path, title: str = "Training") -> None:
    epochs = [r.epoch for r in history]
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        ax.plot(epochs, [r.loss for r in history], color="C0", label="train loss")
        ax.set_xlabel("epoch")
        ax.set_ylabel("cross-entropy")
        ax2 = ax.twinx()
        ax2.plot(epochs, [r.train_accuracy for r in history], color="C1", label="train acc")
        ax2.plot(epochs, [r.valid_accuracy for r in history], color="C2", label="valid acc")
        ax2.set_ylim(0, 1.02)
        ax2.set_ylabel("accuracy")
        ax2.grid(False)
        lines = ax.get_lines() + ax2.get_lines()
        ax.legend(lines, [l.get_label() for l in lines], loc="center right", fontsize=7)
        ax.set_title(title)
        _save(fig, path)


def plot_comparison(rows: list[dict], path, title: str = "Model comparison") -> None:
    metrics = ["accuracy", "precision", "recall", "f1", "auc"]
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=(6.0, 3.6))
        width = 0.8 / max(len(rows), 1)
        for k, row in enumerate(rows):
            xs = [i + (k - (len(rows) - 1) / 2) * width for i in range(len(metrics))]
            ax.bar(xs, [row[m] for m in metrics], width=width, label=row["method"])
        ax.set_xticks(range(len(metrics)))
        ax.set_xticklabels(metrics)
        ax.set_ylim(0, 1.05)
        ax.set_title(title)
        ax.legend(fontsize=7, loc="lower right")
        _save(fig, path)


def plot_similarity(sim, path, title: str = "Spearman similarity") -> None:
    labels = [c.key.replace("_to_", "→") for c in LabelClass]
    with plt.rc_context(dict(STYLE, **{"axes.grid": False})):
        fig, ax = plt.subplots(figsize=(4.6, 4.0))
        im = ax.imshow(sim.matrix, vmin=-1, vmax=1, cmap="coolwarm")
        ax.set_xticks(range(4))
        ax.set_yticks(range(4))
        ax.set_xticklabels(labels, rotation=30, ha="right")
        ax.set_yticklabels(labels)
        for i in range(4):
            for j in range(4):
                ax.text(j, i, f"{sim.matrix[i, j]:.3f}", ha="center", va="center", fontsize=7)
        fig.colorbar(im, ax=ax, fraction=0.046)
        ax.set_title(title)
        _save(fig, path)
