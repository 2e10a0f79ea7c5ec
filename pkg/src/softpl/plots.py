"""Report figures rendered next to the JSON/CSV outputs.

All figures go through the Agg backend and are saved without timestamp
metadata so repeated runs produce identical files.
"""

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402
from matplotlib.patches import Patch  # noqa: E402
import numpy as np  # noqa: E402

from .io import PALETTE  # noqa: E402

STYLE = {
    "font.size": 9,
    "axes.titlesize": 10,
    "axes.labelsize": 9,
    "legend.fontsize": 8,
    "xtick.labelsize": 8,
    "ytick.labelsize": 8,
    "axes.spines.top": False,
    "axes.spines.right": False,
    "savefig.dpi": 120,
}


def _save(fig, path):
    fig.savefig(path, format="png", metadata={"Software": None})
    plt.close(fig)
    return path


def plot_ablation(rows, path):
    """Bar per (entropy weight, similarity) cell with per-seed markers."""
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=(4.5, 3.0))
        labels = []
        for i, row in enumerate(rows):
            labels.append(
                f"ent {'on' if row['entropy_weight'] else 'off'}\nsim {'on' if row['similarity'] else 'off'}"
            )
            ax.bar(i, row["miou_mean"], color="#7a9cc6", width=0.6)
            ax.plot(np.full(len(row["miou"]), i), row["miou"], "k.", ms=4, alpha=0.6)
        ax.set_xticks(range(len(rows)), labels)
        lo = min(min(r["miou"]) for r in rows)
        ax.set_ylim(max(0.0, lo - 0.05), 1.0)
        ax.set_ylabel("mIoU (held-out scenes)")
        ax.set_title("Label-entropy weight x domain similarity")
        fig.tight_layout()
        return _save(fig, path)


def plot_training(history, path):
    steps = [r["step"] for r in history]
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=(5.0, 3.4), layout="constrained")
        for key, style in (("all", "-"), ("rect", "--"), ("kld", ":"), ("ent", "-.")):
            ax.plot(steps, [r[key] for r in history], style, lw=1, label=f"L_{key}")
        ax.set_yscale("log")
        ax.set_xlabel("step")
        ax.set_ylabel("summed loss per batch")
        ax2 = ax.twinx()
        ax2.plot(steps, [r["lr"] for r in history], color="0.75", lw=0.6, label="lr", zorder=0)
        ax2.set_ylabel("learning rate", color="0.4")
        ax.set_zorder(ax2.get_zorder() + 1)
        ax.patch.set_visible(False)
        handles = ax.get_legend_handles_labels()[0] + ax2.get_legend_handles_labels()[0]
        fig.legend(handles=handles, loc="outside upper center", ncol=5, frameon=False)
        return _save(fig, path)


def plot_iou(report, path):
    names = list(report["per_class"])
    vals = [report["per_class"][n] for n in names]
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=(4.0, 2.8))
        colors = [PALETTE[i % len(PALETTE)] / 255.0 for i in range(len(names))]
        ax.bar(range(len(names)), [0.0 if v is None else v for v in vals], color=colors)
        for i, v in enumerate(vals):
            ax.text(i, (v or 0.0) + 0.01, "n/a" if v is None else f"{v:.2f}", ha="center", va="bottom")
        ax.set_xticks(range(len(names)), names)
        ax.set_ylim(0, 1.1)
        miou = report["miou"]
        ax.set_title(f"Class IoU (mIoU {miou:.3f})" if miou is not None else "Class IoU")
        fig.tight_layout()
        return _save(fig, path)


def plot_pseudo_label(source_labels, source_names, weights, fused_labels, entropy_weight, path,
                      class_names=None):
    """Per-source argmax maps, fused argmax and the inverse-entropy weight.

    The weight panel is scaled to its own range; the colorbar gives values.
    """
    n = len(source_labels) + 2
    with plt.rc_context(STYLE):
        fig, axes = plt.subplots(1, n, figsize=(1.9 * n, 2.8), layout="constrained")
        for ax, lab, name, w in zip(axes, source_labels, source_names, weights):
            ax.imshow(PALETTE[lab % len(PALETTE)], interpolation="nearest")
            ax.set_title(f"{name}\nw={w:.3f}")
        axes[-2].imshow(PALETTE[fused_labels % len(PALETTE)], interpolation="nearest")
        axes[-2].set_title("fused\nargmax")
        im = axes[-1].imshow(np.asarray(entropy_weight)[..., 0], cmap="gray", interpolation="nearest")
        axes[-1].set_title("inverse entropy\nweight W")
        fig.colorbar(im, ax=axes[-1], shrink=0.8)
        for ax in axes:
            ax.set_xticks([])
            ax.set_yticks([])
        if class_names:
            patches = [Patch(color=PALETTE[i % len(PALETTE)] / 255.0, label=c)
                       for i, c in enumerate(class_names)]
            fig.legend(handles=patches, loc="outside lower center", ncol=len(patches), frameon=False)
        return _save(fig, path)
