"""Matplotlib rendering of sweep reports: informedness (and accuracy) against
the fraction of target-subject data used for training."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

STYLE = {
    "font.size": 9,
    "axes.labelsize": 9,
    "legend.fontsize": 7,
    "xtick.labelsize": 8,
    "ytick.labelsize": 8,
    "axes.spines.top": False,
    "axes.spines.right": False,
}

TITLES = {
    "exp1_1": "Full set, mixed training",
    "exp1_2": "Reduced set, mixed training",
    "exp2": "Pretrain on Super Subject, retrain on target",
}


def fraction_axes(ax, attr="informedness"):
    ax.set_xlabel("target-subject data used for training (%)")
    ax.set_ylabel("informedness" if attr == "informedness" else "accuracy")
    ax.set_xlim(-2, 92)
    ax.set_xticks(np.arange(0, 91, 10))
    if attr == "informedness":
        ax.axhline(0.0, color="0.7", lw=0.6, zorder=0)


def plot_curves(ax, report, conditions, attr="informedness"):
    from .experiments import CONDITIONS

    for cid in conditions:
        f, mean, se = report.curve(cid, attr)
        if not len(f):
            continue
        mean = np.asarray(mean, dtype=float)
        se = np.asarray(se, dtype=float)
        ax.errorbar(100 * f, mean, yerr=se, marker="o", ms=3, lw=1, capsize=2,
                    label=f"Cond{cid} {CONDITIONS[cid].label}")
    fraction_axes(ax, attr)
    ax.legend(frameon=False, loc="lower right")


def render_report(report, out_dir, fmt="png", dpi=150):
    """One figure per experiment group present in the report; returns the paths written."""
    from .experiments import FIGURES

    out_dir = Path(out_dir)
    written = []
    present = {r["condition"] for r in report.rows}
    with plt.rc_context(STYLE):
        for fig_id, conds in FIGURES.items():
            conds = [c for c in conds if c in present]
            if not conds:
                continue
            fig, axes = plt.subplots(1, 2, figsize=(8, 3.2))
            plot_curves(axes[0], report, conds, "informedness")
            plot_curves(axes[1], report, conds, "accuracy")
            axes[1].get_legend().remove()
            fig.suptitle(f"{report.subject}: {TITLES[fig_id]}")
            fig.tight_layout()
            path = out_dir / f"fig_{fig_id}_{report.subject}.{fmt}"
            fig.savefig(path, dpi=dpi, metadata={"Software": None} if fmt == "png" else None)
            plt.close(fig)
            written.append(path)
    return written
