"""Figures for benchmark summaries: mean with min/max envelopes against dimension."""
from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

PANELS = (
    ("objective", "objective ||x - x0||"),
    ("deviation", "deviation"),
    ("iterations", "iterations"),
    ("solve_seconds", "solve time [s]"),
)


def plot_summary(summary: dict, csv_path) -> list[Path]:
    """One PNG per family, written next to ``csv_path``.

    Each panel shows the sample mean as a solid line and the min/max as
    dashed lines, one colour per method.
    """
    csv_path = Path(csv_path)
    families = sorted({key[0] for key in summary})
    written = []
    for family in families:
        methods = sorted({k[2] for k in summary if k[0] == family})
        fig, axes = plt.subplots(2, 2, figsize=(10, 7), constrained_layout=True)
        for ax, (metric, label) in zip(axes.flat, PANELS):
            for i, method in enumerate(methods):
                dims = sorted(k[1] for k in summary if k[0] == family and k[2] == method)
                lo, mean, hi = zip(*(summary[(family, d, method)][metric] for d in dims))
                colour = f"C{i}"
                ax.plot(dims, mean, "-o", color=colour, label=method.upper())
                ax.plot(dims, lo, "--", color=colour, linewidth=0.8)
                ax.plot(dims, hi, "--", color=colour, linewidth=0.8)
            ax.set_xlabel("dimension")
            ax.set_ylabel(label)
            if metric in ("deviation", "solve_seconds"):
                ax.set_yscale("log")
        axes.flat[0].legend()
        fig.suptitle(f"{family}: mean (solid), min/max (dashed)")
        path = csv_path.with_name(f"{csv_path.stem}_{family}.png")
        fig.savefig(path, dpi=100)
        plt.close(fig)
        written.append(path)
    return written
