"""Figures for sweep results."""
from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

LABELS = {
    "bound_l2": "l2-Lipschitz bound",
    "bound_linf": "l_inf-Lipschitz bound",
    "bound_sb": "self-bounding bound",
    "baseline": "baseline",
}


def plot_bounds_vs_k(rows, path, excess: bool = True) -> Path:
    """Bound totals (minus the empirical risk when ``excess``) against ``k`` on log-log axes."""
    path = Path(path)
    ks = [r.k for r in rows]
    fig, ax = plt.subplots(figsize=(5.5, 4))
    for col, label in LABELS.items():
        ys = [getattr(r, col) - (r.L_hat_un if excess else 0.0) for r in rows]
        if all(y == y for y in ys):  # skip all-NaN series
            ax.plot(ks, ys, marker="o", label=label)
    gaps = [r.gap for r in rows]
    ax.plot(ks, gaps, marker="x", linestyle="--", color="k", label="measured gap")
    ax.set_xscale("log", base=2)
    ax.set_yscale("symlog", linthresh=1e-2)
    ax.set_xlabel("negatives k")
    ax.set_ylabel("bound - empirical risk" if excess else "bound")
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=120, metadata={"Software": None})
    plt.close(fig)
    return path
