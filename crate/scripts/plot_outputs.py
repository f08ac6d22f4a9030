"""Plots the CSV tables written by `dlsn fit` and `dlsn evaluate`.

    python scripts/plot_outputs.py out/fit out/eval

Not part of the build; needs pandas and matplotlib.
"""
import sys
from pathlib import Path

import matplotlib.pyplot as plt
import pandas as pd


def main(fit_dir, eval_dir=None):
    fit_dir = Path(fit_dir)
    params = pd.read_csv(fit_dir / "params.csv")
    ess = pd.read_csv(fit_dir / "ess.csv")
    panels = 5 if eval_dir else 4
    fig, axes = plt.subplots(1, panels, figsize=(4 * panels, 3.5))
    for ax, col in zip(axes, ["alpha", "sigma", "phi"]):
        ax.plot(params["index"], params[col])
        ax.set_xlabel("iteration / time")
        ax.set_title(col)
    axes[3].plot(ess["t"], ess["ess"])
    axes[3].set_title("ESS at observation times")
    if eval_dir:
        roc = pd.read_csv(Path(eval_dir) / "roc.csv")
        for name, curve in roc.groupby("curve"):
            axes[4].plot(curve["fpr"], curve["tpr"], label=name)
        axes[4].plot([0, 1], [0, 1], ls=":", c="grey")
        axes[4].legend()
        axes[4].set_title("ROC")
    fig.tight_layout()
    out = fit_dir / "summary.png"
    fig.savefig(out, dpi=120)
    print(f"wrote {out}")


if __name__ == "__main__":
    main(*sys.argv[1:3])
