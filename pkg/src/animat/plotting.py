"""SVG chart emission for experiment artifacts."""

from __future__ import annotations

import csv
from collections import defaultdict

import matplotlib

matplotlib.use("svg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .errors import ValidationError  # noqa: E402


def box_plot_from_summary(summary_csv, out_svg, title: str = ""):
    """Box plot of per-policy mean returns, one box per eval label."""
    groups = defaultdict(list)
    with open(summary_csv, newline="") as f:
        for row in csv.DictReader(f):
            groups[row["eval"]].append(float(row["mean_return"]))
    if not groups:
        raise ValidationError(f"no rows in {summary_csv}")
    labels = sorted(groups)
    fig, ax = plt.subplots(figsize=(1.6 * len(labels) + 2, 4))
    ax.boxplot([groups[k] for k in labels], tick_labels=labels)
    ax.set_ylabel("mean episode return")
    ax.tick_params(axis="x", rotation=30)
    if title:
        ax.set_title(title)
    fig.tight_layout()
    fig.savefig(out_svg)
    plt.close(fig)


def training_curve(log_csv, out_svg, window: int = 50, title: str = ""):
    """Smoothed per-episode return curve from a training log."""
    episodes, returns = [], []
    with open(log_csv, newline="") as f:
        for row in csv.DictReader(f):
            episodes.append(int(row["episode"]))
            returns.append(float(row["return"]))
    if not returns:
        raise ValidationError(f"no rows in {log_csv}")
    r = np.asarray(returns)
    w = max(1, min(window, len(r)))
    smoothed = np.convolve(r, np.ones(w) / w, mode="valid")
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.plot(episodes, r, alpha=0.25, label="episode return")
    ax.plot(episodes[w - 1:], smoothed, label=f"moving mean ({w})")
    ax.set_xlabel("episode")
    ax.set_ylabel("return")
    ax.legend()
    if title:
        ax.set_title(title)
    fig.tight_layout()
    fig.savefig(out_svg)
    plt.close(fig)
