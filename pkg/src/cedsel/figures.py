"""Render sorted per-demonstration loss curves next to the CSV export."""

from __future__ import annotations

from pathlib import Path
from typing import Sequence

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt


def plot_sorted_losses(rows: Sequence[dict], out_dir: str | Path) -> list[Path]:
    """One figure per dataset: ascending demonstration losses.

    Each point is one candidate demonstration's mean loss on the dataset's
    tests; the red line marks the average over in-domain candidates, so
    points below it beat the average in-domain demonstration.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    paths: list[Path] = []
    datasets = sorted({row["dataset"] for row in rows})
    for dataset in datasets:
        entries = [r for r in rows if r["dataset"] == dataset]
        entries.sort(key=lambda r: (r["mean_loss"], r["candidate_id"]))
        losses = [r["mean_loss"] for r in entries]
        in_domain = [r["mean_loss"] for r in entries if r["in_domain"]]
        fig, ax = plt.subplots(figsize=(5.0, 3.2))
        ax.plot(range(len(losses)), losses, marker=".", linewidth=1.0, color="#1f77b4")
        if in_domain:
            ax.axhline(
                sum(in_domain) / len(in_domain),
                color="red",
                linewidth=1.0,
                label="in-domain mean",
            )
            ax.legend(fontsize=8)
        ax.set_xlabel("demonstration (sorted)")
        ax.set_ylabel("mean loss")
        ax.set_title(dataset)
        fig.tight_layout()
        path = out_dir / f"sorted_losses_{dataset}.png"
        fig.savefig(path, dpi=120)
        plt.close(fig)
        paths.append(path)
    return paths
