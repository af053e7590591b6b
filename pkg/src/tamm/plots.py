"""Figure rendering for experiment reports.

Headless by construction: the Agg backend is forced before pyplot loads,
so figures render to files in CI and sandboxes without a display.
"""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402  (backend must be pinned first)

__all__ = ["ssh_figure", "ai_figure", "figure_path_for"]


def figure_path_for(report_path) -> str:
    import os

    stem, _ = os.path.splitext(os.fspath(report_path))
    return stem + ".png"


def _unit_groups(rows):
    order = []
    for row in rows:
        if row["unit"] not in order:
            order.append(row["unit"])
    return order


def ssh_figure(rows, path) -> str:
    """Two panels over vector size: RSD (log scale) and mean correct bits."""
    units = _unit_groups(rows)
    fig, (ax_rsd, ax_cb) = plt.subplots(1, 2, figsize=(10, 4))
    for unit in units:
        pts = [r for r in rows if r["unit"] == unit]
        pts.sort(key=lambda r: r["size"])
        sizes = [r["size"] for r in pts]
        # zero RSD cannot sit on a log axis; pin it just under the floor
        floor = 1e-18
        rsd = [max(r["rsd"], floor) for r in pts]
        ax_rsd.plot(sizes, rsd, marker="o", label=unit)
        ax_cb.plot(sizes, [r["correct_bits"] for r in pts], marker="o", label=unit)
    ax_rsd.set_xscale("log")
    ax_rsd.set_yscale("log")
    ax_rsd.set_xlabel("vector size")
    ax_rsd.set_ylabel("relative standard deviation")
    ax_rsd.set_title("Reproducibility under shuffling")
    ax_rsd.grid(True, which="both", alpha=0.3)
    ax_rsd.legend()
    ax_cb.set_xscale("log")
    ax_cb.set_xlabel("vector size")
    ax_cb.set_ylabel("mean correct bits")
    ax_cb.set_ylim(-2, 54)
    ax_cb.set_title("Accuracy vs exact sum")
    ax_cb.grid(True, alpha=0.3)
    ax_cb.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return str(path)


def ai_figure(rows, path) -> str:
    """Top1/Top5 per sweep point, grouped by operand format."""
    formats = []
    for row in rows:
        if row["format"] not in formats:
            formats.append(row["format"])
    fig, ax = plt.subplots(figsize=(7, 4.5))
    for fmt in formats:
        pts = [r for r in rows if r["format"] == fmt]
        labels = [f"{r['ovf']}:{r['msb']}:{r['lsb']}" for r in pts]
        xs = range(len(pts))
        ax.plot(xs, [r["top1"] for r in pts], marker="o", label=f"{fmt} top1")
        ax.plot(xs, [r["top5"] for r in pts], marker="s", linestyle="--",
                label=f"{fmt} top5")
        ax.set_xticks(list(xs))
        ax.set_xticklabels(labels, rotation=30, ha="right")
    ax.set_xlabel("accumulator (ovf:msb:lsb)")
    ax.set_ylabel("accuracy [%]")
    ax.set_ylim(0, 105)
    ax.set_title("Accuracy across accumulator sweep")
    ax.grid(True, alpha=0.3)
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return str(path)
