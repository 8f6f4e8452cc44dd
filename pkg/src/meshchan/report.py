"""PNG figures written next to the experiment CSVs."""
from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402


def _save(fig, path: Path) -> Path:
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path


def plot_overhead(rows, out_dir) -> Path:
    ns = [r[0] for r in rows]
    fig, ax = plt.subplots(figsize=(5, 3))
    ax.plot(ns, [r[1] for r in rows], marker=".")
    ax.set_xlabel("contending stations n")
    ax.set_ylabel("overhead (slots)")
    ax.grid(True, alpha=0.3)
    return _save(fig, Path(out_dir) / "overhead.png")


def plot_compare(reports, out_dir) -> Path:
    fig, ax = plt.subplots(figsize=(5, 3))
    names = [r.policy for r in reports]
    ax.bar(names, [r.throughput / 1e6 for r in reports], color="0.4")
    ax.set_ylabel("total throughput (Mb/s)")
    ax.grid(True, axis="y", alpha=0.3)
    return _save(fig, Path(out_dir) / "compare.png")


def plot_sweep(means: dict, out_dir) -> Path:
    fig, ax = plt.subplots(figsize=(5, 3.2))
    policies = sorted({p for _, p in means})
    for p in policies:
        pts = sorted((nc, v) for (nc, q), v in means.items() if q == p)
        ax.plot([a for a, _ in pts], [b / 1e6 for _, b in pts], marker="o", label=p)
    ax.set_xlabel("clients")
    ax.set_ylabel("total throughput (Mb/s)")
    ax.grid(True, alpha=0.3)
    ax.legend(loc="best", frameon=False)
    return _save(fig, Path(out_dir) / "sweep.png")


def plot_gap(gap_rows, out_dir) -> Path:
    fig, ax = plt.subplots(figsize=(5, 3))
    seeds = [g.seed for g in gap_rows]
    ax.plot(seeds, [g.throughput_ratio for g in gap_rows], "o", label="throughput")
    ax.plot(seeds, [1 / g.objective_ratio if g.objective_ratio else 0 for g in gap_rows], "x",
            label="objective (optimal / ARACHNE)")
    ax.axhline(0.85, color="0.5", lw=0.8, ls="--")
    ax.set_xlabel("seed")
    ax.set_ylabel("ratio")
    ax.grid(True, alpha=0.3)
    ax.legend(loc="best", frameon=False)
    return _save(fig, Path(out_dir) / "optimal_gap.png")


def plot_paper(rows, out_dir) -> Path:
    ratios = sorted({round(da / db, 6) for da, db, _, _ in rows if db}, reverse=True)
    policies = list(dict.fromkeys(p for _, _, p, _ in rows))
    fig, axes = plt.subplots(1, len(ratios), figsize=(3.2 * len(ratios), 3), sharey=True,
                             squeeze=False)
    for ax, r in zip(axes[0], ratios):
        for p in policies:
            pts = sorted((db, t) for da, db, q, t in rows if q == p and db
                         and round(da / db, 6) == r)
            ax.plot([a / 1e6 for a, _ in pts], [b / 1e6 for _, b in pts], marker="o", label=p)
        ax.set_title(f"route (a) at {r:g} of (b)")
        ax.set_xlabel("route (b) demand (Mb/s)")
        ax.grid(True, alpha=0.3)
    axes[0][0].set_ylabel("total throughput (Mb/s)")
    axes[0][0].legend(loc="best", frameon=False)
    return _save(fig, Path(out_dir) / "paper_scenario.png")


def plot_objective(trace, out_dir) -> Path:
    fig, ax = plt.subplots(figsize=(5, 3))
    ax.plot(range(1, len(trace) + 1), [v * 1e3 for v in trace], marker="o")
    ax.set_xlabel("iteration")
    ax.set_ylabel("max path cost (ms)")
    ax.grid(True, alpha=0.3)
    return _save(fig, Path(out_dir) / "objective.png")
