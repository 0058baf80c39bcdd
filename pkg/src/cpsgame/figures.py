"""Rendering of sweep panels and dynamics trajectories to image files."""

from __future__ import annotations

import math
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt

_SERIES_STYLE = {
    "cooperative": dict(color="tab:blue", marker="o"),
    "noncooperative": dict(color="tab:red", marker="s"),
    "full_sharing": dict(color="tab:green", marker="^"),
    "marginal_product": dict(color="tab:purple", marker="o"),
    "avg_utility": dict(color="tab:orange", marker="s"),
    "poa": dict(color="tab:blue", marker="o"),
    "pons": dict(color="tab:red", marker="s"),
    "pou": dict(color="tab:green", marker="^"),
    "p_star": dict(color="tab:blue", marker="o"),
}


def render_panel(path: Path, title: str, ylabel: str, rows, logy: bool = False) -> Path:
    """Plot one panel's (n, series, value) rows and write a PNG."""
    series: dict[str, tuple[list[int], list[float]]] = {}
    for n, name, value in rows:
        ns, vs = series.setdefault(name, ([], []))
        ns.append(n)
        vs.append(value)
    fig, ax = plt.subplots(figsize=(6.0, 4.0))
    for name, (ns, vs) in series.items():
        pts = [(n, v) for n, v in zip(ns, vs) if math.isfinite(v) and (not logy or v > 0)]
        if not pts:
            continue
        style = _SERIES_STYLE.get(name, {})
        ax.plot(
            [p[0] for p in pts],
            [p[1] for p in pts],
            label=name,
            markersize=2.5,
            linewidth=1.2,
            **style,
        )
    if logy:
        ax.set_yscale("log")
    ax.set_xlabel("number of peers")
    ax.set_ylabel(ylabel)
    ax.set_title(title)
    ax.grid(True, alpha=0.3)
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return path


def render_price_trajectory(path: Path, prices, p_star: float) -> Path:
    fig, ax = plt.subplots(figsize=(6.0, 4.0))
    ax.plot(range(len(prices)), prices, color="tab:blue", linewidth=1.2)
    ax.axhline(p_star, color="tab:red", linestyle="--", linewidth=1.0, label="optimal price")
    ax.set_xlabel("iteration")
    ax.set_ylabel("announced price")
    ax.set_title("price adjustment")
    ax.grid(True, alpha=0.3)
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return path


def render_quantity_trajectory(path: Path, x_path, target_total: float) -> Path:
    fig, ax = plt.subplots(figsize=(6.0, 4.0))
    totals = x_path.sum(axis=1)
    for i in range(x_path.shape[1]):
        ax.plot(range(x_path.shape[0]), x_path[:, i], linewidth=1.0, alpha=0.7, label=f"peer {i}")
    ax.plot(range(len(totals)), totals, color="black", linewidth=1.5, label="total")
    ax.axhline(target_total, color="tab:red", linestyle="--", linewidth=1.0, label="efficient total")
    ax.set_xlabel("iteration")
    ax.set_ylabel("production")
    ax.set_title("quantity adjustment")
    ax.grid(True, alpha=0.3)
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return path
