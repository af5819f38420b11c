"""Matplotlib figures for benchmark summaries and simulated networks.

Figures are built with the object-oriented API (no pyplot state) and saved
with fixed metadata so repeated runs write identical files.
"""

from __future__ import annotations

import os

import numpy as np
import matplotlib as mpl
from matplotlib.figure import Figure

from .graph import NETWORK_KINDS, Graph

__all__ = ["plot_mse_bars", "plot_mse_by_kind", "plot_adjacency", "save_figure",
           "save_summary_figures"]

STYLE = {
    "font.family": "DejaVu Sans",
    "font.size": 9,
    "axes.labelsize": 9,
    "axes.titlesize": 10,
    "legend.fontsize": 8,
    "xtick.labelsize": 8,
    "ytick.labelsize": 8,
    "axes.spines.top": False,
    "axes.spines.right": False,
    "svg.hashsalt": "netcohesion",
    "svg.fonttype": "none",
}

COHESION_COLOR = "#1f6f8b"
BASELINE_COLOR = "#b0b0b0"


def _is_cohesion(tag):
    return tag in ("lin", "cos", "rbf", "lpc", "nn", "pol")


def save_figure(fig: Figure, path, fmt: str = None):
    """Save without timestamps so output bytes depend only on content."""
    fmt = fmt or os.path.splitext(str(path))[1].lstrip(".") or "svg"
    metadata = {"Date": None} if fmt in ("svg", "pdf") else {"Software": None}
    with mpl.rc_context(STYLE):
        fig.savefig(path, format=fmt, metadata=metadata, bbox_inches="tight")


def plot_mse_bars(summary, kind: str, split: str, ax=None):
    """Mean MSE per machine for one (kind, split), error bars at one sd."""
    rows = [s for s in summary if s.kind == kind and s.split == split]
    with mpl.rc_context(STYLE):
        if ax is None:
            fig = Figure(figsize=(5.0, 3.0))
            ax = fig.add_subplot()
        x = np.arange(len(rows))
        colors = [COHESION_COLOR if _is_cohesion(s.machine) else BASELINE_COLOR for s in rows]
        ax.bar(x, [s.mean for s in rows], yerr=[s.sd for s in rows], color=colors,
               capsize=2, error_kw={"elinewidth": 0.8})
        ax.set_xticks(x)
        ax.set_xticklabels([s.machine.upper() for s in rows], rotation=45, ha="right")
        ax.set_ylabel(f"{split} MSE")
        ax.set_title(f"{kind} network")
    return ax.figure, ax


def plot_mse_by_kind(summary, split: str, ax=None):
    """One line per machine across network kinds, in table row order."""
    rows = [s for s in summary if s.split == split]
    kinds = [k for k in NETWORK_KINDS if any(s.kind == k for s in rows)]
    kinds += sorted({s.kind for s in rows} - set(kinds))
    machines = list(dict.fromkeys(s.machine for s in rows))
    cell = {(s.machine, s.kind): s.mean for s in rows}
    with mpl.rc_context(STYLE):
        if ax is None:
            fig = Figure(figsize=(5.5, 3.2))
            ax = fig.add_subplot()
        x = np.arange(len(kinds))
        for m in machines:
            y = [cell.get((m, k), np.nan) for k in kinds]
            ax.plot(x, y, marker="o", ms=3, lw=1.2 if _is_cohesion(m) else 0.8,
                    ls="-" if _is_cohesion(m) else "--", label=m.upper())
        ax.set_xticks(x)
        ax.set_xticklabels(kinds)
        ax.set_ylabel(f"mean {split} MSE")
        ax.legend(ncol=2, frameon=False, loc="best")
    return ax.figure, ax


def plot_adjacency(g: Graph, labels=None, ax=None):
    """Adjacency pattern with nodes ordered by block label."""
    order = np.arange(g.n) if labels is None else np.argsort(labels, kind="stable")
    A = g.adjacency()[np.ix_(order, order)]
    with mpl.rc_context(STYLE):
        if ax is None:
            fig = Figure(figsize=(3.6, 3.6))
            ax = fig.add_subplot()
        ax.spy(A, markersize=1.0, color="k")
        if labels is not None:
            bounds = np.flatnonzero(np.diff(np.sort(labels))) + 0.5
            for b in bounds:
                ax.axhline(b, color=COHESION_COLOR, lw=0.6)
                ax.axvline(b, color=COHESION_COLOR, lw=0.6)
        ax.set_title(f"{g.n} nodes, {g.n_edges} edges")
    return ax.figure, ax


def save_summary_figures(summary, out_dir, fmt: str = "svg") -> list:
    """Write one bar chart per (kind, split) plus one line chart per split."""
    os.makedirs(out_dir, exist_ok=True)
    written = []
    for split in dict.fromkeys(s.split for s in summary):
        fig, _ = plot_mse_by_kind(summary, split)
        path = os.path.join(out_dir, f"mse_{split}.{fmt}")
        save_figure(fig, path, fmt)
        written.append(path)
        for kind in dict.fromkeys(s.kind for s in summary if s.split == split):
            fig, _ = plot_mse_bars(summary, kind, split)
            path = os.path.join(out_dir, f"mse_{split}_{kind}.{fmt}")
            save_figure(fig, path, fmt)
            written.append(path)
    return written
