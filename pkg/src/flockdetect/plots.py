"""Deterministic SVG plot emission.

All plots are standalone SVG files rendered byte-reproducibly (fixed hash
salt, no timestamp metadata) with the plotted data embedded as a trailing
comment, so a plot can always be regenerated - and diffed - from its CSV.
"""

from __future__ import annotations

import io
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402  (backend must be set first)

HASH_SALT = "flockdetect"

ARCH_COLORS = {"rnn": "#1f77b4", "lstm": "#ff7f0e", "transformer": "#2ca02c"}
FLOCK_CYCLE = (
    "#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd",
    "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf",
)


def _render(fig, out_path: str | Path, data_comment: str) -> None:
    buf = io.StringIO()
    fig.savefig(buf, format="svg", metadata={"Date": None})
    plt.close(fig)
    svg = buf.getvalue()
    comment = "<!-- data:\n" + data_comment.replace("--", "- -") + "\n-->\n"
    svg = svg.replace("</svg>", comment + "</svg>")
    Path(out_path).write_text(svg, encoding="utf-8")


def _new_figure(figsize):
    matplotlib.rcParams["svg.hashsalt"] = HASH_SALT
    return plt.subplots(figsize=figsize)


def line_plot(series: dict[str, tuple[list, list]], out_path: str | Path,
              title: str, xlabel: str, ylabel: str) -> None:
    """One line per series label; x values need not be shared."""
    fig, ax = _new_figure((7, 4.5))
    rows = []
    for label in sorted(series):
        xs, ys = series[label]
        color = ARCH_COLORS.get(label)
        ax.plot(xs, ys, marker="o", label=label, color=color)
        rows.extend(f"{label},{x},{y}" for x, y in zip(xs, ys))
    ax.set_title(title)
    ax.set_xlabel(xlabel)
    ax.set_ylabel(ylabel)
    ax.grid(True, alpha=0.3)
    ax.legend()
    fig.tight_layout()
    _render(fig, out_path, "series,x,y\n" + "\n".join(rows))


def bar_plot(labels: list, heights: list, out_path: str | Path,
             title: str, xlabel: str, ylabel: str) -> None:
    fig, ax = _new_figure((7, 4.5))
    ax.bar(range(len(labels)), heights, color="#1f77b4")
    ax.set_xticks(range(len(labels)))
    ax.set_xticklabels([str(l) for l in labels], rotation=45, ha="right")
    ax.set_title(title)
    ax.set_xlabel(xlabel)
    ax.set_ylabel(ylabel)
    fig.tight_layout()
    rows = [f"{l},{h}" for l, h in zip(labels, heights)]
    _render(fig, out_path, "label,height\n" + "\n".join(rows))


def scene_plot(scene, flockset, out_path: str | Path) -> None:
    """Member trajectories of one bin, colored by detected flock.

    Singletons are drawn in light gray.
    """
    fig, ax = _new_figure((6, 6))
    flock_of = {}
    for fidx, flock in enumerate(flockset.flocks):
        for agent in flock:
            flock_of[agent] = fidx
    rows = []
    for agent in scene.member_ids:
        block = scene.blocks[agent]
        xs = [p.x_mm for p in block]
        ys = [p.y_mm for p in block]
        fidx = flock_of.get(agent)
        if fidx is None:
            color, lw, z = "#cccccc", 0.8, 1
        else:
            color, lw, z = FLOCK_CYCLE[fidx % len(FLOCK_CYCLE)], 1.6, 2
        ax.plot(xs, ys, color=color, linewidth=lw, zorder=z)
        ax.plot(xs[0], ys[0], marker="o", markersize=3, color=color, zorder=z)
        rows.append(f"{agent},{'singleton' if fidx is None else fidx}")
    ax.set_title(f"bin {scene.bin_index}: {len(flockset.flocks)} flocks, "
                 f"{len(flockset.singletons)} singletons")
    ax.set_xlabel("x [mm]")
    ax.set_ylabel("y [mm]")
    ax.set_aspect("equal", adjustable="datalim")
    fig.tight_layout()
    _render(fig, out_path, "agent,flock\n" + "\n".join(rows))
