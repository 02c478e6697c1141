"""Static SVG trajectory plots of the first two coordinates."""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

TAG_COLORS = {
    "start": "#2ca02c",
    "bounce": "#1f77b4",
    "refresh": "#ff7f0e",
    "boundary": "#d62728",
    "end": "#7f7f7f",
}
VIEW = 1.5
PIXELS = 800
_DPI = 72
_STYLE = {
    "svg.hashsalt": "pdmp-boundary",
    "svg.fonttype": "none",
    "font.size": 11,
}


def draw_trajectory(ax, x, tags, half_width=1.0, markers=True, title=None):
    """Polyline of ``(x1, x2)`` with the cube outline and tag-coloured markers."""
    w = half_width
    ax.plot([-w, w, w, -w, -w], [-w, -w, w, w, -w], color="black", lw=1.2, zorder=1)
    ax.plot(x[:, 0], x[:, 1], color="#444444", lw=0.5, alpha=0.8, zorder=2)
    if markers:
        tags = np.asarray(tags)
        for tag, color in TAG_COLORS.items():
            sel = tags == tag
            if sel.any():
                ax.scatter(x[sel, 0], x[sel, 1], s=6, color=color, label=tag, zorder=3, linewidths=0)
    ax.set_xlim(-VIEW, VIEW)
    ax.set_ylim(-VIEW, VIEW)
    ax.set_aspect("equal")
    if title:
        ax.set_title(title)


def _save(fig, path):
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)


def trajectory_svg(path, x, tags, half_width=1.0, title=None):
    """Write an 800x800 SVG of one trajectory.

    Args:
        x: breakpoint positions, shape ``(rows, d)`` with ``d >= 2``.
        tags: event tag per breakpoint.
    """
    x = np.asarray(x, dtype=float)
    if x.ndim != 2 or x.shape[1] < 2:
        raise ValueError("plotting needs at least two coordinates")
    with plt.rc_context(_STYLE):
        fig = plt.figure(figsize=(PIXELS / _DPI, PIXELS / _DPI), dpi=_DPI)
        ax = fig.add_axes([0.08, 0.08, 0.88, 0.86])
        draw_trajectory(ax, x, tags, half_width, title=title)
        ax.set_xlabel("x1")
        ax.set_ylabel("x2")
        ax.legend(loc="upper right", fontsize=8, markerscale=2)
        _save(fig, path)


def grid_svg(path, panels, rows, cols, half_width=1.0, suptitle=None):
    """Grid of trajectory panels.

    Args:
        panels: dict mapping ``(row, col)`` to ``(x, tags, title)``.
    """
    with plt.rc_context(_STYLE):
        fig, axes = plt.subplots(rows, cols, figsize=(4 * cols, 4 * rows), dpi=_DPI, squeeze=False)
        for (r, c), (x, tags, title) in panels.items():
            draw_trajectory(axes[r][c], np.asarray(x), tags, half_width, markers=False, title=title)
        if suptitle:
            fig.suptitle(suptitle)
        fig.tight_layout()
        _save(fig, path)
