"""Static per-run figures: one polyline per state component, saved as SVG.

Rendering is a post-processing nicety off the report path; it never affects
exit codes.  Figures use linear axes with automatic ranges, and the SVG
backend is pinned to a fixed hash salt with no embedded date so repeated
renders of the same trajectory agree.
"""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402  (backend must be set first)

from cytodelay.integrator import Trajectory
from cytodelay.model import STATE_NAMES

# Cap on points per polyline; long runs are thinned by a fixed stride.
_MAX_POINTS = 2000

matplotlib.rcParams["svg.hashsalt"] = "cytodelay"


def render_trajectory_svg(traj: Trajectory, path, title: str = "") -> None:
    """Plot all five state components over time into an SVG file."""
    stride = max(1, len(traj.times) // _MAX_POINTS)
    t = traj.times[::stride]
    fig, ax = plt.subplots(figsize=(8.0, 4.5))
    for j, name in enumerate(STATE_NAMES):
        ax.plot(t, traj.states[::stride, j], label=name, linewidth=1.2)
    ax.set_xlabel("t")
    ax.set_ylabel("concentration")
    if title:
        ax.set_title(title)
    ax.legend(loc="best", frameon=False)
    fig.tight_layout()
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)
