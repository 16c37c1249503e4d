"""Static SVG line plots of trajectories.

Output is deterministic: the SVG hash salt is fixed and no date is embedded,
so identical data gives byte-identical files.
"""
from __future__ import annotations

import os
import tempfile
from typing import Optional, Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

matplotlib.rcParams["svg.hashsalt"] = "sidmp"
matplotlib.rcParams["svg.fonttype"] = "none"


def _save(fig, path):
    path = os.fspath(path)
    folder = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(suffix=".svg", dir=folder)
    os.close(fd)
    try:
        fig.savefig(tmp, format="svg", metadata={"Date": None})
        os.replace(tmp, path)
    finally:
        plt.close(fig)
        if os.path.exists(tmp):
            os.remove(tmp)
    return path


def _decimate(t, x, max_points=4000):
    step = max(1, int(np.ceil(t.size / max_points)))
    return t[::step], x[::step]


def time_series_svg(traj, path, labels: Optional[Sequence[str]] = None, title="",
                    events: bool = True):
    """All state components against time, one line each; events as vertical lines."""
    t, x = _decimate(traj.t, traj.x.reshape(traj.t.size, -1))
    fig, ax = plt.subplots(figsize=(8, 4))
    names = labels or [f"state_{i}" for i in range(x.shape[1])]
    for i in range(x.shape[1]):
        ax.plot(t, x[:, i], lw=0.8, label=names[i])
    if events:
        for te, name in getattr(traj, "events", []):
            if name.endswith(":on") or name.endswith(":off"):
                ax.axvline(te, color="k", ls="--", lw=0.6)
    ax.set_xlabel("t [s]")
    ax.set_title(title)
    if x.shape[1] <= 12:
        ax.legend(loc="upper right", fontsize="x-small", ncol=2)
    fig.tight_layout()
    return _save(fig, path)


def phase_portrait_svg(traj, n_nodes: int, path, title="", node_names=None):
    """First two coordinates of every node in the plane."""
    x = traj.x.reshape(traj.t.size, n_nodes, -1)
    if x.shape[-1] < 2:
        raise ValueError("phase portraits need at least two coordinates per node")
    _, x = _decimate(traj.t, x)
    fig, ax = plt.subplots(figsize=(5, 5))
    for i in range(n_nodes):
        name = node_names[i] if node_names else f"node {i}"
        ax.plot(x[:, i, 0], x[:, i, 1], lw=0.8, label=name)
    ax.set_aspect("equal", adjustable="datalim")
    ax.set_xlabel("x1")
    ax.set_ylabel("x2")
    ax.set_title(title)
    ax.legend(loc="upper right", fontsize="x-small")
    fig.tight_layout()
    return _save(fig, path)
