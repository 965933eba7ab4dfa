"""SVG figures for a finished run: map view, steering angles and corridor tracking."""
from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .harness import RunResult, write_traces  # noqa: E402
from .vehicle import vehicle_rectangle  # noqa: E402

# fixed salt so repeated runs produce identical SVG ids
plt.rcParams["svg.hashsalt"] = "mpcguide"
plt.rcParams["svg.fonttype"] = "none"


def _closed(poly: np.ndarray) -> np.ndarray:
    return np.vstack([poly, poly[:1]])


def plot_map(r: RunResult, path, contour_every: float = 1.0) -> None:
    sc = r.scenario
    fig, ax = plt.subplots(figsize=(8, 5))
    for poly in sc.world.obstacles:
        ax.fill(*_closed(poly).T, color="0.6", lw=0)
    for line in sc.world.legal_lines:
        ax.plot(*np.asarray(line).T, "k--", lw=1, label="_legal")
    if r.reference is not None:
        ax.plot(*r.reference.vertices.T, "C0-", lw=1, label="reference")
    if r.plant:
        xy = np.array([[p["x"], p["y"]] for p in r.plant])
        ax.plot(xy[:, 0], xy[:, 1], "C3-", lw=1.5, label="executed")
        stride = max(1, int(round(contour_every / sc.plant_dt)))
        for p in r.plant[::stride] + [r.plant[-1]]:
            ax.plot(*_closed(vehicle_rectangle(p["x"], p["y"], p["psi"], sc.vehicle)).T, "C3-", lw=0.6)
    ax.plot(sc.start.x, sc.start.y, "go", label="start")
    ax.plot(sc.goal.x, sc.goal.y, "b*", label="goal")
    ax.set_aspect("equal")
    ax.set_xlabel("x [m]")
    ax.set_ylabel("y [m]")
    ax.set_title(sc.name)
    ax.legend(loc="best", fontsize=8)
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)


def plot_steering(r: RunResult, path) -> None:
    fig, ax = plt.subplots(figsize=(8, 3.5))
    t = [c["t"] for c in r.cycles]
    ax.step(t, [np.degrees(c["deltaF"]) for c in r.cycles], where="post", label="front")
    ax.step(t, [np.degrees(c["deltaR"]) for c in r.cycles], where="post", label="rear")
    if len(t) == 1:
        ax.plot(t, [np.degrees(r.cycles[0]["deltaF"])], "C0o")
    ax.set_xlabel("t [s]")
    ax.set_ylabel("steering angle [deg]")
    ax.legend(fontsize=8)
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)


def plot_corridor(r: RunResult, path) -> None:
    fig, ax = plt.subplots(figsize=(8, 3.5))
    s = [c["s"] for c in r.cycles]
    ax.plot(s, [c["e"] for c in r.cycles], "C3.-", label="e")
    ax.plot(s, [c["eMin"] for c in r.cycles], "k-", lw=0.8, label="bounds")
    ax.plot(s, [c["eMax"] for c in r.cycles], "k-", lw=0.8)
    ax.set_xlabel("s [m]")
    ax.set_ylabel("lateral deviation [m]")
    ax.legend(fontsize=8)
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)


def emit_plots(r: RunResult, out_dir) -> list[Path]:
    """Write the three SVG figures plus the trace CSVs; returns the written paths."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    files = write_traces(r, out)
    for name, fn in (("trajectory.svg", plot_map), ("steering.svg", plot_steering), ("corridor.svg", plot_corridor)):
        fn(r, out / name)
        files.append(out / name)
    return files
