"""Orbit benchmark: render a camera sweep around the model's bounding sphere
and record per-view timing and traversal counters.

Both sampling modes march identically (same seed, same intervals), so their
frames are pixel-identical and the CSV rows differ only in milliseconds.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np

from .accel import TransferFunction
from .model import Box3
from .render import Camera, Frame, MarchParams, Scene, render_frame

__all__ = ["BenchRow", "orbit_cameras", "run_bench", "write_csv", "write_figure"]


@dataclass
class BenchRow:
    view: int
    ms: float
    regions: int
    samples: int


def orbit_cameras(bounds: Box3, n_views: int, width: int, height: int, fov_y: float = 40.0, elevation_deg: float = 20.0, margin: float = 1.15):
    """Equally spaced azimuths on the bounding sphere, fixed elevation."""
    center = bounds.center
    radius = 0.5 * float(np.linalg.norm(bounds.extent))
    dist = margin * radius / math.sin(math.radians(fov_y) * 0.5)
    phi = math.radians(elevation_deg)
    cams = []
    for v in range(n_views):
        theta = 2.0 * math.pi * v / n_views
        offset = dist * np.array(
            [math.cos(theta) * math.cos(phi), math.sin(phi), math.sin(theta) * math.cos(phi)]
        )
        pos = center + offset
        cams.append(Camera(pos, center - pos, np.array([0.0, 1.0, 0.0]), fov_y, width, height))
    return cams


def run_bench(scene: Scene, tf: TransferFunction, params: MarchParams, n_views: int, width: int, height: int, use_celllocation: bool = False, keep_frames: bool = False):
    """Render the orbit; returns (rows, frames) with frames kept on request.

    The first view is rendered once untimed beforehand so compilation cost
    never lands in row 0.
    """
    cams = orbit_cameras(scene.regions.bounds, n_views, width, height)
    render_frame(scene, cams[0], tf, params, use_celllocation)
    rows = []
    frames: list[Frame] = []
    for v, cam in enumerate(cams):
        frame = render_frame(scene, cam, tf, params, use_celllocation)
        rows.append(BenchRow(v, frame.stats.ms, frame.stats.regions, frame.stats.samples))
        if keep_frames:
            frames.append(frame)
    return rows, frames


def write_csv(path, rows) -> None:
    with open(path, "w", newline="") as fh:
        out = csv.writer(fh)
        out.writerow(["view", "ms", "regions", "samples"])
        for r in rows:
            out.writerow([r.view, f"{r.ms:.3f}", r.regions, r.samples])


def write_figure(path, rows, title: str) -> None:
    """Per-view frame-time plot saved next to the CSV."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    views = [r.view for r in rows]
    ms = [r.ms for r in rows]
    fig, ax = plt.subplots(figsize=(7, 3.2))
    ax.plot(views, ms, marker="o", ms=3, lw=1.2)
    ax.set_xlabel("view")
    ax.set_ylabel("frame time (ms)")
    ax.set_title(title)
    mean = sum(ms) / len(ms)
    ax.axhline(mean, color="tab:red", lw=0.8, ls="--", label=f"mean {mean:.1f} ms")
    ax.legend(loc="best", fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=130)
    plt.close(fig)
