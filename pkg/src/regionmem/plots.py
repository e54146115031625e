"""Figure rendering for the report path.

Every function writes one PNG next to the delimited outputs and returns the
path. The Agg backend is forced so rendering works headless.
"""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np


def plot_cluster_map(rows, path, centroids=None):
    """Scatter of node positions colored by region id.

    rows: iterable of (node_id, x, y, region_id); centroids: optional
    iterable of (region_id, cx, cy) drawn as crosses.
    """
    rows = list(rows)
    fig, ax = plt.subplots(figsize=(7, 7))
    if rows:
        xs = np.array([r[1] for r in rows])
        ys = np.array([r[2] for r in rows])
        regions = np.array([r[3] for r in rows])
        ax.scatter(xs, ys, c=regions % 20, cmap="tab20", s=12, linewidths=0)
    if centroids:
        cx = [c[1] for c in centroids]
        cy = [c[2] for c in centroids]
        ax.scatter(cx, cy, marker="x", c="black", s=60)
        for rid, x, y in centroids:
            ax.annotate(str(rid), (x, y), fontsize=8,
                        textcoords="offset points", xytext=(4, 4))
    ax.set_xlabel("x [m]")
    ax.set_ylabel("y [m]")
    ax.set_title("node regions")
    ax.set_aspect("equal")
    fig.savefig(path, dpi=120, bbox_inches="tight")
    plt.close(fig)
    return path


def plot_latency(map_sizes, latencies_us, path, window: int = 50):
    """Per-update latency against map size, with a running mean overlay."""
    sizes = np.asarray(map_sizes, dtype=float)
    lat = np.asarray(latencies_us, dtype=float)
    fig, ax = plt.subplots(figsize=(8, 4.5))
    ax.plot(sizes, lat, lw=0.5, alpha=0.4, label="per update")
    if lat.shape[0] >= window:
        kernel = np.ones(window) / window
        smooth = np.convolve(lat, kernel, mode="valid")
        ax.plot(sizes[window - 1:], smooth, lw=1.5, label=f"mean over {window}")
    ax.set_xlabel("map size [nodes]")
    ax.set_ylabel("memory update latency [us]")
    ax.set_title("update cost vs map size")
    ax.legend(loc="upper left")
    fig.savefig(path, dpi=120, bbox_inches="tight")
    plt.close(fig)
    return path


def plot_detections(reports, path):
    """Detected vs total revisit events for each evaluated policy."""
    reports = [r for r in reports if r.loop is not None]
    fig, ax = plt.subplots(figsize=(6, 4))
    names = [r.policy for r in reports]
    totals = [r.loop.total for r in reports]
    hits = [r.loop.detected for r in reports]
    pos = np.arange(len(reports))
    ax.bar(pos - 0.2, totals, width=0.4, label="ground truth", color="lightgray")
    ax.bar(pos + 0.2, hits, width=0.4, label="detected", color="tab:blue")
    ax.set_xticks(pos)
    ax.set_xticklabels(names)
    ax.set_ylabel("revisit events")
    ax.set_title("loop detection by policy")
    ax.legend()
    fig.savefig(path, dpi=120, bbox_inches="tight")
    plt.close(fig)
    return path
