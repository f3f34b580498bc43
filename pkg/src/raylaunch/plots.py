"""Matplotlib renderings of result planes and power-delay profiles."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .grid import ResultPlane


def plot_plane(plane: ResultPlane, path: str | Path, label: str) -> None:
    """Save a plane as a figure with axes in metres; no-data cells grey."""
    fig, ax = plt.subplots(figsize=(8, 6))
    h = plane.cell_size / 2.0
    extent = (
        plane.x_centers[0] - h,
        plane.x_centers[-1] + h,
        plane.y_centers[0] - h,
        plane.y_centers[-1] + h,
    )
    cmap = plt.get_cmap("viridis").copy()
    cmap.set_bad("0.7")
    masked = np.ma.masked_invalid(plane.values)
    im = ax.imshow(masked, origin="lower", extent=extent, cmap=cmap, aspect="equal")
    fig.colorbar(im, ax=ax, label=label)
    ax.set_xlabel("x [m]")
    ax.set_ylabel("y [m]")
    ax.set_title(f"{plane.quantity} at z = {plane.height:g} m")
    fig.savefig(path, dpi=120, bbox_inches="tight")
    plt.close(fig)


def plot_pdp(profile: list[tuple[float, float]], path: str | Path, title: str = "") -> None:
    """Stem plot of a power-delay profile (delay ns vs power dBm)."""
    fig, ax = plt.subplots(figsize=(7, 4))
    if profile:
        delays = [d for d, _ in profile]
        powers = [p for _, p in profile]
        ax.stem(delays, powers, basefmt=" ")
        floor = min(powers) - 10.0
        ax.set_ylim(bottom=floor)
    ax.set_xlabel("delay [ns]")
    ax.set_ylabel("component power [dBm]")
    if title:
        ax.set_title(title)
    ax.grid(True, alpha=0.3)
    fig.savefig(path, dpi=120, bbox_inches="tight")
    plt.close(fig)
