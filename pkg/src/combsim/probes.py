"""Deterministic probe profiles shared by the measurement routines."""
from __future__ import annotations

import numpy as np

from .grid import GridFunction, GridSpec, h2_array

__all__ = ["shape_bank", "decaying_probes"]


def shape_bank(grid: GridSpec, seed: int = 0) -> list[np.ndarray]:
    """Front-like profiles: Gaussians, odd bumps, and shifted tanh fronts."""
    rng = np.random.default_rng(seed)
    x = grid.nodes()
    span = grid.x_max - grid.x_min
    mid = 0.5 * (grid.x_min + grid.x_max)
    shapes = []
    for center in (mid - 0.2 * span, mid, mid + 0.15 * span):
        jitter = 0.02 * span * rng.standard_normal()
        for width in (0.04 * span, 0.1 * span):
            s = (x - center - jitter) / width
            shapes.append(np.exp(-0.5 * s * s))
            shapes.append(s * np.exp(-0.5 * s * s))
    for center in (mid - 0.1 * span, mid + 0.1 * span):
        for width in (0.05 * span, 0.12 * span):
            shapes.append(np.tanh((x - center) / width) + 1.0)
    return shapes


def decaying_probes(grid: GridSpec, seed: int = 0, count: int = 6) -> list[GridFunction]:
    """Unit-H2 probes that decay near the truncation edges (safe to propagate)."""
    rng = np.random.default_rng(seed)
    x = grid.nodes()
    span = grid.x_max - grid.x_min
    mid = 0.5 * (grid.x_min + grid.x_max)
    out: list[GridFunction] = []
    widths = (0.04, 0.07, 0.1)
    centers = (-0.12, 0.0, 0.12)
    k = 0
    while len(out) < count:
        width = widths[k % len(widths)] * span
        center = mid + centers[(k // len(widths)) % len(centers)] * span
        s = (x - center) / width
        envelope = np.exp(-0.5 * s * s)
        if k % 2 == 0:
            v = envelope
        else:
            v = s * envelope * (1.0 + 0.2 * rng.standard_normal())
        norm = h2_array(v, grid.dx)
        if norm > 0.0:
            out.append(GridFunction(grid, v / norm))
        k += 1
    return out
