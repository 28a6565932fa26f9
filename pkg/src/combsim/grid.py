"""Uniform spatial grid, sampled functions, difference stencils and discrete Sobolev norms.

Everything downstream (coefficients, states, source terms) is carried by
:class:`GridFunction` objects living on a shared :class:`GridSpec`.  Derivatives
use second-order centered stencils in the interior and second-order one-sided
stencils at the two endpoints, so a grid function is self-contained (no ghost
nodes).  Norms are plain Riemann sums, which is all the verification suite
needs on states that decay near the truncation boundary.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

__all__ = [
    "GridSpec",
    "GridFunction",
    "first_derivative",
    "second_derivative",
    "norm_l2",
    "norm_h1",
    "norm_h2",
    "norm_sup",
    "vector_norm",
    "d1_array",
    "d2_array",
    "l2_array",
    "h1_array",
    "h2_array",
    "embedding_constant",
]


@dataclass(frozen=True)
class GridSpec:
    """Uniform truncation [x_min, x_max] of the line with nx nodes.

    Attributes
    ----------
    x_min, x_max : float
        Truncation interval endpoints.
    nx : int
        Number of nodes, at least 5 (second-derivative stencils need the room).
    """

    x_min: float
    x_max: float
    nx: int

    def __post_init__(self) -> None:
        if self.nx < 5:
            raise ValueError(f"nx must be >= 5, got {self.nx}")
        if not self.x_min < self.x_max:
            raise ValueError(f"x_min must be < x_max, got [{self.x_min}, {self.x_max}]")

    @property
    def dx(self) -> float:
        return (self.x_max - self.x_min) / (self.nx - 1)

    def nodes(self) -> np.ndarray:
        return np.linspace(self.x_min, self.x_max, self.nx)


@dataclass(frozen=True)
class GridFunction:
    """A real function of x sampled on a uniform grid; values are immutable."""

    grid: GridSpec
    values: np.ndarray = field(repr=False)

    def __post_init__(self) -> None:
        values = np.asarray(self.values, dtype=float)
        if values.shape != (self.grid.nx,):
            raise ValueError(
                f"values must have shape ({self.grid.nx},), got {values.shape}"
            )
        if not np.all(np.isfinite(values)):
            raise ValueError("values must be finite (no NaN/Inf)")
        values = values.copy()
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    @classmethod
    def from_callable(cls, grid: GridSpec, fn) -> "GridFunction":
        return cls(grid, np.asarray(fn(grid.nodes()), dtype=float))

    @classmethod
    def zeros(cls, grid: GridSpec) -> "GridFunction":
        return cls(grid, np.zeros(grid.nx))


# ---------------------------------------------------------------------------
# Raw-array stencils.  Solver kernels work on bare arrays for speed; the
# GridFunction operations below are thin wrappers.
# ---------------------------------------------------------------------------

def d1_array(v: np.ndarray, dx: float) -> np.ndarray:
    """Second-order first derivative: centered interior, one-sided endpoints."""
    out = np.empty_like(v)
    out[1:-1] = (v[2:] - v[:-2]) / (2.0 * dx)
    out[0] = (-3.0 * v[0] + 4.0 * v[1] - v[2]) / (2.0 * dx)
    out[-1] = (3.0 * v[-1] - 4.0 * v[-2] + v[-3]) / (2.0 * dx)
    return out


def d2_array(v: np.ndarray, dx: float) -> np.ndarray:
    """Second-order second derivative: three-point interior, one-sided endpoints."""
    out = np.empty_like(v)
    dx2 = dx * dx
    out[1:-1] = (v[2:] - 2.0 * v[1:-1] + v[:-2]) / dx2
    out[0] = (2.0 * v[0] - 5.0 * v[1] + 4.0 * v[2] - v[3]) / dx2
    out[-1] = (2.0 * v[-1] - 5.0 * v[-2] + 4.0 * v[-3] - v[-4]) / dx2
    return out


def l2_array(v: np.ndarray, dx: float) -> float:
    return float(np.sqrt(dx * np.dot(v, v)))


def h1_array(v: np.ndarray, dx: float) -> float:
    d1 = d1_array(v, dx)
    return float(np.sqrt(dx * (np.dot(v, v) + np.dot(d1, d1))))


def h2_array(v: np.ndarray, dx: float) -> float:
    d1 = d1_array(v, dx)
    d2 = d2_array(v, dx)
    return float(np.sqrt(dx * (np.dot(v, v) + np.dot(d1, d1) + np.dot(d2, d2))))


# ---------------------------------------------------------------------------
# GridFunction operations
# ---------------------------------------------------------------------------

def first_derivative(f: GridFunction) -> GridFunction:
    """Discrete d/dx of ``f`` at second order."""
    return GridFunction(f.grid, d1_array(f.values, f.grid.dx))


def second_derivative(f: GridFunction) -> GridFunction:
    """Discrete d2/dx2 of ``f`` at second order."""
    return GridFunction(f.grid, d2_array(f.values, f.grid.dx))


def norm_l2(f: GridFunction) -> float:
    """sqrt(dx * sum(values^2))."""
    return l2_array(f.values, f.grid.dx)


def norm_h1(f: GridFunction) -> float:
    """sqrt(L2(f)^2 + L2(f')^2) with the package stencils."""
    return h1_array(f.values, f.grid.dx)


def norm_h2(f: GridFunction) -> float:
    """sqrt(L2(f)^2 + L2(f')^2 + L2(f'')^2) with the package stencils."""
    return h2_array(f.values, f.grid.dx)


def norm_sup(f: GridFunction) -> float:
    return float(np.max(np.abs(f.values)))


_NORMS = {
    "l2": norm_l2,
    "h1": norm_h1,
    "h2": norm_h2,
    "sup": norm_sup,
}


def vector_norm(fs: Sequence[GridFunction], which: str = "l2") -> float:
    """Product-space norm of a layered state: max over layers of the scalar norm."""
    which = which.lower()
    if which not in _NORMS:
        raise ValueError(f"unknown norm {which!r}; expected one of {sorted(_NORMS)}")
    fs = list(fs)
    if not fs:
        raise ValueError("empty layer list")
    grid = fs[0].grid
    for f in fs[1:]:
        if f.grid != grid:
            raise ValueError("layers live on mismatched grids")
    scalar = _NORMS[which]
    return max(scalar(f) for f in fs)


def _embedding_family(grid: GridSpec) -> Iterable[np.ndarray]:
    """Smooth decaying probes used to measure the sup/H1 embedding constant."""
    x = grid.nodes()
    mid = 0.5 * (grid.x_min + grid.x_max)
    span = grid.x_max - grid.x_min
    for width in (0.05 * span, 0.1 * span, 0.2 * span):
        for shift in (-0.15 * span, 0.0, 0.15 * span):
            s = (x - mid - shift) / width
            yield np.exp(-0.5 * s * s)
            yield s * np.exp(-0.5 * s * s)
            yield np.exp(-0.5 * s * s) * np.sin(4.0 * s)


def embedding_constant(grid: GridSpec, family: Iterable[np.ndarray] | None = None) -> float:
    """Measured constant C with sup|f| <= C * ||f||_H1 over a fixed probe family.

    The continuum constant on the line is 1/sqrt(2); the discrete one is
    measured once per grid and then treated as fixed by callers that need a
    sup-norm bound for states in an H2 ball.
    """
    dx = grid.dx
    best = 0.0
    probes = family if family is not None else _embedding_family(grid)
    for v in probes:
        h1 = h1_array(v, dx)
        if h1 == 0.0:
            continue
        best = max(best, float(np.max(np.abs(v))) / h1)
    return best
