"""Arrhenius nonlinearity, coupled source vector, Jacobian, and measured constants.

The source combines, per layer, a convection correction, the Arrhenius
reaction term, nearest-neighbor interlayer heat transfer, and (in the outer
layers) heat loss to the environment, all divided by the common denominator
a + b*y.  Coupling across layers is exactly tridiagonal in the layer index.

The Lipschitz constant kappa and the H2 source bound mu have no closed form;
they are measured over deterministic sampling families and reported as
empirical constants.  For kappa the diagonal Jacobian entry depends on the
state only through the pointwise temperature, so a dense scan over the
reachable temperature interval dominates the row-sum norm along any segment
between ball states.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Callable, Sequence

import numpy as np

from .errors import LayerCountMismatch
from .grid import GridFunction, GridSpec, embedding_constant, h2_array
from .model import FuelConcentration, LayerParams, _denominator
from .probes import shape_bank

__all__ = [
    "Arrhenius",
    "arrhenius_bounds",
    "ReactionContext",
    "source_eval",
    "source_jacobian",
    "state_family",
    "random_states",
    "lipschitz_estimate",
    "source_h2_bound",
]

# Below theta = RATE_FLOOR_FACTOR * E every Arrhenius value snaps to zero; the
# true magnitudes there are far beneath double-precision underflow and the
# E^2/theta^4 prefactors would otherwise amplify rounding noise.
RATE_FLOOR_FACTOR = 1e-3


@dataclass(frozen=True)
class Arrhenius:
    """Reaction rate g(theta) = exp(-E/theta) for theta > 0, zero otherwise."""

    E: float

    def __post_init__(self) -> None:
        if self.E < 0.0:
            raise ValueError(f"activation energy must be nonnegative, got {self.E}")

    @property
    def floor(self) -> float:
        return RATE_FLOOR_FACTOR * self.E

    def _masked(self, theta, fn):
        arr = np.asarray(theta, dtype=float)
        out = np.zeros_like(arr)
        mask = arr > self.floor
        if np.any(mask):
            out[mask] = fn(arr[mask])
        return out if isinstance(theta, np.ndarray) else float(out)

    def g(self, theta):
        if self.E == 0.0:
            arr = np.asarray(theta, dtype=float)
            out = np.where(arr > 0.0, 1.0, 0.0)
            return out if isinstance(theta, np.ndarray) else float(out)
        return self._masked(theta, lambda v: np.exp(-self.E / v))

    def g1(self, theta):
        if self.E == 0.0:
            return self._masked(theta, lambda v: np.zeros_like(v))
        return self._masked(theta, lambda v: (self.E / v**2) * np.exp(-self.E / v))

    def g2(self, theta):
        if self.E == 0.0:
            return self._masked(theta, lambda v: np.zeros_like(v))
        return self._masked(
            theta,
            lambda v: (self.E**2 / v**4 - 2.0 * self.E / v**3) * np.exp(-self.E / v),
        )

    def bounds(self) -> tuple[float, float, float]:
        return arrhenius_bounds(self.E)


def arrhenius_bounds(E: float) -> tuple[float, float, float]:
    """Exact sup norms of g, g', g'' over the real line.

    In s = E/theta the derivatives are g' = (s^2/E) e^{-s} and
    g'' = (s^3 (s-2)/E^2) e^{-s}; their critical points are s = 2 and
    s = 3 +- sqrt(3).
    """
    if E == 0.0:
        return (1.0, 0.0, 0.0)
    g1_max = 4.0 * math.exp(-2.0) / E
    s_crit = (3.0 - math.sqrt(3.0), 3.0 + math.sqrt(3.0))
    g2_max = max(abs(s**3 * (s - 2.0) * math.exp(-s)) for s in s_crit) / E**2
    return (1.0, g1_max, g2_max)


@dataclass(frozen=True)
class ReactionContext:
    """Layer data, fuel, and the H2 ball radius the constants refer to."""

    layers: tuple[LayerParams, ...]
    fuel: FuelConcentration
    grid: GridSpec
    rho: float

    def __post_init__(self) -> None:
        if len(self.layers) < 2:
            raise ValueError(f"need at least 2 layers, got {len(self.layers)}")
        if self.fuel.n_layers != len(self.layers):
            raise ValueError("fuel concentration layer count does not match")
        if self.rho <= 0.0:
            raise ValueError(f"ball radius rho must be positive, got {self.rho}")
        object.__setattr__(self, "_rates", tuple(Arrhenius(p.E) for p in self.layers))

    @property
    def n(self) -> int:
        return len(self.layers)

    def rate(self, layer: int) -> Arrhenius:
        return self._rates[layer]

    def with_rho(self, rho: float) -> "ReactionContext":
        return ReactionContext(self.layers, self.fuel, self.grid, rho)

    # -- array kernels used by the solvers ---------------------------------

    def denominators(self, t: float) -> np.ndarray:
        return np.stack([
            _denominator(p, self.fuel.sample(i, t)) for i, p in enumerate(self.layers)
        ])

    def eval_arrays(self, t: float, W: np.ndarray) -> np.ndarray:
        """Source vector on raw state arrays of shape (n_layers, nx)."""
        n = self.n
        if W.shape[0] != n:
            raise LayerCountMismatch(f"state has {W.shape[0]} layers, context has {n}")
        out = np.empty_like(W)
        for i, p in enumerate(self.layers):
            ys = self.fuel.sample(i, t)
            den = _denominator(p, ys)
            wi = W[i]
            g = self.rate(i).g(wi)
            total = -p.c.d1.values * wi
            total += (p.K * p.b.value.values * wi + p.d.value.values) * ys.y.values * g
            if i > 0:
                total += p.q_left * (W[i - 1] - wi)
            if i < n - 1:
                total += p.q_right * (W[i + 1] - wi)
            if p.qbar != 0.0:
                total -= p.qbar * (wi - p.u_e)
            out[i] = total / den
        return out

    def jacobian_arrays(self, t: float, W: np.ndarray) -> np.ndarray:
        """Per-node state Jacobian, shape (n, n, nx); zero beyond the tridiagonal band."""
        n = self.n
        if W.shape[0] != n:
            raise LayerCountMismatch(f"state has {W.shape[0]} layers, context has {n}")
        nx = W.shape[1]
        J = np.zeros((n, n, nx))
        for i, p in enumerate(self.layers):
            ys = self.fuel.sample(i, t)
            den = _denominator(p, ys)
            wi = W[i]
            rate = self.rate(i)
            diag = -p.c.d1.values
            diag = diag + p.K * p.b.value.values * ys.y.values * rate.g(wi)
            diag = diag + (p.K * p.b.value.values * wi + p.d.value.values) * ys.y.values * rate.g1(wi)
            diag = diag - (p.q_left + p.q_right + p.qbar)
            J[i, i] = diag / den
            if i > 0:
                J[i, i - 1] = p.q_left / den
            if i < n - 1:
                J[i, i + 1] = p.q_right / den
        return J


def _as_arrays(ctx: ReactionContext, w: Sequence[GridFunction]) -> np.ndarray:
    if len(w) != ctx.n:
        raise LayerCountMismatch(f"state has {len(w)} layers, context has {ctx.n}")
    for gf in w:
        if gf.grid != ctx.grid:
            raise ValueError("state layer lives on a different grid")
    return np.stack([gf.values for gf in w])


def source_eval(ctx: ReactionContext, t: float, w: Sequence[GridFunction]) -> list[GridFunction]:
    """Source vector f(t, w) as grid functions, one per layer."""
    F = ctx.eval_arrays(t, _as_arrays(ctx, w))
    return [GridFunction(ctx.grid, F[i]) for i in range(ctx.n)]


def source_jacobian(ctx: ReactionContext, t: float, w: Sequence[GridFunction]) -> np.ndarray:
    """Per-node Jacobian d f_i / d w_j, shape (n, n, nx)."""
    return ctx.jacobian_arrays(t, _as_arrays(ctx, w))


# ---------------------------------------------------------------------------
# Sampling families and measured constants
# ---------------------------------------------------------------------------

def state_family(
    ctx: ReactionContext, rho: float, seed: int = 0, scales: Sequence[float] = (0.125, 0.25, 0.5, 0.75, 1.0)
) -> list[np.ndarray]:
    """Deterministic states spanning the H2 ball of radius rho.

    Layerwise mixtures of the shape bank, sign flips included, each state
    normalized so its product-space H2 norm hits ``scale * rho`` exactly.
    """
    shapes = shape_bank(ctx.grid, seed)
    dx = ctx.grid.dx
    n = ctx.n
    states = []
    combos = []
    for k in range(len(shapes)):
        combos.append([shapes[(k + i) % len(shapes)] for i in range(n)])
    combos.append([shapes[0] for _ in range(n)])
    combos.append([(-1.0) ** i * shapes[1] for i in range(n)])
    for layers in combos:
        W = np.stack(layers)
        norm = max(h2_array(W[i], dx) for i in range(n))
        if norm == 0.0:
            continue
        for scale in scales:
            states.append(W * (scale * rho / norm))
    return states


def random_states(
    ctx: ReactionContext, rho: float, count: int, rng: np.random.Generator
) -> list[np.ndarray]:
    """Random smooth states with product-space H2 norm uniform in (0, rho]."""
    x = ctx.grid.nodes()
    span = ctx.grid.x_max - ctx.grid.x_min
    mid = 0.5 * (ctx.grid.x_min + ctx.grid.x_max)
    dx = ctx.grid.dx
    out = []
    for _ in range(count):
        layers = []
        for _ in range(ctx.n):
            v = np.zeros_like(x)
            for _ in range(rng.integers(1, 4)):
                center = mid + 0.3 * span * (rng.random() - 0.5)
                width = span * (0.03 + 0.1 * rng.random())
                amp = rng.standard_normal()
                s = (x - center) / width
                v += amp * np.exp(-0.5 * s * s)
            layers.append(v)
        W = np.stack(layers)
        norm = max(h2_array(W[i], dx) for i in range(ctx.n))
        if norm == 0.0:
            continue
        out.append(W * (rho * (0.05 + 0.95 * rng.random()) / norm))
    return out


@lru_cache(maxsize=None)
def _cached_embedding(grid: GridSpec) -> float:
    return embedding_constant(grid)


def lipschitz_estimate(
    ctx: ReactionContext,
    horizon: float,
    times: Sequence[float] | None = None,
    n_theta: int = 4001,
    theta_margin: float = 1.2,
    rho: float | None = None,
) -> float:
    """Empirical L2 Lipschitz constant of w -> f(t, w) on the ball of radius rho.

    Returns the maximal Jacobian row-sum norm over every node, every sampled
    time, and a dense scan of pointwise temperatures reachable inside the
    ball (|w| <= embedding constant * rho, widened by ``theta_margin``).
    Because each row depends on the state only through the local temperature,
    the scan dominates the mean-value segment between any two ball states.
    """
    if rho is None:
        rho = ctx.rho
    if times is None:
        times = ctx.fuel.sample_times(horizon, max_samples=9)
    theta_max = theta_margin * _cached_embedding(ctx.grid) * rho
    thetas = np.linspace(-theta_max, theta_max, n_theta)
    kappa = 0.0
    for i, p in enumerate(ctx.layers):
        rate = ctx.rate(i)
        g = rate.g(thetas)
        g1 = rate.g1(thetas)
        gcomb = g + thetas * g1
        q_total = p.q_left + p.q_right + p.qbar
        q_off = p.q_left + p.q_right
        for t in times:
            ys = ctx.fuel.sample(i, float(t))
            den = _denominator(p, ys)
            a0 = -p.c.d1.values - q_total
            pk = p.K * p.b.value.values * ys.y.values
            dd = p.d.value.values * ys.y.values
            # chunk the theta scan to bound the outer-product size
            for lo in range(0, n_theta, 512):
                hi = min(lo + 512, n_theta)
                diag = (
                    a0[:, None]
                    + pk[:, None] * gcomb[None, lo:hi]
                    + dd[:, None] * g1[None, lo:hi]
                )
                rowsum = (np.abs(diag) + q_off) / den[:, None]
                kappa = max(kappa, float(rowsum.max()))
    return kappa


def source_h2_bound(
    ctx: ReactionContext,
    horizon: float,
    times: Sequence[float] | None = None,
    states: Sequence[np.ndarray] | None = None,
    seed: int = 0,
) -> float:
    """Empirical sup of the product-space H2 norm of f over sampled times and ball states."""
    if times is None:
        times = ctx.fuel.sample_times(horizon, max_samples=5)
    if states is None:
        states = state_family(ctx, ctx.rho, seed=seed)
    dx = ctx.grid.dx
    mu = 0.0
    for t in times:
        for W in states:
            F = ctx.eval_arrays(float(t), W)
            mu = max(mu, max(h2_array(F[i], dx) for i in range(ctx.n)))
    return mu
