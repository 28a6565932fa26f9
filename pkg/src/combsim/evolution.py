"""Discrete evolution operator for the frozen linear part of one layer.

Each step of length dt applies a theta-weighted implicit finite-difference
solve for d/dt v = alpha v_xx - beta v_x with coefficients frozen at the step
midpoint, homogeneous Dirichlet values at the truncation edges, and a banded
(tridiagonal) LHS.  theta = 1/2 is trapezoidal (second order), theta = 1 fully
implicit; both are unconditionally stable.

Times snap to the global step grid (integer multiples of dt), so propagating
r -> t in one call or through any intermediate aligned s takes the identical
sequence of solves and the composition identity holds to the last bit.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
from scipy.linalg import solve_banded

from .errors import CFLWarning, LinearSolveFailure
from .grid import GridFunction, GridSpec, h2_array, l2_array

__all__ = [
    "EvolutionStepper",
    "propagate",
    "composition_check",
    "norm_growth_check",
    "measure_h2_growth",
]

CoeffFn = Callable[[float], tuple[np.ndarray, np.ndarray]]


@dataclass(frozen=True)
class SnappedTime:
    index: int
    time: float
    distance: float


class EvolutionStepper:
    """Banded theta-method realization of the layer propagator U(t, s).

    Parameters
    ----------
    grid : GridSpec
    coeff_fn : callable t -> (alpha, beta)
        Midpoint coefficient samples as arrays of length nx.
    dt : float
        Step size; all times snap to multiples of dt.
    theta : float
        Implicit weight in [1/2, 1].
    beta_accretivity : float
        Accretivity constant used by the norm-growth check.
    time_dependent : bool
        False lets the stepper build the banded matrices once and reuse them.
    """

    def __init__(
        self,
        grid: GridSpec,
        coeff_fn: CoeffFn,
        dt: float,
        theta: float = 0.5,
        beta_accretivity: float = 0.0,
        time_dependent: bool = True,
    ):
        if dt <= 0.0:
            raise ValueError(f"dt must be positive, got {dt}")
        if not 0.5 <= theta <= 1.0:
            raise ValueError(f"theta must lie in [0.5, 1], got {theta}")
        self.grid = grid
        self.coeff_fn = coeff_fn
        self.dt = float(dt)
        self.theta = float(theta)
        self.beta_accretivity = float(beta_accretivity)
        self.time_dependent = bool(time_dependent)
        self._cache: dict[int, tuple] = {}
        self._warned_cfl = False

    def snap_time(self, t: float) -> SnappedTime:
        """Nearest step-grid index for ``t`` and the snapping distance."""
        m = int(round(t / self.dt))
        snapped = m * self.dt
        return SnappedTime(m, snapped, abs(t - snapped))

    def _matrices(self, m: int):
        key = m if self.time_dependent else 0
        hit = self._cache.get(key)
        if hit is not None:
            return hit
        t_mid = (key + 0.5) * self.dt
        alpha, beta = self.coeff_fn(t_mid)
        alpha = np.asarray(alpha, dtype=float)
        beta = np.asarray(beta, dtype=float)
        if alpha.shape != (self.grid.nx,) or beta.shape != (self.grid.nx,):
            raise ValueError("coefficient samples have wrong shape")
        if float(np.min(alpha)) <= 0.0:
            raise LinearSolveFailure(
                f"alpha sample reached {float(np.min(alpha)):.3e} <= 0 at t={t_mid:.6g}; "
                "the operator is not uniformly parabolic"
            )
        dx = self.grid.dx
        if not self._warned_cfl and float(np.max(np.abs(beta))) * self.dt / dx > 1.0:
            self._warned_cfl = True
            warnings.warn(
                "advective Courant number exceeds 1; the scheme stays stable but "
                "accuracy may suffer",
                CFLWarning,
                stacklevel=3,
            )
        ai = alpha[1:-1]
        bi = beta[1:-1]
        sub = -ai / dx**2 - bi / (2.0 * dx)
        diag = 2.0 * ai / dx**2
        sup = -ai / dx**2 + bi / (2.0 * dx)

        nx = self.grid.nx
        ab = np.zeros((3, nx))
        ab[1, :] = 1.0
        ab[1, 1:-1] += self.theta * self.dt * diag
        # ab[0, j] holds M[j-1, j] and ab[2, j] holds M[j+1, j]; rows 0 and
        # nx-1 stay identity rows (their off-diagonal slots remain zero).
        ab[0, 2:] = self.theta * self.dt * sup
        ab[2, :-2] = self.theta * self.dt * sub

        entry = (ab, sub, diag, sup)
        self._cache[key] = entry
        return entry

    def step_array(self, u: np.ndarray, m: int, source: np.ndarray | None = None) -> np.ndarray:
        """One step from index m to m+1, optionally adding dt * source to the RHS."""
        ab, sub, diag, sup = self._matrices(m)
        w = 1.0 - self.theta
        rhs = np.zeros_like(u)
        rhs[1:-1] = u[1:-1] - w * self.dt * (sub * u[:-2] + diag * u[1:-1] + sup * u[2:])
        if source is not None:
            rhs[1:-1] += self.dt * source[1:-1]
        rhs[0] = 0.0
        rhs[-1] = 0.0
        try:
            out = solve_banded((1, 1), ab, rhs, check_finite=False)
        except np.linalg.LinAlgError as exc:  # pragma: no cover - defensive
            raise LinearSolveFailure(f"banded solve failed at step {m}: {exc}") from exc
        if not np.all(np.isfinite(out)):
            raise LinearSolveFailure(f"banded solve produced non-finite values at step {m}")
        return out

    def propagate_array(self, values: np.ndarray, m_start: int, m_stop: int) -> np.ndarray:
        if m_stop < m_start:
            raise ValueError("cannot propagate backwards in time")
        u = values
        for m in range(m_start, m_stop):
            u = self.step_array(u, m)
        return u


def propagate(stepper: EvolutionStepper, phi: GridFunction, s: float, t: float) -> GridFunction:
    """Apply the discrete propagator from time s to t (both snapped to the step grid)."""
    ms = stepper.snap_time(s)
    mt = stepper.snap_time(t)
    if mt.index < ms.index:
        raise ValueError(f"t={t} precedes s={s} after snapping")
    if mt.index == ms.index:
        return phi
    out = stepper.propagate_array(phi.values, ms.index, mt.index)
    return GridFunction(stepper.grid, out)


def composition_check(
    stepper: EvolutionStepper, phi: GridFunction, r: float, s: float, t: float
) -> float:
    """Relative defect between the direct path r->t and the split path r->s->t."""
    direct = propagate(stepper, phi, r, t)
    split = propagate(stepper, propagate(stepper, phi, r, s), s, t)
    denom = max(l2_array(direct.values, stepper.grid.dx), 1e-300)
    return l2_array(direct.values - split.values, stepper.grid.dx) / denom


def norm_growth_check(
    stepper: EvolutionStepper, phi: GridFunction, s: float, t: float
) -> float:
    """L2 growth ratio over [s, t]; zero by convention for a zero state."""
    n0 = l2_array(phi.values, stepper.grid.dx)
    if n0 == 0.0:
        return 0.0
    evolved = propagate(stepper, phi, s, t)
    return l2_array(evolved.values, stepper.grid.dx) / n0


def measure_h2_growth(
    stepper: EvolutionStepper,
    family: Sequence[GridFunction],
    horizon: float,
    checkpoints: int = 8,
) -> float:
    """Smallest nonnegative beta_tilde with H2 growth <= exp(beta_tilde * t) over the family.

    Zero-norm members are skipped by contract.  The estimate is the max of
    log(ratio)/t over a set of checkpoint times, clamped at zero.
    """
    m_end = stepper.snap_time(horizon).index
    if m_end <= 0:
        raise ValueError("horizon shorter than one step")
    stride = max(1, m_end // max(1, checkpoints))
    dx = stepper.grid.dx
    best = 0.0
    for phi in family:
        h0 = h2_array(phi.values, dx)
        if h0 == 0.0:
            continue
        u = phi.values
        for m in range(m_end):
            u = stepper.step_array(u, m)
            k = m + 1
            if k % stride == 0 or k == m_end:
                ratio = h2_array(u, dx) / h0
                if ratio > 0.0:
                    best = max(best, math.log(ratio) / (k * stepper.dt))
    return max(0.0, best)
