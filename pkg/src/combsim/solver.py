"""Mild-solution machinery: contraction window, Picard iteration, continuation.

The Picard map sends a candidate trajectory v to

    (Phi v)(t) = U(t, 0) phi + integral_0^t U(t, tau) f(tau, v(tau)) dtau,

realized on the step grid with trapezoidal quadrature.  The running integral
is advanced with the propagator recurrence

    S_{m+1} = U(t_{m+1}, t_m) (S_m + dt/2 f_m) + dt/2 f_{m+1},

so one sweep over a window of k steps costs O(k) banded solves per layer
instead of the naive O(k^2).

``mol_solve`` is the independent oracle: a method-of-lines run with the same
implicit linear step and an explicit (Adams-Bashforth) source, second order
in the smooth regime.  ``global_solve`` chains contraction windows and
monitors the exponential a-priori bounds along the way.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .errors import BoundViolated, InfeasibleWindow, NoConvergence, WindowInfeasible
from .evolution import EvolutionStepper, measure_h2_growth
from .grid import GridFunction, GridSpec, h2_array, l2_array
from .model import compute_alpha_beta
from .probes import decaying_probes
from .reaction import ReactionContext, lipschitz_estimate, source_h2_bound
from .util import parallel_map

__all__ = [
    "SolverConfig",
    "ContractionParams",
    "SolutionTrajectory",
    "PicardResult",
    "GlobalResult",
    "build_steppers",
    "compute_window",
    "open_window",
    "picard_solve",
    "picard_sweep",
    "mol_solve",
    "global_solve",
]

SourceFn = Callable[[float, np.ndarray], np.ndarray]

WINDOW_SAFETY = 0.9
DEFAULT_R_HEADROOM = 1.1
RHO_FLOOR = 1e-8
MONITOR_SLACK = 1e-9


@dataclass(frozen=True)
class SolverConfig:
    dt: float = 1e-3
    theta: float = 0.5
    tol: float = 1e-8
    max_iter: int = 50
    horizon: float = 1.0
    default_T: float = 1.0
    seed: int = 0
    threads: int = 1


@dataclass(frozen=True)
class ContractionParams:
    """Every constant feeding the window bound, plus the chosen window length."""

    rho: float
    M: float
    R: float
    T: float
    T_prime: float
    beta: float
    beta_tilde: float
    mu: float
    kappa: float
    terms: dict[str, float]
    contraction_bound: float
    safety: float = WINDOW_SAFETY

    def to_dict(self) -> dict:
        out = {
            "rho": self.rho, "M": self.M, "R": self.R, "T": self.T,
            "T_prime": self.T_prime, "beta": self.beta, "beta_tilde": self.beta_tilde,
            "mu": self.mu, "kappa": self.kappa, "contraction_bound": self.contraction_bound,
            "safety": self.safety,
        }
        out["terms"] = dict(self.terms)
        return out


def compute_window(
    *,
    beta: float,
    beta_tilde: float,
    mu: float,
    kappa: float,
    rho: float,
    M: float | None = None,
    R: float | None = None,
    T: float | None = None,
    default_T: float = 1.0,
    safety: float = WINDOW_SAFETY,
) -> ContractionParams:
    """Pick the window length T' from the contraction bound.

    T' is ``safety`` times min{T, M/(mu e^{beta T}), 1/(kappa e^{beta T}),
    (R/e^{beta_tilde T} - rho)/mu}; terms with a vanishing denominator count
    as +inf.  Defaults: M = 2 rho, R just above the smallest admissible
    radius, T capped by ln(M/rho)/beta.
    """
    if rho <= 0.0:
        raise InfeasibleWindow(f"ball radius must be positive, got rho={rho}")
    if M is None:
        M = 2.0 * rho
    if M <= rho:
        raise InfeasibleWindow(f"need M > rho, got M={M}, rho={rho}")
    T_cap = math.log(M / rho) / beta if beta > 0.0 else math.inf
    if T is None:
        T = T_cap if math.isfinite(T_cap) else default_T
    if T <= 0.0:
        raise InfeasibleWindow(f"candidate horizon T={T} is not positive")
    if T > T_cap * (1.0 + 1e-12):
        raise InfeasibleWindow(f"T={T} exceeds the norm-growth cap ln(M/rho)/beta={T_cap}")
    if beta > 0.0:
        R_min = rho * (M / rho) ** (beta_tilde / beta)
    else:
        R_min = rho * math.exp(beta_tilde * T)
    if R is None:
        R = DEFAULT_R_HEADROOM * R_min
    if R <= R_min * (1.0 - 1e-12):
        raise InfeasibleWindow(f"R={R} is below the admissible radius {R_min}")

    ebt = math.exp(beta * T)
    terms = {
        "T": T,
        "M/(mu*exp(beta*T))": M / (mu * ebt) if mu > 0.0 else math.inf,
        "1/(kappa*exp(beta*T))": 1.0 / (kappa * ebt) if kappa > 0.0 else math.inf,
        "(R/exp(beta_tilde*T)-rho)/mu": (
            (R / math.exp(beta_tilde * T) - rho) / mu if mu > 0.0 else math.inf
        ),
    }
    bound = min(terms.values())
    if not bound > 0.0:
        raise InfeasibleWindow(
            "window bound is nonpositive: "
            + ", ".join(f"{k}={v:.6g}" for k, v in terms.items())
        )
    T_prime = safety * bound if math.isfinite(bound) else safety * T
    T_prime = min(T_prime, T)
    return ContractionParams(
        rho=rho, M=M, R=R, T=T, T_prime=T_prime,
        beta=beta, beta_tilde=beta_tilde, mu=mu, kappa=kappa,
        terms=terms, contraction_bound=T_prime * kappa * ebt, safety=safety,
    )


@dataclass
class SolutionTrajectory:
    """Times x layers x grid values with per-step norm diagnostics."""

    grid: GridSpec
    times: np.ndarray
    states: np.ndarray  # shape (nt, n_layers, nx)
    l2: np.ndarray
    h2: np.ndarray
    iterations: np.ndarray
    contraction_ratio: np.ndarray

    @classmethod
    def from_states(
        cls,
        grid: GridSpec,
        times: np.ndarray,
        states: np.ndarray,
        iterations: int = 0,
        contraction_ratio: float = math.nan,
    ) -> "SolutionTrajectory":
        times = np.asarray(times, dtype=float)
        if np.any(np.diff(times) <= 0.0):
            raise ValueError("times must be strictly increasing")
        nt, n, _ = states.shape
        l2 = np.empty(nt)
        h2 = np.empty(nt)
        for m in range(nt):
            l2[m] = max(l2_array(states[m, i], grid.dx) for i in range(n))
            h2[m] = max(h2_array(states[m, i], grid.dx) for i in range(n))
        if not np.all(np.isfinite(h2)):
            raise ValueError("trajectory contains non-finite H2 norms")
        return cls(
            grid=grid, times=times, states=states, l2=l2, h2=h2,
            iterations=np.full(nt, iterations, dtype=int),
            contraction_ratio=np.full(nt, contraction_ratio),
        )

    @property
    def n_layers(self) -> int:
        return self.states.shape[1]

    def state(self, k: int) -> list[GridFunction]:
        return [GridFunction(self.grid, self.states[k, i]) for i in range(self.n_layers)]

    def concat(self, other: "SolutionTrajectory") -> "SolutionTrajectory":
        if abs(self.times[-1] - other.times[0]) > 1e-12:
            raise ValueError("trajectories do not join")
        return SolutionTrajectory(
            grid=self.grid,
            times=np.concatenate([self.times, other.times[1:]]),
            states=np.concatenate([self.states, other.states[1:]], axis=0),
            l2=np.concatenate([self.l2, other.l2[1:]]),
            h2=np.concatenate([self.h2, other.h2[1:]]),
            iterations=np.concatenate([self.iterations, other.iterations[1:]]),
            contraction_ratio=np.concatenate([self.contraction_ratio, other.contraction_ratio[1:]]),
        )


def build_steppers(
    ctx: ReactionContext,
    dt: float,
    theta: float,
    t0: float = 0.0,
    beta_per_layer: Sequence[float] | None = None,
) -> list[EvolutionStepper]:
    """One propagator per layer, with coefficients sampled at global time t0 + t."""
    steppers = []
    for i, p in enumerate(ctx.layers):
        def coeff(t_local: float, i=i, p=p) -> tuple[np.ndarray, np.ndarray]:
            alpha, beta = compute_alpha_beta(p, ctx.fuel, i, t0 + t_local)
            return alpha.values, beta.values

        steppers.append(EvolutionStepper(
            ctx.grid, coeff, dt, theta,
            beta_accretivity=beta_per_layer[i] if beta_per_layer else 0.0,
            time_dependent=ctx.fuel.time_dependent,
        ))
    return steppers


def _as_state_array(ctx: ReactionContext, phi: Sequence[GridFunction]) -> np.ndarray:
    if len(phi) != ctx.n:
        raise ValueError(f"initial data has {len(phi)} layers, context has {ctx.n}")
    return np.stack([p.values for p in phi])


def _free_evolution(steppers, phi_arr: np.ndarray, n_steps: int, threads: int = 1) -> np.ndarray:
    n, nx = phi_arr.shape

    def run(i: int) -> np.ndarray:
        out = np.empty((n_steps + 1, nx))
        out[0] = phi_arr[i]
        u = phi_arr[i]
        for m in range(n_steps):
            u = steppers[i].step_array(u, m)
            out[m + 1] = u
        return out

    per_layer = parallel_map(run, range(n), threads)
    return np.stack(per_layer, axis=1)


def picard_sweep(
    steppers,
    source: SourceFn,
    free: np.ndarray,
    U: np.ndarray,
    dt: float,
    t0: float = 0.0,
    threads: int = 1,
) -> np.ndarray:
    """One application of the Picard map to the trajectory U on the step grid."""
    n_times, n, nx = U.shape
    n_steps = n_times - 1
    fvals = np.empty_like(U)
    for m in range(n_times):
        fvals[m] = source(t0 + m * dt, U[m])

    def run(i: int) -> np.ndarray:
        out = np.empty((n_times, nx))
        out[0] = free[0, i]
        S = np.zeros(nx)
        for m in range(n_steps):
            S = steppers[i].step_array(S + 0.5 * dt * fvals[m, i], m) + 0.5 * dt * fvals[m + 1, i]
            out[m + 1] = free[m + 1, i] + S
        return out

    per_layer = parallel_map(run, range(n), threads)
    return np.stack(per_layer, axis=1)


@dataclass
class PicardResult:
    trajectory: SolutionTrajectory
    window: ContractionParams
    iterations: int
    defects: list[float]
    ratios: list[float]
    final_defect: float
    converged: bool
    sup_h2_per_iteration: list[float] = field(default_factory=list)
    free_distance_per_iteration: list[float] = field(default_factory=list)
    t0: float = 0.0

    @property
    def in_contraction_set(self) -> bool:
        w = self.window
        return (
            max(self.sup_h2_per_iteration, default=0.0) <= w.R * (1.0 + 1e-9)
            and max(self.free_distance_per_iteration, default=0.0) <= w.M * (1.0 + 1e-9)
        )


def _vec_l2_diff(A: np.ndarray, B: np.ndarray, dx: float) -> float:
    diff = A - B
    sq = dx * np.einsum("tix,tix->ti", diff, diff)
    return float(np.sqrt(np.max(sq)))


def picard_solve(
    ctx: ReactionContext,
    phi: Sequence[GridFunction],
    window: ContractionParams,
    config: SolverConfig,
    t0: float = 0.0,
    source: SourceFn | None = None,
    steppers: Sequence[EvolutionStepper] | None = None,
    initial_guess: str = "free",
) -> PicardResult:
    """Fixed-point iteration on one contraction window [t0, t0 + T'].

    The start iterate is the free evolution U(t, t0) phi (or the frozen state
    when ``initial_guess='frozen'``); iteration stops when the sup-in-time
    product L2 distance between sweeps drops below config.tol.
    """
    dt = config.dt
    n_steps = int(math.floor(window.T_prime / dt + 1e-12))
    if n_steps < 1:
        raise InfeasibleWindow(
            f"window T'={window.T_prime:.6g} is shorter than one step dt={dt}; reduce dt"
        )
    phi_arr = _as_state_array(ctx, phi)
    if source is None:
        source = ctx.eval_arrays
    if steppers is None:
        steppers = build_steppers(ctx, dt, config.theta, t0=t0)
    free = _free_evolution(steppers, phi_arr, n_steps, config.threads)
    if initial_guess == "free":
        U = free.copy()
    elif initial_guess == "frozen":
        U = np.broadcast_to(phi_arr, free.shape).copy()
    else:
        raise ValueError(f"unknown initial guess {initial_guess!r}")

    dx = ctx.grid.dx
    defects: list[float] = []
    ratios: list[float] = []
    sup_h2: list[float] = []
    free_dist: list[float] = []
    converged = False
    iterations = 0
    for _ in range(config.max_iter):
        Unew = picard_sweep(steppers, source, free, U, dt, t0, config.threads)
        iterations += 1
        defect = _vec_l2_diff(Unew, U, dx)
        defects.append(defect)
        if len(defects) >= 2 and defects[-2] > 0.0:
            ratios.append(defects[-1] / defects[-2])
        nt, n, _ = Unew.shape
        sup_h2.append(max(h2_array(Unew[m, i], dx) for m in range(nt) for i in range(n)))
        free_dist.append(_vec_l2_diff(Unew, free, dx))
        U = Unew
        if defect < config.tol:
            converged = True
            break
    if not converged and ratios and ratios[-1] >= 1.0:
        raise NoConvergence(
            f"Picard iteration failed to contract: last ratio {ratios[-1]:.3g} >= 1 "
            f"after {iterations} sweeps (window too large or hypotheses breached)"
        )
    times = t0 + dt * np.arange(n_steps + 1)
    traj = SolutionTrajectory.from_states(
        ctx.grid, times, U, iterations=iterations,
        contraction_ratio=ratios[-1] if ratios else math.nan,
    )
    return PicardResult(
        trajectory=traj,
        window=window,
        iterations=iterations,
        defects=defects,
        ratios=ratios,
        final_defect=defects[-1] if defects else 0.0,
        converged=converged,
        sup_h2_per_iteration=sup_h2,
        free_distance_per_iteration=free_dist,
        t0=t0,
    )


def mol_solve(
    ctx: ReactionContext,
    phi: Sequence[GridFunction],
    horizon: float,
    config: SolverConfig,
    t0: float = 0.0,
    source: SourceFn | None = None,
    steppers: Sequence[EvolutionStepper] | None = None,
) -> SolutionTrajectory:
    """Method-of-lines oracle: implicit linear part, explicit source.

    The source uses a two-step Adams-Bashforth combination (plain Euler on
    the first step), which keeps the path second order with theta = 1/2 while
    never solving an implicit reaction system.
    """
    dt = config.dt
    n_steps = int(round(horizon / dt))
    if n_steps < 1:
        raise ValueError("horizon shorter than one step")
    phi_arr = _as_state_array(ctx, phi)
    if source is None:
        source = ctx.eval_arrays
    if steppers is None:
        steppers = build_steppers(ctx, dt, config.theta, t0=t0)
    n, nx = phi_arr.shape
    out = np.empty((n_steps + 1, n, nx))
    out[0] = phi_arr
    f_prev = source(t0, phi_arr)
    u = phi_arr
    for m in range(n_steps):
        if m == 0:
            f_eff = f_prev
        else:
            f_m = source(t0 + m * dt, u)
            f_eff = 1.5 * f_m - 0.5 * f_prev
            f_prev = f_m
        nxt = np.empty_like(u)
        for i in range(n):
            nxt[i] = steppers[i].step_array(u[i], m, source=f_eff[i])
        u = nxt
        out[m + 1] = u
    times = t0 + dt * np.arange(n_steps + 1)
    return SolutionTrajectory.from_states(ctx.grid, times, out)


# ---------------------------------------------------------------------------
# Windowed global continuation
# ---------------------------------------------------------------------------

@dataclass
class WindowRecord:
    index: int
    t_start: float
    params: ContractionParams
    n_steps: int
    iterations: int
    final_defect: float
    converged: bool

    def to_dict(self) -> dict:
        return {
            "index": self.index,
            "t_start": self.t_start,
            "n_steps": self.n_steps,
            "iterations": self.iterations,
            "final_defect": self.final_defect,
            "converged": self.converged,
            "params": self.params.to_dict(),
        }


@dataclass
class GlobalResult:
    trajectory: SolutionTrajectory
    windows: list[WindowRecord]
    beta: float
    beta_tilde: float
    mu_monitor: float
    gronwall_bound: np.ndarray
    psi: np.ndarray


def open_window(
    ctx: ReactionContext,
    beta: float,
    beta_tilde: float,
    rho: float,
    config: SolverConfig,
    *,
    M: float | None = None,
    R: float | None = None,
    T: float | None = None,
    horizon_for_constants: float | None = None,
) -> ContractionParams:
    """Assemble the constants for one window and compute T'.

    kappa and mu are measured on the enlarged ball of radius R, since the
    iterates are only known to stay H2-bounded by R.
    """
    if M is None:
        M = 2.0 * rho
    T_cap = math.log(M / rho) / beta if beta > 0.0 else math.inf
    T_eff = T if T is not None else (T_cap if math.isfinite(T_cap) else config.default_T)
    if beta > 0.0 and R is None:
        R_eff = DEFAULT_R_HEADROOM * rho * (M / rho) ** (beta_tilde / beta)
    elif R is None:
        R_eff = DEFAULT_R_HEADROOM * rho * math.exp(beta_tilde * T_eff)
    else:
        R_eff = R
    h = horizon_for_constants if horizon_for_constants is not None else T_eff
    kappa = lipschitz_estimate(ctx, horizon=h, rho=R_eff)
    mu = source_h2_bound(ctx.with_rho(R_eff), horizon=h, seed=config.seed)
    return compute_window(
        beta=beta, beta_tilde=beta_tilde, mu=mu, kappa=kappa, rho=rho,
        M=M, R=R_eff, T=T, default_T=config.default_T,
    )


def measure_beta_tilde(
    ctx: ReactionContext,
    config: SolverConfig,
    horizon: float,
    t0: float = 0.0,
    steppers: Sequence[EvolutionStepper] | None = None,
) -> float:
    """Empirical H2 growth rate of the propagators over a decaying probe family."""
    if steppers is None:
        steppers = build_steppers(ctx, config.dt, config.theta, t0=t0)
    family = decaying_probes(ctx.grid, seed=config.seed)
    return max(measure_h2_growth(s, family, horizon) for s in steppers)


def global_solve(
    ctx: ReactionContext,
    phi: Sequence[GridFunction],
    config: SolverConfig,
    horizon: float | None = None,
    max_windows: int | None = None,
    beta: float | None = None,
    beta_tilde: float | None = None,
    rho_floor: float | None = None,
    T_override: float | None = None,
    fixed_schedule: Sequence[ContractionParams] | None = None,
    source: SourceFn | None = None,
) -> GlobalResult:
    """Windowed continuation: Picard on [t_k, t_k + T'_k], restart from the terminal state.

    The ball radius is re-derived per window as max(H2 norm of the window
    start state, initial radius); the exponential L2 monitor uses the
    original initial data and the running max of the per-window source
    bounds, and any breach raises BoundViolated.
    """
    if horizon is None and max_windows is None:
        raise ValueError("need a horizon or a window count")
    dt = config.dt
    phi_arr_gf = list(phi)
    if beta is None or beta_tilde is None:
        raise ValueError("global_solve needs the accretivity constants (run validation first)")

    l2_0 = max(l2_array(p.values, ctx.grid.dx) for p in phi_arr_gf)
    h2_0 = max(h2_array(p.values, ctx.grid.dx) for p in phi_arr_gf)
    rho0 = max(h2_0, rho_floor if rho_floor is not None else RHO_FLOOR)

    windows: list[WindowRecord] = []
    trajectory: SolutionTrajectory | None = None
    mu_monitor = 0.0
    t_start = 0.0
    current = phi_arr_gf

    while True:
        if max_windows is not None and len(windows) >= max_windows:
            break
        if horizon is not None and t_start >= horizon - 0.5 * dt:
            break
        rho_w = max(
            max(h2_array(p.values, ctx.grid.dx) for p in current),
            rho0,
        )
        try:
            if fixed_schedule is not None:
                params = fixed_schedule[len(windows)]
            else:
                params = open_window(
                    ctx, beta, beta_tilde, rho_w, config, T=T_override,
                )
        except InfeasibleWindow as exc:
            raise WindowInfeasible(
                f"window {len(windows)} at t={t_start:.6g} infeasible: {exc}"
            ) from exc
        t_len = params.T_prime
        if horizon is not None:
            t_len = min(t_len, horizon - t_start)
        n_steps = int(math.floor(t_len / dt + 1e-12))
        if n_steps < 1:
            break
        clipped = ContractionParams(
            rho=params.rho, M=params.M, R=params.R, T=params.T,
            T_prime=n_steps * dt, beta=params.beta, beta_tilde=params.beta_tilde,
            mu=params.mu, kappa=params.kappa, terms=params.terms,
            contraction_bound=n_steps * dt * params.kappa * math.exp(params.beta * params.T),
        )
        result = picard_solve(ctx, current, clipped, config, t0=t_start, source=source)
        mu_monitor = max(mu_monitor, params.mu)
        windows.append(WindowRecord(
            index=len(windows), t_start=t_start, params=clipped,
            n_steps=n_steps, iterations=result.iterations,
            final_defect=result.final_defect, converged=result.converged,
        ))
        trajectory = result.trajectory if trajectory is None else trajectory.concat(result.trajectory)

        # Exponential a-priori monitors on the newly recorded times.
        rate = beta + mu_monitor
        tail = result.trajectory
        bounds = l2_0 * np.exp(rate * tail.times)
        if np.any(tail.l2 > bounds * (1.0 + MONITOR_SLACK)):
            k = int(np.argmax(tail.l2 - bounds))
            raise BoundViolated(
                f"L2 monitor breached at t={tail.times[k]:.6g}: "
                f"norm {tail.l2[k]:.6g} > bound {bounds[k]:.6g}"
            )
        if not np.all(np.isfinite(tail.h2)):
            raise BoundViolated("H2 monitor found a non-finite norm")

        current = result.trajectory.state(len(result.trajectory.times) - 1)
        t_start = float(result.trajectory.times[-1])

    if trajectory is None:
        raise WindowInfeasible("no window could be opened before the stop condition")
    gronwall_bound = l2_0 * np.exp((beta + mu_monitor) * trajectory.times)
    psi = trajectory.h2 / h2_0 if h2_0 > 0.0 else np.full_like(trajectory.h2, math.nan)
    return GlobalResult(
        trajectory=trajectory,
        windows=windows,
        beta=beta,
        beta_tilde=beta_tilde,
        mu_monitor=mu_monitor,
        gronwall_bound=gronwall_bound,
        psi=psi,
    )
