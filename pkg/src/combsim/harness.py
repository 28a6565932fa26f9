"""Orchestration shared by the CLI and the verification suite.

``validate_full`` runs the hypothesis checks and, when they pass, completes
the report with the measured constants (beta_tilde from the propagators,
kappa and mu on the default enlarged ball) and the resulting contraction
window, so every rendered number comes from one code path.
"""
from __future__ import annotations

from dataclasses import dataclass

from .errors import InfeasibleWindow
from .grid import GridFunction
from .model import HypothesisReport, validate_hypotheses
from .reaction import ReactionContext
from .scenario import Scenario, build_context
from .solver import (
    ContractionParams,
    SolverConfig,
    global_solve,
    measure_beta_tilde,
    mol_solve,
    open_window,
    picard_solve,
)

__all__ = ["ValidationBundle", "validate_full", "solve_scenario"]


@dataclass
class ValidationBundle:
    scenario: Scenario
    config: SolverConfig
    ctx: ReactionContext
    phi: list[GridFunction]
    report: HypothesisReport
    window: ContractionParams | None
    window_error: str | None


def validate_full(
    scn: Scenario,
    config: SolverConfig | None = None,
    horizon: float | None = None,
) -> ValidationBundle:
    config = config if config is not None else scn.solver_config()
    horizon = horizon if horizon is not None else config.horizon
    ctx, phi = build_context(scn)
    times = ctx.fuel.sample_times(horizon, config.dt)
    report = validate_hypotheses(ctx.layers, ctx.fuel, ctx.grid, horizon, times=times)
    report.rho = ctx.rho
    window = None
    window_error = None
    if report.passed:
        overrides = scn.window_overrides()
        beta_tilde = measure_beta_tilde(ctx, config, min(horizon, 1.0))
        report.beta_tilde = beta_tilde
        try:
            window = open_window(
                ctx, report.beta, beta_tilde, ctx.rho, config,
                M=overrides.get("M"), R=overrides.get("R"), T=overrides.get("T"),
            )
            report.kappa = window.kappa
            report.mu_source = window.mu
        except InfeasibleWindow as exc:
            window_error = str(exc)
    return ValidationBundle(
        scenario=scn, config=config, ctx=ctx, phi=phi,
        report=report, window=window, window_error=window_error,
    )


def solve_scenario(
    bundle: ValidationBundle,
    method: str,
    horizon: float | None = None,
):
    """Dispatch one solve; returns (trajectory, extras dict)."""
    config = bundle.config
    horizon = horizon if horizon is not None else config.horizon
    if method == "picard":
        if bundle.window is None:
            raise InfeasibleWindow(bundle.window_error or "no contraction window available")
        result = picard_solve(bundle.ctx, bundle.phi, bundle.window, config)
        return result.trajectory, {
            "picard": {
                "iterations": result.iterations,
                "defects": result.defects,
                "ratios": result.ratios,
                "converged": result.converged,
                "contraction_bound": bundle.window.contraction_bound,
            },
            "window": bundle.window.to_dict(),
        }
    if method == "mol":
        traj = mol_solve(bundle.ctx, bundle.phi, horizon, config)
        return traj, {}
    if method == "global":
        result = global_solve(
            bundle.ctx, bundle.phi, config, horizon=horizon,
            beta=bundle.report.beta, beta_tilde=bundle.report.beta_tilde,
            T_override=bundle.scenario.window_overrides().get("T"),
        )
        return result.trajectory, {
            "windows": [w.to_dict() for w in result.windows],
            "mu_monitor": result.mu_monitor,
            "gronwall_bound": result.gronwall_bound,
            "psi": result.psi,
            "global_result": result,
        }
    raise ValueError(f"unknown method {method!r}")
