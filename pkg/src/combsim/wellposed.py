"""Continuous-dependence experiments: perturb data or parameters, measure response.

For a validated scenario the solution map is probed along a fixed direction
with a decreasing sequence of amplitudes.  Reports carry, per epsilon, the
input distance (H2 of the perturbation), the output distance (sup-in-time
product H2 of the solution difference), the discrete time-derivative
distance (sup-in-time product L2), and their ratio; the fitted constant is
the max ratio.  Zero-amplitude control rows must come out exactly zero, which
doubles as a determinism check of the whole pipeline.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import HypothesisViolatedByPerturbation, ScenarioError
from .expressions import parse_expression, scale_spec
from .grid import GridFunction, d1_array, d2_array, h2_array, l2_array
from .model import compute_alpha_beta, validate_hypotheses
from .probes import decaying_probes
from .scenario import Scenario, build_context, perturb_scenario
from .solver import SolverConfig, SolutionTrajectory, global_solve, mol_solve

__all__ = [
    "PerturbationPlan",
    "EpsilonRow",
    "DependenceReport",
    "perturb_initial",
    "perturb_parameters",
    "operator_convergence_check",
]

PERTURB_TARGETS = ("initial_data", "a", "b", "c_x", "d", "lambda", "y")

# Library of default perturbation directions, comparable across scenarios.
DIRECTION_LIBRARY = {
    "gauss_bump": {"type": "gauss", "center": 0.0, "width": 1.5, "amp": 1.0},
    "tanh_ramp": {"type": "tanh_ramp", "center": 0.0, "width": 2.0, "lo": 0.0, "hi": 1.0},
    "low_sine": [
        {"type": "gauss", "center": 0.0, "width": 3.0, "amp": 1.0},
        {"type": "sine", "freq": 0.5, "amp": 0.2, "phase": 0.0},
    ],
}


@dataclass(frozen=True)
class PerturbationPlan:
    """What to perturb, along which direction, and how strongly."""

    target: str
    direction: object  # expression spec (dict / list / number) or library name
    epsilons: tuple[float, ...]
    layer: object = "all"  # layer index or "all"
    driver: str = "mol"
    include_zero_control: bool = True

    def __post_init__(self) -> None:
        if self.target not in PERTURB_TARGETS:
            raise ScenarioError(
                f"plan target {self.target!r} not in {PERTURB_TARGETS}"
            )
        eps = tuple(float(e) for e in self.epsilons)
        if not eps or any(e <= 0.0 for e in eps):
            raise ScenarioError("plan epsilons must be positive")
        if any(b >= a for a, b in zip(eps, eps[1:])):
            raise ScenarioError("plan epsilons must be strictly decreasing")
        if self.driver not in ("mol", "picard"):
            raise ScenarioError(f"plan driver must be 'mol' or 'picard', got {self.driver!r}")
        object.__setattr__(self, "epsilons", eps)

    def direction_spec(self):
        if isinstance(self.direction, str):
            try:
                return DIRECTION_LIBRARY[self.direction]
            except KeyError:
                raise ScenarioError(
                    f"unknown direction {self.direction!r}; library has {sorted(DIRECTION_LIBRARY)}"
                ) from None
        return self.direction

    @classmethod
    def from_dict(cls, data: dict, origin: str = "<plan>") -> "PerturbationPlan":
        if not isinstance(data, dict):
            raise ScenarioError(f"{origin}: plan must be a mapping")
        unknown = set(data) - {"target", "direction", "epsilons", "layer", "driver",
                               "include_zero_control"}
        if unknown:
            raise ScenarioError(f"{origin}: unknown plan keys {sorted(unknown)}")
        try:
            return cls(
                target=data["target"],
                direction=data.get("direction", "gauss_bump"),
                epsilons=tuple(data["epsilons"]),
                layer=data.get("layer", "all"),
                driver=data.get("driver", "mol"),
                include_zero_control=bool(data.get("include_zero_control", True)),
            )
        except KeyError as exc:
            raise ScenarioError(f"{origin}: missing plan key {exc}") from exc


@dataclass
class EpsilonRow:
    epsilon: float
    input_distance: float
    output_distance: float
    time_derivative_distance: float
    ratio: float

    def to_dict(self) -> dict:
        return {
            "epsilon": self.epsilon,
            "input_distance": self.input_distance,
            "output_distance": self.output_distance,
            "time_derivative_distance": self.time_derivative_distance,
            "ratio": self.ratio,
        }


@dataclass
class DependenceReport:
    target: str
    layer: object
    driver: str
    rows: list[EpsilonRow]
    fitted_kappa_tilde: float
    ratio_spread: float
    base_norm: float
    verdict: bool
    notes: str = ""
    extra: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "target": self.target,
            "layer": self.layer,
            "driver": self.driver,
            "rows": [r.to_dict() for r in self.rows],
            "fitted_kappa_tilde": self.fitted_kappa_tilde,
            "ratio_spread": self.ratio_spread,
            "base_norm": self.base_norm,
            "verdict": self.verdict,
            "notes": self.notes,
            "extra": self.extra,
        }


def _traj_h2_distance(a: SolutionTrajectory, b: SolutionTrajectory) -> float:
    if a.states.shape != b.states.shape:
        raise ValueError("trajectories were not run on identical discretizations")
    dx = a.grid.dx
    nt, n, _ = a.states.shape
    return max(
        h2_array(a.states[m, i] - b.states[m, i], dx) for m in range(nt) for i in range(n)
    )


def _traj_dt_distance(a: SolutionTrajectory, b: SolutionTrajectory) -> float:
    """Sup-in-time product L2 distance of the discrete time derivatives."""
    dx = a.grid.dx
    dts = np.diff(a.times)
    da = np.diff(a.states, axis=0) / dts[:, None, None]
    db = np.diff(b.states, axis=0) / dts[:, None, None]
    nt, n, _ = da.shape
    return max(
        l2_array(da[m, i] - db[m, i], dx) for m in range(nt) for i in range(n)
    )


class _Driver:
    """Runs base and perturbed problems on one shared discretization."""

    def __init__(self, scn: Scenario, plan: PerturbationPlan, horizon: float | None,
                 config: SolverConfig | None):
        self.scn = scn
        self.plan = plan
        self.config = config if config is not None else scn.solver_config()
        self.horizon = horizon if horizon is not None else self.config.horizon
        self._schedule = None
        self._constants = None

    def _global_constants(self, ctx):
        if self._constants is None:
            from .solver import measure_beta_tilde

            report = validate_hypotheses(
                ctx.layers, ctx.fuel, ctx.grid, self.horizon,
                times=ctx.fuel.sample_times(self.horizon, self.config.dt),
            )
            if not report.passed:
                clauses = "; ".join(v.clause for v in report.violations)
                raise HypothesisViolatedByPerturbation(
                    f"base scenario fails validation: {clauses}"
                )
            beta_tilde = measure_beta_tilde(ctx, self.config, min(self.horizon, 1.0))
            self._constants = (report.beta, beta_tilde)
        return self._constants

    def run(self, ctx, phi) -> SolutionTrajectory:
        if self.plan.driver == "mol":
            return mol_solve(ctx, phi, self.horizon, self.config)
        beta, beta_tilde = self._global_constants(ctx)
        result = global_solve(
            ctx, phi, self.config, horizon=self.horizon,
            beta=beta, beta_tilde=beta_tilde,
            fixed_schedule=self._schedule,
            max_windows=len(self._schedule) if self._schedule is not None else None,
        )
        if self._schedule is None:
            # Freeze the base windows so perturbed runs share the discretization.
            self._schedule = [w.params for w in result.windows]
        return result.trajectory


def _unit_direction(scn: Scenario, spec, normalize_derivative: bool = False):
    """Scale a direction spec to unit H2 norm (of its derivative for c_x)."""
    grid = scn.grid()
    expr = parse_expression(spec, where="plan.direction")
    if expr.time_dependent():
        raise ScenarioError("plan.direction must not depend on time")
    x = grid.nodes()
    probe = expr.dx()(x, 0.0) if normalize_derivative else expr(x, 0.0)
    norm = h2_array(probe, grid.dx)
    if norm == 0.0:
        raise ScenarioError("plan.direction has zero norm")
    return scale_spec(spec, 1.0 / norm), expr.scaled(1.0 / norm)


def perturb_initial(
    scn: Scenario,
    plan: PerturbationPlan,
    horizon: float | None = None,
    config: SolverConfig | None = None,
) -> DependenceReport:
    """Response of the solution to initial-data perturbations along one direction."""
    if plan.target != "initial_data":
        raise ScenarioError("perturb_initial needs a plan with target 'initial_data'")
    _, unit_expr = _unit_direction(scn, plan.direction_spec())
    ctx, phi = build_context(scn)
    grid = ctx.grid
    direction = GridFunction(grid, unit_expr(grid.nodes(), 0.0))

    eps_max = max(plan.epsilons)
    ctx = ctx.with_rho(ctx.rho + eps_max)  # enlarge the ball so phi + eps*d stays inside

    driver = _Driver(scn, plan, horizon, config)
    base = driver.run(ctx, phi)

    layers = range(ctx.n) if plan.layer == "all" else [int(plan.layer)]
    epsilons = ((0.0,) if plan.include_zero_control else ()) + plan.epsilons
    rows: list[EpsilonRow] = []
    for eps in epsilons:
        phi_eps = [
            GridFunction(grid, phi[i].values + (eps * direction.values if i in layers else 0.0))
            for i in range(ctx.n)
        ]
        traj = driver.run(ctx, phi_eps)
        out = _traj_h2_distance(traj, base)
        dt_dist = _traj_dt_distance(traj, base)
        rows.append(EpsilonRow(
            epsilon=eps,
            input_distance=eps,
            output_distance=out,
            time_derivative_distance=dt_dist,
            ratio=out / eps if eps > 0.0 else math.nan,
        ))
    ratios = [r.ratio for r in rows if r.epsilon > 0.0]
    kappa_tilde = max(ratios)
    spread = (max(ratios) - min(ratios)) / min(ratios) if min(ratios) > 0.0 else math.inf
    control_ok = all(r.output_distance == 0.0 for r in rows if r.epsilon == 0.0)
    return DependenceReport(
        target=plan.target,
        layer=plan.layer,
        driver=plan.driver,
        rows=rows,
        fitted_kappa_tilde=kappa_tilde,
        ratio_spread=spread,
        base_norm=float(np.max(base.h2)),
        verdict=control_ok and spread <= 0.2,
        notes="ratio_spread is (max-min)/min over the positive epsilons",
    )


def perturb_parameters(
    scn: Scenario,
    plan: PerturbationPlan,
    horizon: float | None = None,
    config: SolverConfig | None = None,
) -> DependenceReport:
    """Response of the solution to perturbations of a coefficient field or the fuel."""
    if plan.target == "initial_data":
        raise ScenarioError("perturb_parameters needs a parameter target")
    unit_spec, _ = _unit_direction(
        scn, plan.direction_spec(), normalize_derivative=(plan.target == "c_x")
    )
    ctx, phi = build_context(scn)
    driver = _Driver(scn, plan, horizon, config)
    base = driver.run(ctx, phi)
    cfg = driver.config

    epsilons = ((0.0,) if plan.include_zero_control else ()) + plan.epsilons
    rows: list[EpsilonRow] = []
    for eps in epsilons:
        if eps == 0.0:
            pscn = scn
        else:
            pscn = perturb_scenario(scn, plan.target, plan.layer, scale_spec(unit_spec, eps))
        pctx, pphi = build_context(pscn, rho=ctx.rho)
        report = validate_hypotheses(
            pctx.layers, pctx.fuel, pctx.grid, driver.horizon,
            times=pctx.fuel.sample_times(driver.horizon, cfg.dt),
        )
        if not report.passed:
            clauses = "; ".join(f"{v.clause} ({v.detail})" for v in report.violations)
            raise HypothesisViolatedByPerturbation(
                f"perturbation eps={eps:g} of {plan.target} violates: {clauses}"
            )
        traj = driver.run(pctx, pphi)
        out = _traj_h2_distance(traj, base)
        dt_dist = _traj_dt_distance(traj, base)
        rows.append(EpsilonRow(
            epsilon=eps,
            input_distance=eps,
            output_distance=out,
            time_derivative_distance=dt_dist,
            ratio=out / eps if eps > 0.0 else math.nan,
        ))
    ratios = [r.ratio for r in rows if r.epsilon > 0.0]
    positive = [r for r in rows if r.epsilon > 0.0]
    decreasing = all(
        a.output_distance >= b.output_distance * (1.0 - 1e-9)
        for a, b in zip(positive, positive[1:])
    )
    base_norm = float(np.max(base.h2))
    smallest_rel = positive[-1].output_distance / base_norm if base_norm > 0 else math.inf
    control_ok = all(r.output_distance == 0.0 for r in rows if r.epsilon == 0.0)
    return DependenceReport(
        target=plan.target,
        layer=plan.layer,
        driver=plan.driver,
        rows=rows,
        fitted_kappa_tilde=max(ratios),
        ratio_spread=(max(ratios) - min(ratios)) / min(ratios) if min(ratios) > 0 else math.inf,
        base_norm=base_norm,
        verdict=control_ok and decreasing and smallest_rel < 1e-3,
        notes="verdict: zero control exact, distances decreasing, smallest below 1e-3 of base norm",
        extra={"smallest_relative_distance": smallest_rel},
    )


def operator_convergence_check(
    scn: Scenario,
    plan: PerturbationPlan,
    times: Sequence[float] = (0.0,),
    n_probes: int = 6,
) -> list[dict]:
    """Measured operator distance versus the coefficient-difference bound, per epsilon.

    For unit-H2 probes psi the defect (A_pert - A) psi = -(d_alpha) psi'' +
    (d_beta) psi' is measured in L2 and checked against
    sup|d_alpha| * ||psi''|| + sup|d_beta| * ||psi'||, the triangle-inequality
    line of the operator-convergence argument (see README on why the squared
    variant is not asserted).
    """
    if plan.target in ("initial_data", "d"):
        raise ScenarioError(f"target {plan.target!r} does not move the operator coefficients")
    unit_spec, _ = _unit_direction(
        scn, plan.direction_spec(), normalize_derivative=(plan.target == "c_x")
    )
    ctx, _ = build_context(scn)
    grid = ctx.grid
    probes = decaying_probes(grid, seed=0, count=n_probes)
    # A wide ramp behaves as a pure-gradient probe isolating the beta term.
    ramp = parse_expression(
        {"type": "tanh_ramp", "center": 0.0, "width": 0.35 * (grid.x_max - grid.x_min),
         "lo": 0.0, "hi": 1.0}, where="probe",
    )
    ramp_vals = ramp(grid.nodes(), 0.0)
    ramp_norm = h2_array(ramp_vals, grid.dx)
    probes = list(probes) + [GridFunction(grid, ramp_vals / ramp_norm)]

    rows = []
    for eps in plan.epsilons:
        pscn = perturb_scenario(scn, plan.target, plan.layer, scale_spec(unit_spec, eps))
        pctx, _ = build_context(pscn, rho=ctx.rho)
        measured_max = 0.0
        margin_min = math.inf
        da_sup = db_sup = 0.0
        for t in times:
            for i in range(ctx.n):
                a0, b0 = compute_alpha_beta(ctx.layers[i], ctx.fuel, i, t)
                a1, b1 = compute_alpha_beta(pctx.layers[i], pctx.fuel, i, t)
                d_alpha = a1.values - a0.values
                d_beta = b1.values - b0.values
                da = float(np.max(np.abs(d_alpha)))
                db = float(np.max(np.abs(d_beta)))
                da_sup = max(da_sup, da)
                db_sup = max(db_sup, db)
                for psi in probes:
                    p1 = d1_array(psi.values, grid.dx)
                    p2 = d2_array(psi.values, grid.dx)
                    measured = l2_array(-d_alpha * p2 + d_beta * p1, grid.dx)
                    bound = da * l2_array(p2, grid.dx) + db * l2_array(p1, grid.dx)
                    measured_max = max(measured_max, measured)
                    margin_min = min(margin_min, bound - measured)
        rows.append({
            "epsilon": eps,
            "measured": measured_max,
            "min_margin": margin_min,
            "bound_ok": margin_min >= -1e-12,
            "delta_alpha_sup": da_sup,
            "delta_beta_sup": db_sup,
        })
    return rows
