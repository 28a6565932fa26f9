"""Per-layer physical fields, PDE coefficients, and hypothesis validation.

A layer carries the spatial fields a, b, c, d, lambda (with analytic
derivatives), the reaction constants, and its share of the interlayer
couplings.  From those and the fuel concentration y_i(x, t) the module builds
the operator coefficients

    alpha_i = lambda_i / (a_i + b_i y_i),    beta_i = c_i / (a_i + b_i y_i),

checks the structural hypotheses on the data, and extracts every constant the
verification harness needs: the parabolicity window [mu0, mu1], the per-layer
accretivity constant, and the bulk sup-norm constants R_i / R_tilde.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import DenominatorTooSmall
from .expressions import Expr
from .grid import GridFunction, GridSpec, l2_array

__all__ = [
    "CoefficientField",
    "LayerParams",
    "FuelSample",
    "FuelConcentration",
    "Violation",
    "HypothesisReport",
    "compute_alpha_beta",
    "alpha_beta_derivatives",
    "accretivity_constant",
    "layer_accretivity",
    "r_constants",
    "validate_hypotheses",
]

ALPHA_BOUND_SLACK = 1e-12


@dataclass(frozen=True)
class CoefficientField:
    """A spatial field together with its analytic derivatives.

    ``d3`` is only populated for the convection field c, which needs three
    derivatives.  ``source`` records whether derivatives came from the
    expression vocabulary ("analytic") or from grid stencils ("stencil").
    """

    value: GridFunction
    d1: GridFunction
    d2: GridFunction
    d3: GridFunction | None = None
    source: str = "analytic"

    @classmethod
    def from_expression(cls, expr: Expr, grid: GridSpec, orders: int = 2, t: float = 0.0) -> "CoefficientField":
        x = grid.nodes()
        e1 = expr.dx()
        e2 = e1.dx()
        d3 = None
        if orders >= 3:
            d3 = GridFunction(grid, e2.dx()(x, t))
        return cls(
            value=GridFunction(grid, expr(x, t)),
            d1=GridFunction(grid, e1(x, t)),
            d2=GridFunction(grid, e2(x, t)),
            d3=d3,
            source="analytic",
        )

    def sup(self, order: int = 0) -> float:
        gf = {0: self.value, 1: self.d1, 2: self.d2, 3: self.d3}[order]
        if gf is None:
            raise ValueError(f"derivative order {order} not stored")
        return float(np.max(np.abs(gf.values)))


@dataclass(frozen=True)
class LayerParams:
    """Physical data of one layer.

    ``q_left``/``q_right`` are the interlayer heat-exchange coefficients with
    the previous/next layer (zero on the outer side of boundary layers), and
    ``qbar`` is the heat loss to the environment (nonzero only for the first
    and last layer).
    """

    a: CoefficientField
    b: CoefficientField
    c: CoefficientField
    d: CoefficientField
    lam: CoefficientField
    K: float
    q_left: float
    q_right: float
    qbar: float
    E: float
    u_e: float


@dataclass(frozen=True)
class FuelSample:
    """Fuel concentration of one layer at one time, with analytic derivatives."""

    y: GridFunction
    y_x: GridFunction
    y_xx: GridFunction
    y_t: GridFunction
    y_tx: GridFunction
    y_txx: GridFunction


class FuelConcentration:
    """Known fuel concentration fields y_i(x, t), expression-backed.

    Samples are cached per (layer, t); static fuels collapse the cache to a
    single entry per layer.
    """

    def __init__(self, exprs: Sequence[Expr], grid: GridSpec):
        self.grid = grid
        self._exprs = list(exprs)
        self._families = []
        for e in self._exprs:
            ex = e.dx()
            et = e.dt()
            etx = et.dx()
            self._families.append((e, ex, ex.dx(), et, etx, etx.dx()))
        self.time_dependent = any(e.time_dependent() for e in self._exprs)
        self._cache: dict[tuple[int, float], FuelSample] = {}

    @property
    def n_layers(self) -> int:
        return len(self._exprs)

    def expression(self, layer: int) -> Expr:
        return self._exprs[layer]

    def sample(self, layer: int, t: float) -> FuelSample:
        key = (layer, t if self.time_dependent else 0.0)
        hit = self._cache.get(key)
        if hit is not None:
            return hit
        x = self.grid.nodes()
        fns = self._families[layer]
        gfs = [GridFunction(self.grid, fn(x, key[1])) for fn in fns]
        out = FuelSample(*gfs)
        self._cache[key] = out
        return out

    def sample_times(self, horizon: float, dt: float | None = None, max_samples: int = 2048) -> np.ndarray:
        """Times used by the discrete hypothesis checks: the step grid, capped."""
        if not self.time_dependent:
            return np.array([0.0])
        if dt is not None and dt > 0:
            n = int(round(horizon / dt))
            if n + 1 <= max_samples:
                return np.arange(n + 1) * dt
        return np.linspace(0.0, horizon, max_samples)


@dataclass(frozen=True)
class Violation:
    clause: str
    layer: int | None
    detail: str


@dataclass
class HypothesisReport:
    """Constants extracted from the structural checks, plus the verdict.

    ``kappa``, ``mu_source``, ``rho`` and ``beta_tilde`` are measured by the
    reaction and evolution stages and filled in by the harness pipeline; they
    stay None straight out of :func:`validate_hypotheses`.
    """

    k1: float
    k2: float
    k3: float
    mu0: float | None
    mu1: float | None
    beta_per_layer: list[float]
    beta: float
    R_per_layer: list[float]
    R_tilde: float
    g_bounds: tuple[float, float, float]
    passed: bool
    violations: list[Violation]
    horizon: float
    n_time_samples: int
    derivative_source: str = "analytic"
    kappa: float | None = None
    mu_source: float | None = None
    rho: float | None = None
    beta_tilde: float | None = None
    field_sups: list[dict] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "k1": self.k1,
            "k2": self.k2,
            "k3": self.k3,
            "mu0": self.mu0,
            "mu1": self.mu1,
            "beta_per_layer": list(self.beta_per_layer),
            "beta": self.beta,
            "R_per_layer": list(self.R_per_layer),
            "R_tilde": self.R_tilde,
            "g_bounds": list(self.g_bounds),
            "passed": self.passed,
            "violations": [
                {"clause": v.clause, "layer": v.layer, "detail": v.detail}
                for v in self.violations
            ],
            "horizon": self.horizon,
            "n_time_samples": self.n_time_samples,
            "derivative_source": self.derivative_source,
            "kappa": self.kappa,
            "mu_source": self.mu_source,
            "rho": self.rho,
            "beta_tilde": self.beta_tilde,
            "field_sups": self.field_sups,
        }


def _denominator(params: LayerParams, ys: FuelSample) -> np.ndarray:
    den = params.a.value.values + params.b.value.values * ys.y.values
    k1_local = min(float(np.min(params.a.value.values)), float(np.min(params.lam.value.values)))
    floor = 0.5 * k1_local if k1_local > 0 else 0.0
    dmin = float(np.min(den))
    if dmin < floor or dmin <= 0.0:
        raise DenominatorTooSmall(
            f"a + b*y reached {dmin:.3e} (lower bound {k1_local:.3e}); inputs look corrupted"
        )
    return den


def compute_alpha_beta(
    params: LayerParams, fuel: FuelConcentration, layer: int, t: float
) -> tuple[GridFunction, GridFunction]:
    """Pointwise operator coefficients alpha = lambda/(a+b y), beta = c/(a+b y)."""
    ys = fuel.sample(layer, t)
    den = _denominator(params, ys)
    grid = params.a.value.grid
    alpha = GridFunction(grid, params.lam.value.values / den)
    beta = GridFunction(grid, params.c.value.values / den)
    return alpha, beta


@dataclass(frozen=True)
class AlphaBetaDerivatives:
    alpha: GridFunction
    alpha_x: GridFunction
    alpha_xx: GridFunction
    beta: GridFunction
    beta_x: GridFunction
    beta_xx: GridFunction


def alpha_beta_derivatives(
    params: LayerParams, fuel: FuelConcentration, layer: int, t: float
) -> AlphaBetaDerivatives:
    """Quotient-rule derivatives of alpha and beta from the analytic fields."""
    ys = fuel.sample(layer, t)
    den = _denominator(params, ys)
    b, b1, b2 = params.b.value.values, params.b.d1.values, params.b.d2.values
    den_x = params.a.d1.values + b1 * ys.y.values + b * ys.y_x.values
    den_xx = (
        params.a.d2.values
        + b2 * ys.y.values
        + 2.0 * b1 * ys.y_x.values
        + b * ys.y_xx.values
    )
    grid = params.a.value.grid

    def quotient(n, n1, n2):
        v = n / den
        vx = (n1 * den - n * den_x) / den**2
        vxx = (n2 * den**2 - n * den * den_xx - 2.0 * n1 * den * den_x + 2.0 * n * den_x**2) / den**3
        return v, vx, vxx

    av, ax, axx = quotient(params.lam.value.values, params.lam.d1.values, params.lam.d2.values)
    bv, bx, bxx = quotient(params.c.value.values, params.c.d1.values, params.c.d2.values)
    return AlphaBetaDerivatives(
        GridFunction(grid, av), GridFunction(grid, ax), GridFunction(grid, axx),
        GridFunction(grid, bv), GridFunction(grid, bx), GridFunction(grid, bxx),
    )


def accretivity_constant(
    alpha_xx_samples: Sequence[GridFunction], beta_x_samples: Sequence[GridFunction]
) -> float:
    """Half the sum of sup|alpha_xx| and sup|beta_x| over the supplied time samples."""
    sup_axx = max((float(np.max(np.abs(g.values))) for g in alpha_xx_samples), default=0.0)
    sup_bx = max((float(np.max(np.abs(g.values))) for g in beta_x_samples), default=0.0)
    return 0.5 * (sup_axx + sup_bx)


def layer_accretivity(
    params: LayerParams, fuel: FuelConcentration, layer: int, times: Sequence[float]
) -> float:
    """Accretivity constant of one layer's operator over the sampled times."""
    axx, bx = [], []
    for t in times:
        der = alpha_beta_derivatives(params, fuel, layer, t)
        axx.append(der.alpha_xx)
        bx.append(der.beta_x)
    return accretivity_constant(axx, bx)


def r_constants(
    layers: Sequence[LayerParams],
    fuel: FuelConcentration,
    g_bounds: tuple[float, float, float],
    times: Sequence[float],
) -> tuple[list[float], float]:
    """Bulk sup-norm constants: per-layer max over the listed field norms, then the overall max.

    Per layer the candidates are |a|, |a'|, |a''| (same for b and d), |c| with
    |c'|, |c''|, |c'''|, the fuel sups |y|, |y_x|, |y_xx| over the sampled
    times, and the three Arrhenius bounds.
    """
    r_list = []
    for i, p in enumerate(layers):
        cands = [p.a.sup(k) for k in range(3)]
        cands += [p.b.sup(k) for k in range(3)]
        cands += [p.d.sup(k) for k in range(3)]
        cands += [p.c.sup(k) for k in range(4)]
        y_sups = [0.0, 0.0, 0.0]
        for t in times:
            ys = fuel.sample(i, t)
            y_sups[0] = max(y_sups[0], float(np.max(np.abs(ys.y.values))))
            y_sups[1] = max(y_sups[1], float(np.max(np.abs(ys.y_x.values))))
            y_sups[2] = max(y_sups[2], float(np.max(np.abs(ys.y_xx.values))))
        cands += y_sups
        cands += list(g_bounds)
        r_list.append(max(cands))
    return r_list, max(r_list)


def _field_sup_table(p: LayerParams) -> dict:
    return {
        "a": [p.a.sup(k) for k in range(3)],
        "b": [p.b.sup(k) for k in range(3)],
        "c": [p.c.sup(k) for k in range(4)],
        "d": [p.d.sup(k) for k in range(3)],
        "lambda": [p.lam.sup(k) for k in range(3)],
    }


def validate_hypotheses(
    layers: Sequence[LayerParams],
    fuel: FuelConcentration,
    grid: GridSpec,
    horizon: float,
    times: Sequence[float] | None = None,
    g_bounds: tuple[float, float, float] | None = None,
) -> HypothesisReport:
    """Check the structural hypotheses on the data and extract the theory constants.

    Violations are report content, not exceptions: the report lists every
    failed clause with its layer and location.  Constants k1, k2, k3 are the
    tightest values satisfied by the sampled data.
    """
    if times is None:
        times = fuel.sample_times(horizon)
    times = np.asarray(times, dtype=float)
    if times.size == 0:
        times = np.array([0.0])
    if not fuel.time_dependent:
        # Static fuel makes every time sample identical.
        times = times[:1]
    violations: list[Violation] = []

    def locate(values: np.ndarray, idx: int) -> str:
        x = grid.nodes()[idx]
        return f"x={x:.6g} (node {idx})"

    # Hy6(i): lower/upper bounds on a, lambda, b, c
    inf_a_lam = np.inf
    sup_k2 = 0.0
    for i, p in enumerate(layers):
        for name, fld in (("a", p.a), ("lambda", p.lam)):
            vmin = float(np.min(fld.value.values))
            inf_a_lam = min(inf_a_lam, vmin)
            if vmin <= 0.0:
                j = int(np.argmin(fld.value.values))
                violations.append(Violation(
                    f"Hy6(i): k1 <= {name}_i",
                    i,
                    f"{name} reaches {vmin:.6g} at {locate(fld.value.values, j)}; no positive k1 exists",
                ))
            sup_k2 = max(sup_k2, float(np.max(fld.value.values)))
        for name, fld in (("b", p.b), ("c", p.c)):
            vmin = float(np.min(fld.value.values))
            if vmin < 0.0:
                j = int(np.argmin(fld.value.values))
                violations.append(Violation(
                    f"Hy6(i): 0 <= {name}_i",
                    i,
                    f"{name} reaches {vmin:.6g} at {locate(fld.value.values, j)}",
                ))
            sup_k2 = max(sup_k2, float(np.max(fld.value.values)))
        for cname, cval in (("K", p.K), ("q_left", p.q_left), ("q_right", p.q_right),
                            ("qbar", p.qbar), ("E", p.E)):
            if cval < 0.0:
                violations.append(Violation(
                    f"constants: {cname} >= 0", i, f"{cname} = {cval:.6g}",
                ))

    k1 = float(inf_a_lam) if np.isfinite(inf_a_lam) else 0.0
    k2 = float(sup_k2)
    if not k1 < k2:
        violations.append(Violation(
            "Hy6(i): k1 < k2", None,
            f"tightest constants give k1 = {k1:.6g} and k2 = {k2:.6g}; a strict gap is required",
        ))

    # Hy7: fuel bounds over the sampled times
    k3 = 0.0
    dx = grid.dx
    for i in range(len(layers)):
        worst_min, worst_max = np.inf, -np.inf
        worst_min_loc = worst_max_loc = ""
        for t in times:
            ys = fuel.sample(i, float(t))
            v = ys.y.values
            jmin, jmax = int(np.argmin(v)), int(np.argmax(v))
            if v[jmin] < worst_min:
                worst_min, worst_min_loc = float(v[jmin]), f"{locate(v, jmin)}, t={t:.6g}"
            if v[jmax] > worst_max:
                worst_max, worst_max_loc = float(v[jmax]), f"{locate(v, jmax)}, t={t:.6g}"
            k3 = max(k3, float(np.max(np.abs(v))))
            # Hy7(iii): discrete finiteness of (y_i)_txx in L2 at sample times
            if not np.isfinite(l2_array(ys.y_txx.values, dx)):
                violations.append(Violation(
                    "Hy7(iii): (y_i)_txx in L2", i, f"non-finite discrete L2 norm at t={t:.6g}",
                ))
        if worst_min < 0.0:
            violations.append(Violation(
                "Hy7: y_i >= 0", i, f"y reaches {worst_min:.6g} at {worst_min_loc}"
            ))
        if worst_max > 1.0:
            violations.append(Violation(
                "Hy7: y_i <= 1", i, f"y reaches {worst_max:.6g} at {worst_max_loc}"
            ))

    mu0 = mu1 = None
    if k1 > 0.0 and k2 > 0.0:
        mu0 = k1 / (k2 * (1.0 + k3))
        mu1 = k2 / k1

    # Parabolicity window check and accretivity constants (skipped if the
    # denominator is already broken).
    beta_per_layer: list[float] = []
    try:
        for i, p in enumerate(layers):
            beta_per_layer.append(layer_accretivity(p, fuel, i, times))
            if mu0 is not None:
                for t in times:
                    alpha, _ = compute_alpha_beta(p, fuel, i, float(t))
                    amin, amax = float(np.min(alpha.values)), float(np.max(alpha.values))
                    if amin < mu0 * (1.0 - ALPHA_BOUND_SLACK) or amax > mu1 * (1.0 + ALPHA_BOUND_SLACK):
                        violations.append(Violation(
                            "Lemma: mu0 <= alpha_i <= mu1", i,
                            f"alpha range [{amin:.6g}, {amax:.6g}] leaves [{mu0:.6g}, {mu1:.6g}] at t={t:.6g}",
                        ))
    except DenominatorTooSmall as exc:
        violations.append(Violation("Hy6(i): a + b*y >= k1", None, str(exc)))
        beta_per_layer = beta_per_layer or [float("nan")] * len(layers)

    if g_bounds is None:
        from .reaction import arrhenius_bounds

        g_bounds = arrhenius_bounds(max(p.E for p in layers))
    try:
        r_list, r_tilde = r_constants(layers, fuel, g_bounds, times)
    except DenominatorTooSmall:
        r_list, r_tilde = [float("nan")] * len(layers), float("nan")

    return HypothesisReport(
        k1=k1,
        k2=k2,
        k3=k3,
        mu0=mu0,
        mu1=mu1,
        beta_per_layer=beta_per_layer,
        beta=max(beta_per_layer) if beta_per_layer else 0.0,
        R_per_layer=r_list,
        R_tilde=r_tilde,
        g_bounds=g_bounds,
        passed=not violations,
        violations=violations,
        horizon=float(horizon),
        n_time_samples=len(times),
        field_sups=[_field_sup_table(p) for p in layers],
    )
