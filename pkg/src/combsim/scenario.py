"""Scenario configuration: parsing, validation, canonical export, perturbation.

A scenario is a human-editable YAML document with one section per layer.
Every functional field is an expression from the closed analytic vocabulary
(see :mod:`combsim.expressions`), so hypothesis checks always see analytic
derivatives.  The formal grammar lives in ``SCENARIO_SCHEMA`` and is exported
verbatim by ``combsim export --schema``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, replace
from pathlib import Path

import jsonschema
import numpy as np
import yaml

from .errors import ScenarioError
from .expressions import add_specs, parse_expression, scale_spec
from .grid import GridFunction, GridSpec, h2_array
from .model import CoefficientField, FuelConcentration, LayerParams
from .reaction import ReactionContext
from .solver import RHO_FLOOR, SolverConfig

__all__ = [
    "Scenario",
    "SCENARIO_SCHEMA",
    "load_scenario",
    "parse_scenario",
    "export_scenario",
    "build_layers",
    "build_phi",
    "build_context",
    "perturb_scenario",
]

# Fraction of the domain next to each edge where initial data must be
# machine-negligible, and the relative threshold defining "negligible".
DECAY_BAND_FRACTION = 0.1
DECAY_THRESHOLD = 1e-9

_EXPRESSION_SCHEMA = {
    "oneOf": [
        {"type": "number"},
        {
            "type": "object",
            "properties": {
                "type": {"enum": ["const", "gauss", "tanh_ramp", "sine"]},
                "value": {"type": "number"},
                "amp": {"type": "number"},
                "width": {"type": "number"},
                "center": {
                    "oneOf": [
                        {"type": "number"},
                        {"type": "array", "items": {"type": "number"},
                         "minItems": 2, "maxItems": 2},
                    ]
                },
                "lo": {"type": "number"},
                "hi": {"type": "number"},
                "freq": {"type": "number"},
                "phase": {
                    "oneOf": [
                        {"type": "number"},
                        {"type": "array", "items": {"type": "number"},
                         "minItems": 2, "maxItems": 2},
                    ]
                },
            },
            "required": ["type"],
            "additionalProperties": False,
        },
        {"type": "array", "minItems": 1, "items": {"$ref": "#/$defs/expression"}},
    ]
}

SCENARIO_SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "title": "combsim scenario",
    "type": "object",
    "$defs": {"expression": _EXPRESSION_SCHEMA},
    "properties": {
        "name": {"type": "string"},
        "description": {"type": "string"},
        "grid": {
            "type": "object",
            "properties": {
                "x_min": {"type": "number"},
                "x_max": {"type": "number"},
                "nx": {"type": "integer", "minimum": 5},
            },
            "required": ["x_min", "x_max", "nx"],
            "additionalProperties": False,
        },
        "coupling": {
            "type": "object",
            "properties": {
                "q": {"type": "array", "items": {"type": "number"}},
                "qbar1": {"type": "number"},
                "qbar2": {"type": "number"},
                "E": {"type": "number"},
                "u_e": {"type": "number"},
            },
            "required": ["q"],
            "additionalProperties": False,
        },
        "layers": {
            "type": "array",
            "minItems": 2,
            "items": {
                "type": "object",
                "properties": {
                    "a": {"$ref": "#/$defs/expression"},
                    "b": {"$ref": "#/$defs/expression"},
                    "c": {"$ref": "#/$defs/expression"},
                    "d": {"$ref": "#/$defs/expression"},
                    "lambda": {"$ref": "#/$defs/expression"},
                    "K": {"type": "number"},
                    "fuel": {"$ref": "#/$defs/expression"},
                    "phi": {"$ref": "#/$defs/expression"},
                },
                "required": ["a", "b", "c", "d", "lambda", "K", "fuel", "phi"],
                "additionalProperties": False,
            },
        },
        "solver": {
            "type": "object",
            "properties": {
                "dt": {"type": "number", "exclusiveMinimum": 0},
                "theta": {"type": "number", "minimum": 0.5, "maximum": 1.0},
                "tol": {"type": "number", "exclusiveMinimum": 0},
                "max_iter": {"type": "integer", "minimum": 1},
                "horizon": {"type": "number", "exclusiveMinimum": 0},
                "default_T": {"type": "number", "exclusiveMinimum": 0},
            },
            "additionalProperties": False,
        },
        "window": {
            "type": "object",
            "properties": {
                "rho": {"type": ["number", "null"]},
                "M": {"type": ["number", "null"]},
                "R": {"type": ["number", "null"]},
                "T": {"type": ["number", "null"]},
            },
            "additionalProperties": False,
        },
    },
    "required": ["name", "grid", "coupling", "layers"],
    "additionalProperties": False,
}


@dataclass(frozen=True)
class Scenario:
    """Parsed scenario; ``data`` holds the canonical mapping."""

    data: dict

    @property
    def name(self) -> str:
        return self.data["name"]

    @property
    def n_layers(self) -> int:
        return len(self.data["layers"])

    def grid(self) -> GridSpec:
        g = self.data["grid"]
        return GridSpec(float(g["x_min"]), float(g["x_max"]), int(g["nx"]))

    def solver_config(self, **overrides) -> SolverConfig:
        s = dict(self.data.get("solver", {}))
        s.update({k: v for k, v in overrides.items() if v is not None})
        return SolverConfig(
            dt=float(s.get("dt", 1e-3)),
            theta=float(s.get("theta", 0.5)),
            tol=float(s.get("tol", 1e-8)),
            max_iter=int(s.get("max_iter", 50)),
            horizon=float(s.get("horizon", 1.0)),
            default_T=float(s.get("default_T", 1.0)),
            seed=int(s.get("seed", 0)),
            threads=int(s.get("threads", 1)),
        )

    def window_overrides(self) -> dict:
        w = dict(self.data.get("window", {}))
        return {k: (None if w.get(k) is None else float(w[k])) for k in ("rho", "M", "R", "T")}

    def to_dict(self) -> dict:
        return self.data


def parse_scenario(data: dict, origin: str = "<dict>") -> Scenario:
    """Validate a raw mapping against the schema plus semantic rules."""
    try:
        jsonschema.validate(data, SCENARIO_SCHEMA)
    except jsonschema.ValidationError as exc:
        path = ".".join(str(p) for p in exc.absolute_path) or "<root>"
        raise ScenarioError(f"{origin}: invalid scenario at {path}: {exc.message}") from exc

    n = len(data["layers"])
    q = data["coupling"]["q"]
    if len(q) != n - 1:
        raise ScenarioError(
            f"{origin}: coupling.q must list {n - 1} interlayer coefficients for"
            f" {n} layers, got {len(q)}"
        )
    for key in ("qbar1", "qbar2", "E"):
        if float(data["coupling"].get(key, 0.0)) < 0.0:
            raise ScenarioError(f"{origin}: coupling.{key} must be nonnegative")
    for qi in q:
        if float(qi) < 0.0:
            raise ScenarioError(f"{origin}: coupling.q entries must be nonnegative")
    # Expressions must parse, and only the fuel may move in time.
    for i, layer in enumerate(data["layers"]):
        for key in ("a", "b", "c", "d", "lambda", "phi"):
            expr = parse_expression(layer[key], where=f"layers[{i}].{key}")
            if expr.time_dependent():
                raise ScenarioError(
                    f"{origin}: layers[{i}].{key} must not depend on time"
                )
        parse_expression(layer["fuel"], where=f"layers[{i}].fuel")
        if float(layer["K"]) < 0.0:
            raise ScenarioError(f"{origin}: layers[{i}].K must be nonnegative")
    return Scenario(data=data)


def load_scenario(path: str | Path) -> Scenario:
    path = Path(path)
    try:
        with open(path, "r", encoding="utf-8") as fh:
            data = yaml.safe_load(fh)
    except yaml.YAMLError as exc:
        raise ScenarioError(f"{path}: YAML parse error: {exc}") from exc
    if not isinstance(data, dict):
        raise ScenarioError(f"{path}: scenario must be a mapping")
    return parse_scenario(data, origin=str(path))


def export_scenario(scn: Scenario) -> str:
    """Canonical YAML form; parsing the output reproduces the structure."""
    return yaml.safe_dump(scn.to_dict(), sort_keys=True, default_flow_style=False)


# ---------------------------------------------------------------------------
# Builders
# ---------------------------------------------------------------------------

def build_layers(scn: Scenario) -> tuple[list[LayerParams], FuelConcentration]:
    grid = scn.grid()
    coupling = scn.data["coupling"]
    q = [float(v) for v in coupling["q"]]
    qbar1 = float(coupling.get("qbar1", 0.0))
    qbar2 = float(coupling.get("qbar2", 0.0))
    E = float(coupling.get("E", 0.0))
    u_e = float(coupling.get("u_e", 0.0))
    n = scn.n_layers
    layers = []
    fuel_exprs = []
    for i, spec in enumerate(scn.data["layers"]):
        fields = {}
        for key in ("a", "b", "c", "d", "lambda"):
            expr = parse_expression(spec[key], where=f"layers[{i}].{key}")
            orders = 3 if key == "c" else 2
            fields[key] = CoefficientField.from_expression(expr, grid, orders=orders)
        fuel_exprs.append(parse_expression(spec["fuel"], where=f"layers[{i}].fuel"))
        layers.append(LayerParams(
            a=fields["a"], b=fields["b"], c=fields["c"], d=fields["d"], lam=fields["lambda"],
            K=float(spec["K"]),
            q_left=q[i - 1] if i > 0 else 0.0,
            q_right=q[i] if i < n - 1 else 0.0,
            qbar=qbar1 if i == 0 else (qbar2 if i == n - 1 else 0.0),
            E=E,
            u_e=u_e,
        ))
    return layers, FuelConcentration(fuel_exprs, grid)


def build_phi(scn: Scenario, check_decay: bool = True) -> list[GridFunction]:
    grid = scn.grid()
    x = grid.nodes()
    phi = []
    for i, spec in enumerate(scn.data["layers"]):
        expr = parse_expression(spec["phi"], where=f"layers[{i}].phi")
        gf = GridFunction(grid, expr(x, 0.0))
        if check_decay:
            _check_decay(gf, f"layers[{i}].phi")
        phi.append(gf)
    return phi


def _check_decay(gf: GridFunction, label: str) -> None:
    """Initial data must be machine-negligible inside the outer 10% bands."""
    nx = gf.grid.nx
    band = max(1, int(DECAY_BAND_FRACTION * nx))
    sup_all = float(np.max(np.abs(gf.values)))
    edge = max(
        float(np.max(np.abs(gf.values[:band]))),
        float(np.max(np.abs(gf.values[-band:]))),
    )
    if edge > DECAY_THRESHOLD * (1.0 + sup_all):
        raise ScenarioError(
            f"{label}: initial data does not decay near the truncation boundary "
            f"(edge magnitude {edge:.3e}); enlarge the domain or shrink the profile"
        )


def build_context(scn: Scenario, rho: float | None = None) -> tuple[ReactionContext, list[GridFunction]]:
    """Built model objects plus initial data; rho defaults to the H2 norm of phi."""
    grid = scn.grid()
    layers, fuel = build_layers(scn)
    phi = build_phi(scn)
    if rho is None:
        rho = scn.window_overrides().get("rho")
    phi_norm = max(h2_array(p.values, grid.dx) for p in phi)
    rho_eff = max(phi_norm, RHO_FLOOR, rho if rho is not None else 0.0)
    ctx = ReactionContext(tuple(layers), fuel, grid, rho_eff)
    return ctx, phi


# ---------------------------------------------------------------------------
# Parameter perturbations (used by the continuous-dependence experiments)
# ---------------------------------------------------------------------------

_PERTURBABLE = {"a", "b", "c_x", "d", "lambda", "y"}


def perturb_scenario(scn: Scenario, target: str, layer, add_spec) -> Scenario:
    """Return a new scenario with ``add_spec`` summed onto the target field.

    ``target='c_x'`` adds onto the c field itself (the perturbation of c_x is
    then the analytic derivative of ``add_spec``); ``target='y'`` adds onto
    the fuel expression.  ``layer`` is an index or 'all'.
    """
    if target not in _PERTURBABLE:
        raise ScenarioError(f"cannot perturb target {target!r}; expected one of {sorted(_PERTURBABLE)}")
    key = {"c_x": "c", "y": "fuel"}.get(target, target)
    data = yaml.safe_load(yaml.safe_dump(scn.to_dict()))  # deep copy via round-trip
    indices = range(scn.n_layers) if layer == "all" else [int(layer)]
    for i in indices:
        data["layers"][i][key] = add_specs(data["layers"][i][key], add_spec)
    return parse_scenario(data, origin=f"{scn.name}+perturbation")


def scaled_direction_spec(direction_spec, scale: float):
    """Scale a direction spec inside the vocabulary (helper re-export)."""
    return scale_spec(direction_spec, scale)
