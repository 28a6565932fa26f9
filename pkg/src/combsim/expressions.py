"""Analytic expression vocabulary for scenario fields.

Scenario coefficients, fuel concentrations and initial data are built from a
small whitelisted vocabulary: ``const``, ``gauss``, ``tanh_ramp`` and ``sine``,
plus sums of those.  Every primitive is closed under d/dx and d/dt, so
derivative fields required by the hypothesis checks are always analytic and
never finite-differenced.  Time enters only through optionally drifting
centers / phases (``center: [c0, c1]`` means c0 + c1*t), which keeps the
closure property trivial.

Internal closed forms: polynomials times a Gaussian (``_PolyGauss``),
polynomials in tanh (``_PolyTanh``) and pure harmonics (``_Harmonic``).
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import ScenarioError

__all__ = ["Expr", "parse_expression", "scale_spec", "add_specs", "EXPRESSION_TYPES"]

EXPRESSION_TYPES = ("const", "gauss", "tanh_ramp", "sine")


class Expr:
    """Analytic function of (x, t) with analytic x- and t-derivatives."""

    def __call__(self, x: np.ndarray, t: float = 0.0) -> np.ndarray:
        raise NotImplementedError

    def dx(self) -> "Expr":
        raise NotImplementedError

    def dt(self) -> "Expr":
        raise NotImplementedError

    def scaled(self, s: float) -> "Expr":
        raise NotImplementedError

    def is_zero(self) -> bool:
        return False

    def time_dependent(self) -> bool:
        return False


@dataclass(frozen=True)
class _Const(Expr):
    value: float

    def __call__(self, x, t=0.0):
        return np.full_like(np.asarray(x, dtype=float), self.value)

    def dx(self):
        return _Const(0.0)

    def dt(self):
        return _Const(0.0)

    def scaled(self, s):
        return _Const(self.value * s)

    def is_zero(self):
        return self.value == 0.0


def _poly_eval(coeffs: Sequence[float], s: np.ndarray) -> np.ndarray:
    out = np.zeros_like(s)
    for c in reversed(coeffs):
        out = out * s + c
    return out


def _poly_deriv(coeffs: Sequence[float]) -> tuple[float, ...]:
    return tuple(k * c for k, c in enumerate(coeffs) if k > 0) or (0.0,)


def _poly_shift_up(coeffs: Sequence[float]) -> tuple[float, ...]:
    # coefficients of s * P(s)
    return (0.0, *coeffs)


def _poly_sub(a: Sequence[float], b: Sequence[float]) -> tuple[float, ...]:
    n = max(len(a), len(b))
    a = tuple(a) + (0.0,) * (n - len(a))
    b = tuple(b) + (0.0,) * (n - len(b))
    return tuple(ai - bi for ai, bi in zip(a, b))


def _poly_scale(a: Sequence[float], s: float) -> tuple[float, ...]:
    return tuple(s * c for c in a)


@dataclass(frozen=True)
class _PolyGauss(Expr):
    """P(s) * exp(-s^2/2) with s = (x - center(t)) / width, center linear in t."""

    coeffs: tuple[float, ...]
    center0: float
    center_rate: float
    width: float

    def _s(self, x, t):
        return (np.asarray(x, dtype=float) - (self.center0 + self.center_rate * t)) / self.width

    def __call__(self, x, t=0.0):
        s = self._s(x, t)
        return _poly_eval(self.coeffs, s) * np.exp(-0.5 * s * s)

    def _ds_coeffs(self) -> tuple[float, ...]:
        # d/ds [P(s) e^{-s^2/2}] = (P'(s) - s P(s)) e^{-s^2/2}
        return _poly_sub(_poly_deriv(self.coeffs), _poly_shift_up(self.coeffs))

    def dx(self):
        return _PolyGauss(
            _poly_scale(self._ds_coeffs(), 1.0 / self.width),
            self.center0, self.center_rate, self.width,
        )

    def dt(self):
        if self.center_rate == 0.0:
            return _Const(0.0)
        return _PolyGauss(
            _poly_scale(self._ds_coeffs(), -self.center_rate / self.width),
            self.center0, self.center_rate, self.width,
        )

    def scaled(self, s):
        return _PolyGauss(_poly_scale(self.coeffs, s), self.center0, self.center_rate, self.width)

    def is_zero(self):
        return all(c == 0.0 for c in self.coeffs)

    def time_dependent(self):
        return self.center_rate != 0.0


@dataclass(frozen=True)
class _PolyTanh(Expr):
    """P(T) with T = tanh((x - center(t)) / width), center linear in t."""

    coeffs: tuple[float, ...]
    center0: float
    center_rate: float
    width: float

    def _T(self, x, t):
        return np.tanh((np.asarray(x, dtype=float) - (self.center0 + self.center_rate * t)) / self.width)

    def __call__(self, x, t=0.0):
        return _poly_eval(self.coeffs, self._T(x, t))

    def _dT_coeffs(self) -> tuple[float, ...]:
        # d/dx P(T) = P'(T) (1 - T^2) / width
        p1 = _poly_deriv(self.coeffs)
        t2p1 = _poly_shift_up(_poly_shift_up(p1))
        return _poly_scale(_poly_sub(p1, t2p1), 1.0 / self.width)

    def dx(self):
        return _PolyTanh(self._dT_coeffs(), self.center0, self.center_rate, self.width)

    def dt(self):
        if self.center_rate == 0.0:
            return _Const(0.0)
        return _PolyTanh(
            _poly_scale(self._dT_coeffs(), -self.center_rate),
            self.center0, self.center_rate, self.width,
        )

    def scaled(self, s):
        return _PolyTanh(_poly_scale(self.coeffs, s), self.center0, self.center_rate, self.width)

    def is_zero(self):
        return all(c == 0.0 for c in self.coeffs)

    def time_dependent(self):
        return self.center_rate != 0.0


@dataclass(frozen=True)
class _Harmonic(Expr):
    """amp * sin(freq * x + phase(t)), phase linear in t."""

    amp: float
    freq: float
    phase0: float
    phase_rate: float

    def __call__(self, x, t=0.0):
        return self.amp * np.sin(self.freq * np.asarray(x, dtype=float) + self.phase0 + self.phase_rate * t)

    def dx(self):
        return _Harmonic(self.amp * self.freq, self.freq, self.phase0 + 0.5 * math.pi, self.phase_rate)

    def dt(self):
        if self.phase_rate == 0.0:
            return _Const(0.0)
        return _Harmonic(self.amp * self.phase_rate, self.freq, self.phase0 + 0.5 * math.pi, self.phase_rate)

    def scaled(self, s):
        return _Harmonic(self.amp * s, self.freq, self.phase0, self.phase_rate)

    def is_zero(self):
        return self.amp == 0.0

    def time_dependent(self):
        return self.phase_rate != 0.0


@dataclass(frozen=True)
class _Sum(Expr):
    terms: tuple[Expr, ...]

    def __call__(self, x, t=0.0):
        x = np.asarray(x, dtype=float)
        out = np.zeros_like(x)
        for term in self.terms:
            out = out + term(x, t)
        return out

    def dx(self):
        return _Sum(tuple(term.dx() for term in self.terms))

    def dt(self):
        return _Sum(tuple(term.dt() for term in self.terms))

    def scaled(self, s):
        return _Sum(tuple(term.scaled(s) for term in self.terms))

    def is_zero(self):
        return all(term.is_zero() for term in self.terms)

    def time_dependent(self):
        return any(term.time_dependent() for term in self.terms)


def _linear_in_t(value, key: str, where: str) -> tuple[float, float]:
    if isinstance(value, (int, float)):
        return float(value), 0.0
    if isinstance(value, (list, tuple)) and len(value) == 2 and all(
        isinstance(v, (int, float)) for v in value
    ):
        return float(value[0]), float(value[1])
    raise ScenarioError(f"{where}: {key} must be a number or [value, rate], got {value!r}")


def _require(spec: dict, key: str, where: str) -> float:
    if key not in spec:
        raise ScenarioError(f"{where}: missing required key {key!r}")
    value = spec[key]
    if not isinstance(value, (int, float)):
        raise ScenarioError(f"{where}: {key} must be a number, got {value!r}")
    return float(value)


def parse_expression(spec, where: str = "expression") -> Expr:
    """Parse a scenario expression spec (dict, number, or list of dicts) into an Expr."""
    if isinstance(spec, (int, float)):
        return _Const(float(spec))
    if isinstance(spec, (list, tuple)):
        if not spec:
            raise ScenarioError(f"{where}: empty expression list")
        return _Sum(tuple(parse_expression(s, f"{where}[{i}]") for i, s in enumerate(spec)))
    if not isinstance(spec, dict):
        raise ScenarioError(f"{where}: expected a number, mapping, or list, got {type(spec).__name__}")
    kind = spec.get("type")
    if kind == "const":
        return _Const(_require(spec, "value", where))
    if kind == "gauss":
        c0, c1 = _linear_in_t(spec.get("center", 0.0), "center", where)
        width = _require(spec, "width", where)
        if width <= 0:
            raise ScenarioError(f"{where}: width must be positive")
        amp = _require(spec, "amp", where)
        return _PolyGauss((amp,), c0, c1, width)
    if kind == "tanh_ramp":
        c0, c1 = _linear_in_t(spec.get("center", 0.0), "center", where)
        width = _require(spec, "width", where)
        if width <= 0:
            raise ScenarioError(f"{where}: width must be positive")
        lo = _require(spec, "lo", where)
        hi = _require(spec, "hi", where)
        return _PolyTanh((0.5 * (lo + hi), 0.5 * (hi - lo)), c0, c1, width)
    if kind == "sine":
        freq = _require(spec, "freq", where)
        amp = _require(spec, "amp", where)
        p0, p1 = _linear_in_t(spec.get("phase", 0.0), "phase", where)
        return _Harmonic(amp, freq, p0, p1)
    raise ScenarioError(
        f"{where}: unknown expression type {kind!r}; expected one of {EXPRESSION_TYPES}"
    )


def scale_spec(spec, s: float):
    """Scale an expression spec by ``s`` while staying inside the vocabulary."""
    if isinstance(spec, (int, float)):
        return float(spec) * s
    if isinstance(spec, (list, tuple)):
        return [scale_spec(item, s) for item in spec]
    if not isinstance(spec, dict):
        raise ScenarioError(f"cannot scale expression spec {spec!r}")
    out = dict(spec)
    kind = spec.get("type")
    if kind == "const":
        out["value"] = float(spec["value"]) * s
    elif kind in ("gauss", "sine"):
        out["amp"] = float(spec["amp"]) * s
    elif kind == "tanh_ramp":
        out["lo"] = float(spec["lo"]) * s
        out["hi"] = float(spec["hi"]) * s
    else:
        raise ScenarioError(f"cannot scale expression spec of type {kind!r}")
    return out


def add_specs(base, extra):
    """Sum two expression specs (list concatenation in the vocabulary)."""
    base_list = list(base) if isinstance(base, (list, tuple)) else [base]
    extra_list = list(extra) if isinstance(extra, (list, tuple)) else [extra]
    return base_list + extra_list
