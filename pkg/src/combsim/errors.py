"""Exception and warning types shared across the package."""
from __future__ import annotations


class CombsimError(Exception):
    """Base class for all package errors."""


class ScenarioError(CombsimError):
    """Scenario file failed to parse or validate; message names the offending key."""


class DenominatorTooSmall(CombsimError):
    """The coefficient denominator a + b*y dropped below half its lower bound."""


class LayerCountMismatch(CombsimError):
    """A state vector does not have one component per layer."""


class LinearSolveFailure(CombsimError):
    """A banded implicit solve failed (singular system)."""


class InfeasibleWindow(CombsimError):
    """The contraction-window bound is nonpositive; the scenario is rejected."""


class NoConvergence(CombsimError):
    """Picard iteration hit max_iter without contracting below tolerance."""


class WindowInfeasible(CombsimError):
    """Windowed continuation could not open the next window."""


class BoundViolated(CombsimError):
    """A Gronwall monitor was breached during continuation."""


class HypothesisViolatedByPerturbation(CombsimError):
    """A parameter perturbation produced fields that fail hypothesis validation."""


class CFLWarning(UserWarning):
    """Advective step is coarse relative to the grid; accuracy hint only."""
