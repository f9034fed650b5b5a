"""Exception hierarchy.

Numerical failures (no tilt exists, degenerate correlation structure,
solver non-convergence, exponent overflow) derive from ``NumericalError``
so callers can distinguish them from bad inputs, which raise plain
``ValueError`` subclasses.
"""


class NumericalError(Exception):
    """A computation failed for a mathematical/numerical reason."""


class NoTiltError(NumericalError):
    """No positive tilt parameter brings the Perron eigenvalue back to 1."""


class NoRootError(NumericalError):
    """The tilt equation has no positive root on the searched interval."""


class DegenerateCaseError(NumericalError):
    """1 + 2R is (numerically) zero: partial-sum variance stays bounded
    and no valid tilt exists."""


class ConvergenceError(NumericalError):
    """An iteration (power method, truncation doubling, bisection) hit its
    cap before reaching tolerance."""


class TiltOverflowError(NumericalError):
    """A tilted weight or matrix entry would exceed double range; usually
    means the tilt parameter is mis-bracketed for this model."""


class ModelError(ValueError):
    """A model violates its structural invariants."""


class ConfigError(ValueError):
    """A run configuration is malformed (unknown fields, bad values)."""
