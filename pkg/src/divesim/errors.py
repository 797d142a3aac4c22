"""Exception hierarchy shared by all modules."""


class DivesimError(Exception):
    """Base class for every error raised by the package."""


class DomainError(DivesimError, ValueError):
    """An argument lies outside the domain of the operation."""


class DivergenceError(DivesimError, ArithmeticError):
    """A requested spectral integral does not converge."""


class ModelInvalidError(DivesimError, ValueError):
    """The model violates a standing assumption (coupling too large, divergent moments, ...)."""


class NoBoundStateError(DivesimError):
    """The requested dot energy has no discrete eigenvalue below the continuum."""


class UnsupportedRegimeError(DivesimError):
    """The operation is not defined in the requested parameter regime."""


class DispersiveAssumptionError(DivesimError):
    """``inf_r |F(r^2 + i0, E_a)|`` vanishes, so the spectrum at ``E_a`` is not purely a.c."""


class NormalizationError(DivesimError, ValueError):
    """A state passed as unit vector is not normalized."""


class IntegratorError(DivesimError, RuntimeError):
    """Time stepping became unstable; ``diagnostics`` carries the offending step."""

    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}


class ProbeError(DivesimError, KeyError):
    """A survival probability was requested for an overlap that was not recorded."""


class ConfigError(DivesimError, ValueError):
    """A scenario configuration could not be parsed or validated."""


class FitError(DivesimError, ValueError):
    """Too few or invalid points for a log-log fit."""
