"""Exception hierarchy shared by the numerical modules and the CLI."""


class NfldpError(Exception):
    """Base class for all library errors."""

    exit_code = 3


class ConfigError(NfldpError, ValueError):
    """Invalid configuration or argument value."""

    exit_code = 2


class NumericalError(NfldpError, ArithmeticError):
    """A numerical routine produced an unusable result."""

    exit_code = 3


class BlowUpError(NumericalError):
    """A simulated state became non-finite."""

    def __init__(self, message, step=None):
        super().__init__(message)
        self.step = step


class ConvergenceError(NfldpError):
    """An iterative solver did not reach its tolerance."""

    exit_code = 4

    def __init__(self, message, best=None, residual=None):
        super().__init__(message)
        self.best = best
        self.residual = residual


class CensoringError(NfldpError):
    """Too many exit-time samples were censored at the time cutoff."""

    exit_code = 4

    def __init__(self, message, epsilon=None):
        super().__init__(message)
        self.epsilon = epsilon


class KinkWarning(UserWarning):
    """A ramp gain is evaluated at its non-differentiable point."""


class HorizonWarning(UserWarning):
    """An infimum over horizons is not bracketed by the horizon grid."""
