"""Exception types raised by the carnot package. The CLI maps them to exit codes."""

from __future__ import annotations


class CarnotError(RuntimeError):
    """Base class for every error raised on purpose by this package."""


class InputError(CarnotError):
    """Bad user input: dimension mismatch, malformed spec file, violated precondition."""


class DegenerateCovectorError(InputError):
    """The covector has W_inf != 0 where a W_inf-free covector is required."""


class ConvergenceError(CarnotError):
    """A truncated series hit its term cap before the tail bound met the tolerance."""

    def __init__(self, message: str, residual_bound: float, terms: int) -> None:
        super().__init__(f"{message} (residual bound {residual_bound:.3e} after {terms} terms)")
        self.residual_bound = residual_bound
        self.terms = terms


class AmbiguousOrderError(CarnotError):
    """A fitted log-log slope is too far from any integer to name an order."""

    def __init__(self, slope: float, message: str | None = None) -> None:
        super().__init__(message or f"fitted slope {slope:.4f} is not within 0.2 of an integer; extend the lambda grid")
        self.slope = slope


class SamplingError(CarnotError):
    """Monte Carlo or sampling produced nothing usable (all-infinite orders, zero volumes)."""


class DivergenceError(CarnotError):
    """The geodesic integrator produced a non-finite state."""


class InternalError(CarnotError):
    """A numerical state that a valid input cannot produce."""
