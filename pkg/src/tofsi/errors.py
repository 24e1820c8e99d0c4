"""Exception hierarchy shared by the solvers and the CLI."""


class TofsiError(Exception):
    """Base class for all package errors."""

    exit_code = 1


class ConfigError(TofsiError, ValueError):
    exit_code = 2


class SolverError(TofsiError):
    """Linear or nonlinear solve failure (singular system, no convergence)."""

    exit_code = 3

    def __init__(self, message, history=None):
        super().__init__(message)
        self.history = list(history) if history is not None else []


class DivergenceError(SolverError):
    pass


class CouplingError(SolverError):
    """Staggered fluid-structure iteration failed to converge."""


class GeometryError(TofsiError):
    """Inverted or degenerate elements in the (deformed) mesh."""

    exit_code = 4

    def __init__(self, message, elements=()):
        super().__init__(message)
        self.elements = [int(e) for e in elements]


class DegenerateDesignError(TofsiError):
    pass
