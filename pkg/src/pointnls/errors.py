"""Exception taxonomy shared by the solvers, the time stepper, and the CLI."""


class SolverError(Exception):
    """A solve failed to produce a usable result."""


class NoDescentError(SolverError):
    """The eigenfunction initializer failed to make the action negative.

    Signals omega >= omega_alpha or a grid too coarse to see the bound state.
    """


class BracketFailureError(SolverError):
    """No sign change of the shooting functional over the searched range."""


class NonlinearSolveError(SolverError):
    """Fixed-point iteration of the implicit time step did not converge."""


class InvariantViolation(Exception):
    """A computed result contradicts a structural property of the problem."""


class WindowTooSmallError(ValueError):
    """A fit window contains fewer nodes than the fit requires."""
