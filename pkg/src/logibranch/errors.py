"""Exception hierarchy.

Three families map onto the CLI exit codes: configuration problems (2),
solver failures (3) and violated mathematical preconditions (4).
"""


class LogibranchError(Exception):
    """Base class for all errors raised by the package."""


class ConfigError(LogibranchError, ValueError):
    """Invalid user input: domain strings, parameters, grids."""


class DegenerateDomainError(ConfigError):
    pass


class MeshMismatchError(LogibranchError, ValueError):
    """A field was used with forms assembled on another mesh."""


class PreconditionError(LogibranchError):
    """A mathematical precondition of the requested operation fails."""


class LambdaOmegaNotGreaterThanOne(PreconditionError):
    """The boundary principal eigenvalue exists only when lambda_Omega > 1."""


class PreconditionLambdaOmega(PreconditionError):
    """The operation needs lambda_Omega on a particular side of 1."""


class NotInCone(PreconditionError):
    """Fibering analysis needs A(u) > 0 (and E(u) < 0 for the root search)."""


class NoConstantSolution(PreconditionError):
    """No positive constant lies on the requested Nehari piece."""


class NoTwoRoots(PreconditionError):
    """No seed has a fibering map with two critical points at this lambda."""


class NonDifferentiableBoundary(PreconditionError):
    """Derivative of t**q requested at a boundary value below the floor."""


class SolverError(LogibranchError, RuntimeError):
    """A numerical iteration failed to deliver a certified result."""


class MaxIterExceeded(SolverError):
    pass


class SingularJacobian(SolverError):
    pass


class OrderingViolation(SolverError):
    """Monotone iteration produced a decreasing step."""


class CorrectorDiverged(SolverError):
    pass


class NoSolution(SolverError):
    """The shooting oracle found no solution of the limiting problem."""
