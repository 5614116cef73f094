"""Exception hierarchy shared by the library, the CLI and the HTTP layer."""


class PriorCIError(Exception):
    """Base class for every error raised on purpose by priorci."""


class InvalidInputError(PriorCIError, ValueError):
    """A precondition on user-supplied values does not hold."""


class SingularDesignError(PriorCIError):
    """The design matrix (or the pair a, c) is rank deficient."""


class DegenerateCorrelationError(PriorCIError):
    """|rho| = 1, so the conditional variance 1 - rho^2 vanishes."""


class ConvergenceError(PriorCIError):
    """The optimizer stopped without meeting its tolerances."""
