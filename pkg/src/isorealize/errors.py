"""Exception types shared across the package."""


class RealizabilityError(Exception):
    """Base class for all errors raised by this package."""


class NonFiniteField(RealizabilityError, ValueError):
    """A field (or its finite-difference stencil) produced NaN or Inf."""


class PreconditionFailed(RealizabilityError):
    pass


class FlowError(RealizabilityError):
    """A trajectory could not be continued.

    ``time`` is the flow time reached, ``point`` the last admissible state,
    ``leg`` names the flow leg of a composed map (if any).
    """

    def __init__(self, message, time=None, point=None, leg=None):
        if leg is not None:
            message = f"{message} (leg {leg})"
        super().__init__(message)
        self.time = time
        self.point = point
        self.leg = leg


class SingularDirection(FlowError):
    """|j| or |curl j| fell below its guard along a trajectory."""


class StepUnderflow(FlowError):
    """The adaptive step size fell below the floating point floor."""


class FlowBlowup(StepUnderflow):
    """The trajectory left every bounded set in finite time."""


class NoCrossing(FlowError):
    """The flow horizon was exhausted before reaching the level set."""


class NoConvergence(RealizabilityError):
    """Coordinate inversion failed; carries the best iterate found."""

    def __init__(self, message, best=None, residual=None):
        super().__init__(message)
        self.best = best
        self.residual = residual


class EvalDomain(RealizabilityError, ValueError):
    """An expression was evaluated outside the domain of an operation."""


class ExprSyntaxError(RealizabilityError, SyntaxError):
    """Parse error with the byte offset and the set of expected tokens."""

    def __init__(self, message, offset, expected=()):
        self.expected = tuple(sorted(expected))
        text = f"{message} at offset {offset}"
        if self.expected:
            text += f" (expected one of: {', '.join(self.expected)})"
        super().__init__(text)
        self.msg = text
        self.offset = offset
