"""Exception hierarchy shared by the solver stages."""


class MftgneError(Exception):
    """Base class for all solver errors."""


class SpecError(MftgneError):
    """Problem data cannot be used as a game instance."""


class SpecShapeError(SpecError):
    """Array lengths disagree with the declared horizon, players or rows."""


class SpecFormatError(SpecError):
    """Instance text could not be parsed.

    ``path`` is a dotted field path (``dynamics.a[3]``) or ``line L, column C``.
    """

    def __init__(self, message, path=""):
        self.path = path
        super().__init__(f"{path}: {message}" if path else message)


class MissingFieldError(SpecFormatError):
    pass


class UnknownFieldError(SpecFormatError):
    pass


class SingularStageMatrix(MftgneError):
    """A stage matrix (``Lambda`` or ``Lambda_bar``) is numerically singular."""

    def __init__(self, stage, which, condition):
        self.stage = stage
        self.which = which
        self.condition = condition
        super().__init__(
            f"{which} at stage {stage} is singular (condition estimate {condition:.3e})"
        )


class PositivityViolation(MftgneError):
    """A completion-of-squares weight is not strictly positive."""

    def __init__(self, player, stage, which, value):
        self.player = player
        self.stage = stage
        self.which = which
        self.value = value
        super().__init__(
            f"{which} = {value:.6g} <= 0 for player {player} at stage {stage}"
        )


class SingularP1(MftgneError):
    """Block back-substitution met a singular diagonal block."""

    def __init__(self, stage):
        self.stage = stage
        super().__init__(f"diagonal block of the stacked delta_bar system is singular at stage {stage}")


class ZeroDiagonal(MftgneError):
    def __init__(self, index):
        self.index = index
        super().__init__(f"LCP matrix has a (near) zero diagonal entry at {index}")


class DimensionTooLarge(MftgneError):
    pass


class InfeasibleProjection(MftgneError):
    """The clipped mean sequence cannot satisfy a player's rows at some stage."""

    def __init__(self, player, stage, lower, upper):
        self.player = player
        self.stage = stage
        super().__init__(
            f"no feasible mean control for player {player} at stage {stage}: "
            f"lower {lower:.6g} > upper {upper:.6g}"
        )


class PipelineError(MftgneError):
    """Wraps an error raised by one pipeline stage, keeping the stage name."""

    def __init__(self, stage, cause):
        self.stage = stage
        self.cause = cause
        super().__init__(f"[{stage}] {cause}")


class NonFiniteError(MftgneError, FloatingPointError):
    """A product or solve produced infinities or NaNs."""
