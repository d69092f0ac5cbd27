"""Exception hierarchy.

Every error carries the CLI exit code it maps to: 1 for bad input or
validation failures, 2 for numerical failures.
"""


class TokenBindError(Exception):
    exit_code = 1


class InputError(TokenBindError, ValueError):
    """Malformed or inconsistent input."""


class NumericalError(TokenBindError, ArithmeticError):
    """A computation could not be completed in double precision."""

    exit_code = 2


class NonFiniteError(InputError):
    pass


class DimensionMismatch(InputError):
    pass


class ShapeMismatch(DimensionMismatch):
    pass


class SizeMismatch(DimensionMismatch):
    pass


class IndexOutOfRange(InputError, IndexError):
    pass


class NotSymmetric(InputError):
    pass


class NoConvergence(NumericalError):
    pass


class NearSingular(NumericalError):
    pass


class ZeroVector(InputError):
    pass


class ZeroReference(NumericalError):
    pass


class NonPositiveScale(InputError):
    pass


class NotDistribution(InputError):
    pass


class AbsoluteContinuityViolation(InputError):
    pass


class DegenerateColumn(NumericalError):
    pass


class EmptyObjectSet(InputError):
    pass


class NonFiniteLoss(NumericalError):
    def __init__(self, step, value):
        super().__init__(f"non-finite loss {value!r} at step {step}")
        self.step = step
        self.value = value


class ParseError(InputError):
    def __init__(self, message, position):
        super().__init__(f"{message} (at token {position})")
        self.position = position


class SchemaError(InputError):
    pass


class OverlapError(InputError):
    pass


class AnnotationIndexError(IndexOutOfRange):
    """An annotation index falls outside ``[0, token_count)``."""


class ConfigError(InputError):
    pass


# EMBX container errors
class EmbxError(InputError):
    pass


class BadMagic(EmbxError):
    pass


class BadVersion(EmbxError):
    pass


class BadDtype(EmbxError):
    pass


class TruncatedPayload(EmbxError):
    pass


class StageError(TokenBindError):
    """Wraps an error raised inside a named pipeline stage."""

    def __init__(self, stage, cause):
        super().__init__(f"[{stage}] {type(cause).__name__}: {cause}")
        self.stage = stage
        self.cause = cause
        self.exit_code = getattr(cause, "exit_code", 1)
