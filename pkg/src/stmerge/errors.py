"""Exception hierarchy.

``InputError`` subclasses describe bad data or bad requests from the caller.
``InvariantViolation`` subclasses mean the engine caught itself in an
inconsistent state; the CLI maps the two families to different exit codes.
"""


class MergeError(Exception):
    pass


class InputError(MergeError, ValueError):
    pass


class InvariantViolation(MergeError, RuntimeError):
    pass


class InvalidGrid(InputError):
    pass


class ZeroNormVector(InputError):
    pass


class EmptyChildren(InputError):
    pass


class FrameOutOfRange(InputError, IndexError):
    pass


class InvalidConfig(InputError):
    pass


class UnknownStrategy(InputError):
    pass


class InvalidTarget(InputError):
    pass


class InvalidSpec(InputError):
    pass


# NPY format errors
class FormatError(InputError):
    pass


class BadMagic(FormatError):
    pass


class UnsupportedDtype(FormatError):
    pass


class WrongRank(FormatError):
    pass


class NonFinitePayload(FormatError):
    pass


class TruncatedPayload(FormatError):
    pass


class IoFailure(MergeError, OSError):
    pass


class PartitionMismatch(InvariantViolation):
    pass


class CycleDetected(InvariantViolation):
    pass
