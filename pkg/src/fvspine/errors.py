"""Exception hierarchy for fvspine."""

from __future__ import annotations


class FvSpineError(Exception):
    """Base class for all package errors."""


class ModelValidationError(FvSpineError, ValueError):
    """A rate matrix failed one or more model invariants.

    ``issues`` is a list of ``(code, message)`` pairs, where ``code`` is one of
    ``NotSquare``, ``TooSmall``, ``NonFinite``, ``NonZeroRowSum``,
    ``NegativeOffDiagonal``, ``CemeteryNotAbsorbing``,
    ``InteriorNotCommunicating`` or ``CemeteryUnreachable``.
    """

    def __init__(self, issues):
        self.issues = list(issues)
        lines = [f"{code}: {msg}" for code, msg in self.issues]
        super().__init__("invalid model:\n  " + "\n  ".join(lines))

    @property
    def codes(self):
        return [code for code, _ in self.issues]


class ModelFileError(FvSpineError, ValueError):
    """Model file could not be read or parsed."""


class NegativeTimeError(FvSpineError, ValueError):
    pass


class VanishingSurvivalProbability(FvSpineError, ArithmeticError):
    pass


class NoConvergence(FvSpineError, ArithmeticError):
    pass


class InvalidInitialState(FvSpineError, ValueError):
    pass


class TimeOutOfRange(FvSpineError, ValueError):
    pass


class NodeCapExceeded(FvSpineError):
    """A branching tree was still alive when its node budget ran out.

    The partially built tree is attached as ``tree``.
    """

    def __init__(self, cap, tree=None):
        self.cap = cap
        self.tree = tree
        super().__init__(f"tree still alive after {cap} nodes")


class NotABranchTime(FvSpineError, ValueError):
    pass


class SpineSideRequested(FvSpineError, ValueError):
    pass


class SingularSystem(FvSpineError, ArithmeticError):
    pass


class ZeroTrials(FvSpineError, ValueError):
    pass


class DegenerateSample(FvSpineError, ValueError):
    pass


class DimensionMismatch(FvSpineError, ValueError):
    pass


class InsufficientExpectedCounts(FvSpineError, ValueError):
    pass
