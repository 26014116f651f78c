"""Exception hierarchy shared by every module."""


class BranchCountError(Exception):
    """Base class for all library errors."""


class DimensionMismatch(BranchCountError, ValueError):
    def __init__(self, left, right, what="operands"):
        super().__init__(f"dimension mismatch between {what}: {left} != {right}")
        self.left = left
        self.right = right


class ZeroState(BranchCountError, ValueError):
    """The state has (numerically) zero norm."""


class NoFreeDirection(BranchCountError):
    """No unit direction is left orthogonal to the excluded vectors."""


class DimensionTooSmall(BranchCountError):
    """The ambient space cannot host the requested number of microstates."""


class PeelUnderflow(BranchCountError, ValueError):
    """Tried to peel a microstate longer than the remaining vector."""


class InvalidOperator(BranchCountError, ValueError):
    """Matrix fails the projector or unitary invariants."""
