"""Exception types shared across the package.

Each class maps to one CLI exit code (see :mod:`symlab.cli`).
"""


class SymlabError(Exception):
    """Base class for all package errors."""


class InvalidArgumentError(SymlabError, ValueError):
    """A precondition on an argument was violated."""


class FormatError(SymlabError, ValueError):
    """A file or byte stream does not follow the expected layout."""

    def __init__(self, message, offset=None):
        if offset is not None:
            message = f"{message} (byte offset {offset})"
        super().__init__(message)
        self.offset = offset


class NumericalDomainError(SymlabError, ArithmeticError):
    """A numerical routine produced or consumed a non-finite value."""

    def __init__(self, message, node=None):
        if node is not None:
            message = f"{message} at node {node!r}"
        super().__init__(message)
        self.node = node


class TrainingDivergedError(SymlabError, RuntimeError):
    """Training produced a non-finite loss."""

    def __init__(self, epoch, loss=float("nan")):
        super().__init__(f"training diverged at epoch {epoch} (loss={loss})")
        self.epoch = epoch
        self.loss = loss
