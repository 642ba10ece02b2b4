"""Exception types shared across the package.

Each class carries the CLI exit code it maps to.
"""


class ShotOrderError(Exception):
    exit_code = 1


class DimensionError(ShotOrderError, ValueError):
    """Operands disagree on k, class count or array shape."""


class CapacityError(ShotOrderError, ValueError):
    """k is above the configured cap; k! grows too fast to tabulate."""


class ContractError(ShotOrderError, ValueError):
    """An operation was called outside its documented preconditions."""


class DataFormatError(ShotOrderError, ValueError):
    exit_code = 2

    def __init__(self, message, path=None, line=None):
        self.path = path
        self.line = line
        where = ""
        if path is not None:
            where += f"{path}:"
        if line is not None:
            where += f"{line}:"
        super().__init__(f"{where} {message}" if where else message)


class UnusableScene(ShotOrderError):
    """A scene has fewer than k usable shots after cleaning."""


class NumericError(ShotOrderError, FloatingPointError):
    exit_code = 3


class TrainingError(ShotOrderError, RuntimeError):
    exit_code = 3

    def __init__(self, message, step=None):
        self.step = step
        super().__init__(message if step is None else f"step {step}: {message}")
