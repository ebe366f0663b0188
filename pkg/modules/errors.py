"""
Errors Module
Exception hierarchy shared by every module
"""

from typing import Optional


class ShrinkCLError(Exception):
    """Base class for all errors raised by this package"""


class ShapeError(ShrinkCLError, ValueError):
    """Operand dimensions do not agree"""


class NumericalError(ShrinkCLError, ArithmeticError):
    """An operation produced NaN or Inf"""


class DegenerateError(ShrinkCLError, ValueError):
    """Zero norms, empty reductions, degenerate clusters"""


class ConfigError(ShrinkCLError, ValueError):
    """Invalid configuration values or unknown configuration keys"""


class TapeError(ShrinkCLError, RuntimeError):
    """Gradient requested for something the tape never recorded"""


class CheckpointError(ShrinkCLError, ValueError):
    """Checkpoint file cannot be parsed"""


class DataFormatError(ShrinkCLError, ValueError):
    """
    Input file cannot be parsed

    Args:
        message (str): What went wrong
        row (int): 1-based data row, when known
        col (int): 1-based file column, when known
    """

    def __init__(self, message: str, row: Optional[int] = None, col: Optional[int] = None):
        self.row = row
        self.col = col
        if row is not None and col is not None:
            message = f"{message} (row {row}, col {col})"
        elif row is not None:
            message = f"{message} (row {row})"
        super().__init__(message)


class TrainingError(ShrinkCLError):
    """A module error raised inside the training loop, with epoch/step context"""

    def __init__(self, message: str, epoch: int, step: Optional[int] = None):
        self.epoch = epoch
        self.step = step
        where = f"epoch {epoch}" if step is None else f"epoch {epoch}, step {step}"
        super().__init__(f"{where}: {message}")
