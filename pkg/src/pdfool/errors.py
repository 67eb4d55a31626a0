"""Exception hierarchy.

Each family maps to one CLI exit code: config errors exit 1, data errors
exit 2, numeric failures exit 3.
"""

from __future__ import annotations


class PdFoolError(Exception):
    exit_code = 1


class ConfigError(PdFoolError):
    exit_code = 1


class DataError(PdFoolError):
    exit_code = 2


class SchemaError(DataError):
    pass


class RowError(DataError):
    """A single cell failed to parse or validate."""

    def __init__(self, row: int, column: str, message: str):
        self.row = row
        self.column = column
        super().__init__(f"row {row}, column {column!r}: {message}")


class NumericError(PdFoolError):
    exit_code = 3


class DivergenceError(NumericError):
    def __init__(self, epoch: int, loss: float):
        self.epoch = epoch
        self.loss = loss
        super().__init__(f"training diverged at epoch {epoch} (loss={loss})")


class NonFinitePredictionError(NumericError):
    def __init__(self, grid_value: float, row: int):
        self.grid_value = grid_value
        self.row = row
        super().__init__(f"non-finite prediction at grid value {grid_value!r}, row {row}")


class UnreachableTargetError(NumericError):
    """No permuted row at some grid value is flagged, so the PD value there cannot move."""

    def __init__(self, feature: str, grid_values):
        self.feature = feature
        self.grid_values = list(grid_values)
        super().__init__(
            f"target for {feature!r} unreachable: no permuted rows flagged as "
            f"extrapolation at grid values {self.grid_values}"
        )


class DegenerateTargetError(NumericError):
    pass
