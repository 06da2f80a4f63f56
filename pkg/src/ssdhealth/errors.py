"""Exception hierarchy.

Every error carries a short ``kind`` slug; the CLI prints it as a stable
``error[<kind>]:`` prefix so failures can be grepped by class.
"""


class SsdHealthError(Exception):
    kind = "error"


class DimensionError(SsdHealthError, ValueError):
    kind = "dimension"


class ConfigError(SsdHealthError, ValueError):
    kind = "config"


class InvalidInputError(SsdHealthError, ValueError):
    kind = "invalid-input"


class NumericError(SsdHealthError, ArithmeticError):
    kind = "numeric"


class DivergenceError(NumericError):
    kind = "divergence"

    def __init__(self, epoch: int, batch: int, loss: float):
        super().__init__(f"non-finite loss {loss!r} at epoch {epoch}, batch {batch}")
        self.epoch = epoch
        self.batch = batch
        self.loss = loss


class CacheError(SsdHealthError, RuntimeError):
    """Backward pass was handed a cache that does not belong to it."""

    kind = "internal"


class ParseError(SsdHealthError, ValueError):
    kind = "parse"

    def __init__(self, message: str, row: int | None = None, column: str | None = None):
        where = []
        if row is not None:
            where.append(f"row {row}")
        if column is not None:
            where.append(f"column {column!r}")
        prefix = f"{', '.join(where)}: " if where else ""
        super().__init__(prefix + message)
        self.row = row
        self.column = column


class EmptyDatasetError(InvalidInputError):
    kind = "empty-dataset"


class StratificationError(InvalidInputError):
    kind = "stratification"


class UndefinedROCError(InvalidInputError):
    kind = "undefined-roc"


class CorruptCheckpointError(SsdHealthError, ValueError):
    kind = "corrupt-checkpoint"

    def __init__(self, field: str, message: str):
        super().__init__(f"{field}: {message}")
        self.field = field
