"""Exception types shared across the package."""


class ConfigurationError(ValueError):
    """A problem instance or experiment config is invalid (bad schema,
    empty mandatory subgroup, stratum too small, ...)."""


class DegenerateRoundError(RuntimeError):
    """A sampled round cannot evaluate its constraint estimate (e.g. a
    subgroup absent from every sampled client's batch)."""


class CsvParseError(ValueError):
    """CSV input failed to parse; carries file/row/column location."""

    def __init__(self, message: str, path: str, row: int | None = None,
                 column: str | int | None = None):
        loc = path
        if row is not None:
            loc += f", row {row}"
        if column is not None:
            loc += f", column {column!r}"
        super().__init__(f"{message} ({loc})")
        self.path = path
        self.row = row
        self.column = column


class SchemaVersionError(ValueError):
    """A metrics or summary file carries an unsupported schema tag."""
