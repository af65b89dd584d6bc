"""Exception types shared across the package."""


class DomainError(ValueError):
    """An argument or input lies outside the domain an operation accepts."""


class DataParseError(DomainError):
    """A data file could not be parsed; carries the offending location."""

    def __init__(self, message, row=None, column=None):
        where = []
        if row is not None:
            where.append(f"row {row}")
        if column is not None:
            where.append(f"column {column!r}")
        if where:
            message = f"{message} ({', '.join(where)})"
        super().__init__(message)
        self.row = row
        self.column = column


class DivergenceError(DomainError):
    """A 1-D leveraging step has no finite minimizer (smoothing needed)."""


class FormatVersionError(DomainError):
    """A serialized file has the wrong format tag or version."""

    def __init__(self, kind, expected, found):
        super().__init__(f"{kind}: expected version {expected!r}, found {found!r}")
        self.expected = expected
        self.found = found
