"""Exception types raised by greedymc."""


class GmcError(Exception):
    """Base class for all package errors."""


class DimensionMismatch(GmcError, ValueError):
    pass


class InvalidParams(GmcError, ValueError):
    pass


class IndexNotActive(GmcError, ValueError):
    pass


class IndexNotInactive(GmcError, ValueError):
    pass


class IndexOutOfRange(GmcError, IndexError):
    pass


class ParseError(GmcError, ValueError):
    """Malformed input file. ``row``/``column`` are 1-based when known."""

    def __init__(self, message, path=None, row=None, column=None):
        loc = []
        if path is not None:
            loc.append(str(path))
        if row is not None:
            loc.append(f"row {row}")
        if column is not None:
            loc.append(f"column {column}")
        if loc:
            message = f"{', '.join(loc)}: {message}"
        super().__init__(message)
        self.path = path
        self.row = row
        self.column = column


class ShapeMismatch(GmcError, ValueError):
    pass


class SchemaVersionMismatch(GmcError, ValueError):
    pass


class ZeroVarianceColumn(GmcError, ValueError):
    def __init__(self, index):
        super().__init__(f"column {index} has zero variance")
        self.index = index
