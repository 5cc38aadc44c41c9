"""Exception hierarchy shared by every module of the package."""


class IBSError(Exception):
    """Base class for all errors raised by :mod:`ibs`."""


class InputShapeError(IBSError, ValueError):
    """An input vector or matrix does not match the model's input dimension."""


class DegenerateDataError(IBSError, ValueError):
    """The data cannot support the requested operation (e.g. a single class)."""


class ConfigurationError(IBSError, ValueError):
    """Invalid parameters for a generator, search or experiment."""


class UnsupportedDimensionError(IBSError, ValueError):
    pass


class UnsupportedModelError(IBSError, ValueError):
    pass


class DataFormatError(IBSError, ValueError):
    """A data file could not be parsed. ``line`` is 1-based when known."""

    def __init__(self, message, path=None, line=None):
        self.path = path
        self.line = line
        where = ""
        if path is not None:
            where = f"{path}"
            if line is not None:
                where += f":{line}"
            where += ": "
        super().__init__(where + message)
