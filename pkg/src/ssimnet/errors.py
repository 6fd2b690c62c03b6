"""Exception types shared across the package.

Each carries the CLI exit code it maps to.
"""


class SsimNetError(Exception):
    exit_code = 1


class ShapeError(SsimNetError, ValueError):
    pass


class ConfigError(SsimNetError, ValueError):
    pass


class StateError(SsimNetError, RuntimeError):
    pass


class UsageError(SsimNetError, ValueError):
    pass


class DataFormatError(SsimNetError, ValueError):
    exit_code = 2


class NumericFault(SsimNetError, FloatingPointError):
    exit_code = 3

    def __init__(self, message, layer=None):
        super().__init__(message)
        self.layer = layer
