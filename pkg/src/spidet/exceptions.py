"""Exception hierarchy shared across the package.

DataError covers malformed or inconsistent inputs (bad shapes, missing
columns, privileged data where none is allowed). NumericError covers
failures of the numerical machinery itself (singular systems, diverging
optimization). The CLI maps these to distinct exit codes.
"""


class SpidetError(Exception):
    """Base class for all package errors."""


class DataError(SpidetError, ValueError):
    """Invalid, missing, or inconsistent input data."""


class NumericError(SpidetError, RuntimeError):
    """A numerical routine could not produce a valid result."""


class BenchRunError(SpidetError, RuntimeError):
    """A benchmark cell failed; message identifies dataset, gamma, and run."""
