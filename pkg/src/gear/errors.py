"""Exception hierarchy shared across the package.

The CLI maps these onto exit codes: usage errors exit 1, data errors exit 2,
training divergence exits 3.
"""


class GearError(Exception):
    """Base class for all errors raised by this package."""


class UsageError(GearError):
    """Bad command line, config key, or option value."""


class DataError(GearError):
    """Malformed or inconsistent input data (files, ids, schemas)."""


class DivergenceError(GearError):
    """Training produced a non-finite loss."""


class ContractError(GearError):
    """A library function was called with arguments violating its contract."""
