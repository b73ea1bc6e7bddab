"""Exception types shared across the package."""


class ContractViolationError(ValueError):
    """A documented precondition or invariant was violated by the caller."""


class DataFormatError(ValueError):
    """An input file could not be parsed; the message names the offending line."""


class EnumerationLimitError(ValueError):
    """Exhaustive enumeration was refused because the instance is too large."""
