"""Exception types shared across the package."""


class DataError(Exception):
    """Raised when input data violates a documented contract.

    The CLI maps this to exit status 1. Everything that is a property of
    the data (bad label cells, missing files, insufficient populations,
    rank-deficient design matrices, ...) should raise this rather than a
    bare ValueError so callers can distinguish data problems from bugs.
    """


class UsageError(Exception):
    """Raised for bad invocations (unknown config keys, bad flag combos).

    The CLI maps this to exit status 2.
    """
