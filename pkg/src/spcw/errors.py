"""Exception types shared across the package.

Everything raised for bad user input (files, flags, parameters) derives
from SpcwError; the CLI maps these to exit code 1 and anything else to
exit code 2.
"""


class SpcwError(Exception):
    """Base class for input/data errors raised by this package."""


class StoreError(SpcwError):
    """Weight store is missing, malformed, or inconsistent with its manifest."""


class ContainerError(SpcwError):
    """Compressed container is malformed or violates a record invariant."""


class PlanError(SpcwError):
    """Compression plan request is invalid for the given layers."""


class CodecError(SpcwError):
    """Layer cannot be (de)compressed with the requested parameters."""
