"""Exception types shared across the package.

Invalid arguments raise the builtin :class:`ValueError`.
"""


class CovercheckError(RuntimeError):
    """Base class for package-specific runtime failures."""


class ResourceLimitError(CovercheckError):
    """An instance is too large for the requested exact method."""


class InvalidStateError(CovercheckError):
    """An operation was called on an object in the wrong state."""
