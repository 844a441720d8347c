"""Exception types raised by the package."""


class InvalidInputError(ValueError):
    """Raised for non-finite, out-of-domain or mis-shaped inputs."""


class UnsupportedInstanceError(TypeError):
    """Raised when an instance needs an oracle the package cannot supply."""
