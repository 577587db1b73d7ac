"""Exception types raised across the package."""


class InvalidInput(ValueError):
    """Argument outside an operation's domain (shape, range, ordering)."""


class FormatError(ValueError):
    """Malformed stream file."""


class ProtocolError(RuntimeError):
    """Message that the coordinator cannot interpret."""


class OracleCapExceeded(RuntimeError):
    """Exact oracle refused because the retained history is too large."""
