"""Exception hierarchy shared by every lgimap module."""


class LgiError(ValueError):
    """Base class for input-contract violations (CLI exit code 2)."""


class InvalidDepth(LgiError):
    pass


class BehindCamera(LgiError):
    pass


class DegenerateVector(LgiError):
    pass


class ShapeMismatch(LgiError):
    pass


class DegenerateTime(LgiError):
    pass


class DegenerateDenominator(LgiError):
    pass


class DegenerateClass(LgiError):
    pass


class DegenerateRegion(LgiError):
    pass


class FormatError(LgiError):
    """Malformed file. ``offset`` is the byte position where parsing failed."""

    def __init__(self, message: str, offset: int | None = None):
        self.offset = offset
        if offset is not None:
            message = f"{message} (at byte {offset})"
        super().__init__(message)


class ConfigError(LgiError):
    """Scene-config validation failure; ``path`` names the offending key."""

    def __init__(self, path: str, message: str):
        self.path = path
        super().__init__(f"{path}: {message}" if path else message)
