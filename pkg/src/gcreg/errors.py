class GcregError(Exception):
    pass


class DimensionError(GcregError, ValueError):
    pass


class DomainError(GcregError, ValueError):
    pass


class FormatError(GcregError, ValueError):
    """Malformed input file. ``offset`` is the byte offset where parsing failed."""

    def __init__(self, message, offset=None):
        if offset is not None:
            message = f"{message} (at byte offset {offset})"
        super().__init__(message)
        self.offset = offset


class ConfigError(GcregError, ValueError):
    def __init__(self, message, key=None):
        super().__init__(message)
        self.key = key


class UsageError(GcregError, TypeError):
    pass
