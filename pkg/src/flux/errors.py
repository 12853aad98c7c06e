"""Shared exception types."""


class StateError(RuntimeError):
    """An operation was asked of a state that cannot support it (e.g. moving in a finished game)."""


class FormatError(ValueError):
    """A persisted artifact (table file, transcript) is malformed; message carries the line number."""


class ConfigError(ValueError):
    """Bad or missing configuration: unknown agent id, absent table file, unset endpoint, ..."""


class TransportError(RuntimeError):
    """A chat backend failed to produce a reply (network error, bad payload, timeout)."""
