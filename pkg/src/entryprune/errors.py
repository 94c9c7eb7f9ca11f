"""Error types that the CLI maps onto exit codes."""


class ConfigError(Exception):
    """Invalid configuration or usage (CLI exit code 1)."""


class DataError(Exception):
    """Unreadable or malformed input data (CLI exit code 2)."""
