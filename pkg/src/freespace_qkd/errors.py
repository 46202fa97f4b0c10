"""Exception types shared across the package."""


class ConfigError(ValueError):
    """A configuration value failed validation."""

    def __init__(self, field: str, message: str):
        self.field = field
        super().__init__(f"{field}: {message}")


class ProtocolAbort(RuntimeError):
    """The classical exchange between Alice and Bob was aborted."""


class KeyExhausted(RuntimeError):
    def __init__(self, required: int, available: int):
        self.required = required
        self.available = available
        super().__init__(f"insufficient key: {required} bits required, {available} available")


class UnsupportedConfiguration(ValueError):
    pass
