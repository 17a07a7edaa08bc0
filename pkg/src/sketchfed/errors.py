class ConfigError(ValueError):
    """Invalid configuration or construction parameters.

    ``field`` names the offending setting (dotted path for config files).
    """

    def __init__(self, field, message):
        self.field = field
        super().__init__(f"{field}: {message}")


class DivergenceError(FloatingPointError):
    """A non-finite value appeared in a gradient, update or optimizer moment."""
