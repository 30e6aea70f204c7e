class ConfigurationError(ValueError):
    """Raised for invalid hyperparameters or flag combinations."""


class FixtureCoverageError(KeyError):
    """A table model was queried on a (source, prefix) key it does not store."""

    def __init__(self, source, prefix):
        self.source = tuple(source)
        self.prefix = tuple(prefix)
        super().__init__(f"no table entry for source={list(self.source)} prefix={list(self.prefix)}")

    def __str__(self):
        return self.args[0]
