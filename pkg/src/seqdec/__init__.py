"""Model-agnostic beam-search decoding with pluggable scoring corrections."""

from seqdec.errors import ConfigurationError, FixtureCoverageError

__version__ = "0.1.0"

__all__ = ["ConfigurationError", "FixtureCoverageError", "__version__"]
