"""Exception types shared across the package.

Plain ValueError / IndexError are used for simple argument-domain and
index problems; the classes below mark failure modes that callers may
want to catch individually (bad input data, bad configuration, pipeline
stages run out of order, and so on).
"""


class RagnarError(Exception):
    """Base class for package-specific errors."""


class DataError(RagnarError, ValueError):
    """Input data violates the panel contract (duplicates, gaps, bad values)."""


class ConfigError(RagnarError, ValueError):
    """A configuration value is missing or invalid. Message names the key."""


class UnsupportedStageError(RagnarError, ValueError):
    """Requested an exact neighbour-set distribution beyond the closed-form depth."""


class StageOrderError(RagnarError, RuntimeError):
    """A pipeline stage was invoked before the stages it depends on."""


class UnderdeterminedError(RagnarError, ValueError):
    """A regression has fewer usable rows than coefficients."""


class EmptyOverlapError(RagnarError, ValueError):
    """Two forecast sets share no (origin, horizon) cells."""
