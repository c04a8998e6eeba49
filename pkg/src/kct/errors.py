"""Exception types shared across the package; the CLI maps them to exit codes."""


class ConfigError(ValueError):
    """Bad user input: unknown keys, out-of-range parameters, wrong shapes."""


class NumericalInstabilityError(RuntimeError):
    """A decomposition or reconstruction missed its tolerance."""


class CacheVersionError(RuntimeError):
    """A cache record was written by an incompatible format version."""
