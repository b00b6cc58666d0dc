"""Exception types shared across the package."""


class ConfigurationError(ValueError):
    """A config value or range is invalid (e.g. min > max, nonpositive size)."""


class MeshLoadError(ValueError):
    """A mesh file could not be parsed; message includes the offending line."""


class SimulationError(RuntimeError):
    """The simulation was driven into an unusable state (surface impact,
    stepping a finished episode, repeated initial-condition failures)."""
