"""Exception types raised by the simulator."""


class ConfigurationError(ValueError):
    """Inconsistent sizes or parameters."""


class LayoutError(ConfigurationError):
    """Pilot, extension and guard footprint does not fit the grid."""


class InvalidRootError(ValueError):
    """Zadoff-Chu root is not coprime with the sequence length."""


class CapacityError(ConfigurationError):
    """The deterministic pilot design ran out of root pairs."""

    def __init__(self, message, max_antennas):
        super().__init__(message)
        self.max_antennas = max_antennas


class DegenerateColumnError(ValueError):
    """A matrix column has zero norm."""


class UndefinedMetricError(ValueError):
    """Metric is undefined for the given input (e.g. zero reference)."""
