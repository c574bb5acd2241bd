"""Exception types shared across the package."""


class ConfigError(ValueError):
    """Invalid or infeasible configuration."""


class InconsistentObservation(ValueError):
    """Observations admit no codeword; on the BEC this indicates a bug."""
