"""Exception types shared across the package."""


class ConfigError(Exception):
    """Malformed or semantically invalid run configuration."""


class CheckpointError(Exception):
    """Unreadable, truncated, or mismatched checkpoint file."""


class TrainingDiverged(RuntimeError):
    """Optimization produced a non-finite loss or gradient."""
