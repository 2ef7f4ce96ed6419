"""Exception types shared across the package."""


class BdbenchError(Exception):
    """Base class for package-specific failures."""


class SingularConfigurationError(BdbenchError):
    """Two particles closer than the singular-distance threshold."""


class TrajectoryExplodedError(BdbenchError):
    """A trajectory left the blow-up envelope; carries the offending step."""

    def __init__(self, step: int, message: str | None = None):
        self.step = step
        super().__init__(message or f"trajectory exploded at step {step}")


class StabilityDomainError(BdbenchError):
    """Stepsize outside the scheme's stability requirement (alpha*h < 1)."""


class UndersampledDistributionError(BdbenchError):
    """Empty estimated bin where the reference has mass; lengthen the run."""


class ConfigError(BdbenchError):
    """Malformed experiment configuration."""
