"""Exception types shared across the package."""


class NoiseLearnError(Exception):
    """Base class for all errors raised by this package."""


class ShapeError(NoiseLearnError, ValueError):
    """Operands have incompatible dimensions."""


class DomainError(NoiseLearnError, ValueError):
    """A parameter is outside its valid domain (non-positive rate, overflow, ...)."""


class ConfigError(NoiseLearnError, ValueError):
    """An experiment configuration is invalid or inconsistent."""


class AnalysisError(NoiseLearnError, ValueError):
    """A trace does not support the requested analysis (constant, unimodal, ...)."""


class FormatError(NoiseLearnError, ValueError):
    """A file does not match its expected on-disk layout."""


class TransportError(NoiseLearnError, RuntimeError):
    """A hardware transport failed or is closed."""


class ColdBufferError(NoiseLearnError, RuntimeError):
    """The live buffer has not been filled yet; keep polling before sampling."""
