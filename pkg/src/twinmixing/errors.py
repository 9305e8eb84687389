"""Exception types shared across the package."""


class ShapeError(ValueError):
    """Tensor shapes are incompatible with the requested operation."""


class ConfigError(ValueError):
    """A model configuration or weight store violates a structural invariant."""


class WeightFormatError(ValueError):
    """A weight file is corrupt, truncated or not a TWMX container."""


class ImageFormatError(ValueError):
    """An image file could not be decoded."""
