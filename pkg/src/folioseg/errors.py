"""Exception types shared across the package."""


class FolioError(Exception):
    """Base class for all folioseg errors."""


class UnsupportedImage(FolioError):
    """Raster we do not handle (wrong bit depth, mode, or shape)."""


class UnknownColor(FolioError):
    """Ground-truth pixel too far from every palette color to snap."""


class DimensionMismatch(FolioError):
    """Two rasters that must align have different shapes."""


class NotDivisible(FolioError):
    """Image dimension is not a whole multiple of the tile side."""


class CropTooLarge(FolioError):
    """Requested crop does not fit inside the image."""


class ZeroFrequency(FolioError):
    """A class frequency of zero would make its loss weight infinite."""


class ModelFileError(FolioError):
    """Serialized model file is malformed or from an unknown version."""


class NumericError(FolioError):
    """A non-finite value appeared where the math guarantees finiteness."""


class ConfigError(FolioError):
    """Malformed or inconsistent pipeline configuration."""
