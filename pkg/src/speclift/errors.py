"""Exception types raised across the package."""


class SpecliftError(Exception):
    """Base class for all speclift failures."""


class DegenerateInputError(SpecliftError):
    """Input too small or too flat for the requested operation."""


class DimensionMismatchError(SpecliftError):
    """Frames, masks or fields with incompatible shapes."""


class SequenceOrderError(SpecliftError):
    """Frame files on disk do not form a gapless, strictly increasing index run."""


class MaskFormatError(SpecliftError):
    """Mask file contains values other than 0 and 255."""


class ConfigError(SpecliftError):
    """Unknown key, unparsable value or violated invariant in a pipeline config."""


class CoverageError(SpecliftError):
    """No usable search-space pixels cover the damaged region."""


class RegistrationError(SpecliftError):
    """Registration diverged (non-finite energy) or regridding ran away."""
