"""Exception types shared across the package.

Every error raised by library code derives from :class:`SvtaError` so callers
can catch one base class; most also derive from the matching builtin
(``ValueError``, ``IndexError``) so they behave idiomatically.
"""


class SvtaError(Exception):
    """Base class for all library errors."""


class ZeroVectorError(SvtaError, ValueError):
    """A vector with (near-)zero norm was passed where a direction is required."""


class DimMismatchError(SvtaError, ValueError):
    """Operand shapes are incompatible."""


class NonFiniteValueError(SvtaError, ValueError):
    """A NaN or infinity appeared where finite values are required."""


class ValidationError(SvtaError, ValueError):
    """A data container violates its invariants."""


class BadMagicError(SvtaError, ValueError):
    """A binary file does not start with the expected magic bytes."""


class TruncatedFileError(SvtaError, ValueError):
    """A binary file ended before its declared payload."""


class ConfigError(SvtaError, ValueError):
    """A configuration value is out of its legal range."""


class UnknownWordError(SvtaError, KeyError):
    """A token id is outside the vocabulary."""


class EmptySentenceError(SvtaError, ValueError):
    """A caption with zero tokens was passed to a per-sentence operation."""


class DegenerateSimilarityError(SvtaError, ValueError):
    """A concept-similarity vector has (near-)zero L1 mass and cannot be normalized."""


class EmptyBatchError(SvtaError, ValueError):
    """A loss was asked to reduce over zero examples."""


class NoHeadsEnabledError(SvtaError, ValueError):
    """All similarity heads are switched off."""


class IndexOutOfRangeError(SvtaError, IndexError):
    """An index does not address any element of its container."""
