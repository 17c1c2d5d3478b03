"""Exception taxonomy shared across the package.

The CLI maps these onto exit codes: usage problems exit 1, data/format
problems exit 2, numeric failures exit 3.
"""


class InrStoreError(Exception):
    """Base class for all package-specific errors."""


class ShapeMismatchError(InrStoreError, ValueError):
    """Tensor or parameter shapes are incompatible for an operation."""


class ContractError(InrStoreError, ValueError):
    """An operation precondition was violated (e.g. backward on a non-scalar)."""


class TapeConsumedError(InrStoreError, RuntimeError):
    """backward() was called twice on the same recorded forward pass."""


class DomainError(InrStoreError, ValueError):
    """A query coordinate lies outside the modelling domain (max-norm ball)."""


class ManifestParseError(InrStoreError, ValueError):
    """Corpus manifest file is malformed; carries a line number."""

    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class FormatError(InrStoreError, ValueError):
    """A binary container (checkpoint, store) failed validation."""


class ConfigError(InrStoreError, ValueError):
    """A configuration value is inconsistent or unsupported."""


class InputError(InrStoreError, ValueError):
    """Caller-supplied data does not satisfy an operation's requirements."""


class TagError(InrStoreError, ValueError):
    """A model carries the wrong architecture or implicit-function tag."""


class UnsupportedArchitectureError(TagError):
    """The requested operation does not apply to this architecture."""


class DegenerateShapeError(InrStoreError, RuntimeError):
    """A conversion could not find any surface (e.g. tracing never hits)."""


class NumericError(InrStoreError, RuntimeError):
    """A computation produced NaN/Inf and was aborted."""


class UsageError(InrStoreError, ValueError):
    """Bad command-line invocation."""
