"""Exception hierarchy shared across the package.

The CLI maps these onto process exit codes: ConfigError -> 2,
FormatError and other data errors -> 3, NumericError -> 4.
"""


class MocaError(Exception):
    """Base class for all errors raised by this package."""


class ContractError(MocaError):
    """A caller violated a documented precondition."""


class ShapeError(ContractError):
    """Operand shapes are incompatible with the requested operation."""


class DegenerateInputError(MocaError):
    """Input is numerically degenerate (e.g. a zero vector fed to a normalizer)."""


class FormatError(MocaError):
    """A serialized file is malformed. Carries the byte offset of the failure."""

    def __init__(self, message, offset=None):
        if offset is not None:
            message = f"{message} (at byte offset {offset})"
        super().__init__(message)
        self.offset = offset


class NumericError(MocaError):
    """A non-finite value surfaced where the training loop requires finite numbers."""

    def __init__(self, message, record=None):
        super().__init__(message)
        self.record = record


class ConfigError(MocaError):
    """Invalid run configuration (unknown key, bad value, unknown method)."""
