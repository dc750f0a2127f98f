"""Exception hierarchy shared by every module and mapped to CLI exit codes."""


class PolyConsensusError(Exception):
    """Base class for all package errors."""

    exit_code = 3


class InvalidInputError(PolyConsensusError, ValueError):
    exit_code = 2


class ValidationError(InvalidInputError):
    """An input object violates a domain invariant (e.g. self-intersecting polygon)."""


class SchemaError(InvalidInputError):
    """A file does not match its schema. ``pointer`` is a JSON pointer to the offending node."""

    def __init__(self, message, pointer=""):
        super().__init__(f"{pointer or '/'}: {message}")
        self.pointer = pointer


class NotFoundError(InvalidInputError, LookupError):
    pass


class UnsupportedFormatError(InvalidInputError):
    pass


class ResourceLimitError(PolyConsensusError):
    pass


class OutOfDomainError(PolyConsensusError):
    pass


class NoContourError(PolyConsensusError):
    pass


class GenerationError(PolyConsensusError):
    pass
