"""Exception types shared across the pipeline.

Every error raised by qasum derives from QasumError so the CLI can map
failures to exit codes without enumerating modules.
"""


class QasumError(Exception):
    """Base class for all qasum errors."""


class IoError(QasumError):
    """A path could not be read or written."""


class FormatError(QasumError):
    """A record or file did not match its documented format."""


class DuplicateIdError(QasumError):
    """An identifier that must be unique appeared twice."""


class ValidationError(QasumError):
    """A config or question bank field violated its contract."""


class PreconditionError(QasumError):
    """An operation was called with arguments outside its contract."""


class EmptyTextError(QasumError):
    """Text was empty (or had no alphanumeric tokens) where content is required."""


class DimensionMismatchError(QasumError):
    """Vector dimensions disagree."""


class EmptyIndexError(QasumError):
    """A search was issued against an index with no entries."""


class CorruptIndexError(QasumError):
    """An index file failed its magic, checksum, or length checks."""


class EmptyRetrievalError(QasumError):
    """Retrieval produced zero context paragraphs for a question."""


class NoAnswerError(QasumError):
    """The extractor found no answer in the retrieved context."""


class UnlocatableSourceError(QasumError):
    """A remote reply named a source sentence that is not in the context."""


class ZeroSourceError(QasumError):
    """The evaluation source text contains no tokens."""


class GatewayError(QasumError):
    """Base class for remote gateway failures."""


class GatewayTimeout(GatewayError):
    """The remote endpoint did not answer within the configured timeout."""


class GatewayHttpError(GatewayError):
    """The remote endpoint answered with a non-success HTTP status."""

    def __init__(self, status: int, message: str):
        super().__init__(message)
        self.status = status


class SchemaError(GatewayError):
    """A remote reply could not be parsed against the expected schema."""


class AuthError(GatewayError):
    """The API key is missing or was rejected."""
