"""Exception types shared across the package."""


class TriageError(Exception):
    """Base class for errors raised by this package."""


class MaskFormatError(TriageError):
    """Malformed or truncated mask payload. Carries the byte offset of the problem."""

    def __init__(self, message: str, offset: int | None = None):
        if offset is not None:
            message = f"{message} (byte {offset})"
        super().__init__(message)
        self.offset = offset


class FactSyntaxError(TriageError):
    """Syntax error in a fact file. Carries 1-based line and column."""

    def __init__(self, message: str, line: int, column: int):
        super().__init__(f"line {line}, column {column}: {message}")
        self.line = line
        self.column = column


class TheorySyntaxError(TriageError):
    """Syntax error in a serialized theory."""

    def __init__(self, message: str, line: int):
        super().__init__(f"line {line}: {message}")
        self.line = line


class ConfigError(TriageError):
    """Invalid or missing configuration (schemes, modes, learner settings)."""


class VerbalizeError(TriageError):
    """A clause or justification cannot be rendered to text."""


class DummyConstructionError(TriageError):
    """A rejected clause's body cannot be instantiated as a counterexample."""


class StaleVerdictError(TriageError):
    """The verdict was built against an outdated knowledge-base revision."""

    def __init__(self, seen_revision: int, current_revision: int):
        super().__init__(
            f"verdict was built at revision {seen_revision}, "
            f"knowledge base is at revision {current_revision}"
        )
        self.seen_revision = seen_revision
        self.current_revision = current_revision


class UnknownImageError(TriageError):
    """The referenced image id is not in the knowledge base."""


class LogCorruptedError(TriageError):
    """The knowledge-base event log cannot be replayed. Carries the record index."""

    def __init__(self, message: str, record_index: int, last_valid: int):
        super().__init__(f"record {record_index}: {message} (last valid record: {last_valid})")
        self.record_index = record_index
        self.last_valid = last_valid
