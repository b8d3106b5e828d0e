"""Exception hierarchy shared by every module in the package."""


class SemcacheError(Exception):
    """Base class for all package errors."""


class ZeroVector(SemcacheError, ValueError):
    pass


class DimensionMismatch(SemcacheError, ValueError):
    pass


class EmptyInput(SemcacheError, ValueError):
    pass


class InvalidParameter(SemcacheError, ValueError):
    pass


class DuplicateId(SemcacheError, ValueError):
    pass


class NotFound(SemcacheError, LookupError):
    pass


class EmptyShard(SemcacheError, ValueError):
    pass


class TooFewSamples(SemcacheError, ValueError):
    pass


class IndexOutOfRange(SemcacheError, IndexError):
    pass


class DegenerateRepresentation(SemcacheError, ValueError):
    pass


class NoNodesAvailable(SemcacheError, RuntimeError):
    pass


class EmptyPrompt(SemcacheError, ValueError):
    pass


class ConfigError(SemcacheError, ValueError):
    pass


class NonMonotonicArrivals(SemcacheError, ValueError):
    pass


class ParseError(SemcacheError, ValueError):
    """Malformed record in a newline-delimited input file."""

    def __init__(self, path, line_no, reason):
        self.path = str(path)
        self.line_no = line_no
        self.reason = reason
        super().__init__(f"{self.path}:{line_no}: {reason}")


class BackendFailure(SemcacheError, RuntimeError):
    """A generation backend failed; carries the dispatch context."""

    def __init__(self, message, *, mode=None, reference_id=None, prompt=None):
        self.mode = mode
        self.reference_id = reference_id
        self.prompt = prompt
        super().__init__(f"{message} (mode={mode}, reference_id={reference_id})")


class BindError(SemcacheError, OSError):
    pass
