"""Exception hierarchy shared by all engine modules."""


class ExecrlError(Exception):
    """Base class for all engine errors."""


# --- sandbox ---------------------------------------------------------------

class SandboxUnavailable(ExecrlError):
    """Interpreter or shim missing: an environment fault, not a candidate fault."""


class InternalIOError(ExecrlError):
    """Pipe or scratch-file failure inside the executor."""


# --- classification --------------------------------------------------------

class MismatchedOutcomeCount(ExecrlError):
    """Number of raw outcomes does not match the problem's test count."""


class LineOutOfRange(ExecrlError):
    """error_line exceeds the candidate's source line count (upstream bug)."""


class EmptyInput(ExecrlError):
    """An aggregate was requested over an empty collection."""


# --- rewards ---------------------------------------------------------------

class EmptySpanWithPenalty(ExecrlError):
    """A penalised error category arrived with an empty token span."""


class ZeroTests(ExecrlError):
    """Pass-ratio reward requested with no test tally at all."""


# --- losses ----------------------------------------------------------------

class MissingLogprobs(ExecrlError):
    """A loss needs per-token log-probabilities that are absent."""


class SpanOutOfRange(ExecrlError):
    """Token span does not fit inside [0, T]."""


# --- buffer ----------------------------------------------------------------

class ValidationFailed(ExecrlError):
    """Entry rejected by the buffer because a domain invariant is broken."""


class EmptyBuffer(ExecrlError):
    """Sampling requested from a buffer that holds no entries."""


class MalformedRecord(ExecrlError):
    """A wire-format line could not be parsed into an entry."""


# --- training --------------------------------------------------------------

class NonFiniteGradient(ExecrlError):
    """A parameter update produced NaN or infinite gradient entries."""


# --- metrics ---------------------------------------------------------------

class InvalidCounts(ExecrlError):
    """pass@k called with counts violating 0 <= c <= n, 1 <= k <= n."""
