"""Exception hierarchy for the pipeline."""


class OliveError(Exception):
    """Base class for all pipeline errors."""


class MalformedStreamError(OliveError):
    """Audio byte stream violates the PCM framing contract."""

    def __init__(self, message: str, offset: int):
        super().__init__(message)
        self.offset = offset


class SequencingError(OliveError):
    """Items arrived out of seq order for a session."""


class QueueClosedError(OliveError):
    """Enqueue or dequeue attempted on a closed queue."""


class ConfigError(OliveError):
    """Invalid runtime configuration; message names the offending fields."""


class ProfileMismatchError(OliveError):
    """Frame features disagree with the session's feature profile."""


class SessionFaultedError(OliveError):
    """The session hit a fatal error and rejects further input."""


class BackendProtocolError(OliveError):
    """A remote backend broke the envelope/schema contract."""


class BackendUnavailableError(OliveError):
    """A backend call failed after exhausting its retry budget."""


class TraceFormatError(OliveError):
    """A replay trace line could not be parsed."""

    def __init__(self, message: str, line_no: int):
        super().__init__(f"line {line_no}: {message}")
        self.line_no = line_no
