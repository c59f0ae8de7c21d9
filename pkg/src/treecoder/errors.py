"""Exception hierarchy shared across the engine."""


class TreecoderError(Exception):
    """Base class for all engine errors."""


class ConfigError(TreecoderError):
    """Invalid configuration; rejected before any model call."""


class ProviderError(TreecoderError):
    """A model backend failed and the run cannot continue."""


class TransportError(ProviderError):
    """Live backend transport failure after exhausting retries."""


class MissingScriptEntry(ProviderError):
    """Scripted backend has no entry for the requested key."""

    def __init__(self, key):
        self.key = key
        super().__init__(f"no script entry for {key}")


class MalformedResponseError(TreecoderError):
    """Model output could not be parsed into the requested shape,
    even after one reformat attempt."""


class SandboxInfraError(TreecoderError):
    """The sandbox itself failed (interpreter missing, spawn error).
    Distinct from a test failure."""


class AccountingError(TreecoderError):
    """A token counter overflowed; accounting is no longer trustworthy."""


class MemoryStoreError(TreecoderError):
    """Memory store misuse: dimension mismatch, bad snapshot, embedder
    identity mismatch on load."""


class SuiteFormatError(TreecoderError):
    """A benchmark suite file is malformed."""


class WorkflowAborted(TreecoderError):
    """A run aborted mid-tree (provider failure after retries).

    Carries the partial trace so the harness can still account for the
    tokens spent before the abort.
    """

    def __init__(self, message, trace=None):
        super().__init__(message)
        self.trace = trace
