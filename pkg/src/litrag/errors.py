"""Exception hierarchy shared across the litrag pipeline."""


class LitragError(Exception):
    """Base class for all litrag errors."""


class IngestError(LitragError):
    """A source document could not be read or parsed."""


class EmptyDocumentError(IngestError):
    """A document had no usable text after normalization."""


class ProviderError(LitragError):
    """A chat or embedding backend call failed.

    ``retryable`` tells callers whether the failure class (rate limit,
    transient server error, network) could succeed on a fresh attempt.
    """

    def __init__(self, message: str, *, retryable: bool = False):
        super().__init__(message)
        self.retryable = retryable


class IndexingError(LitragError):
    """The vector index was built or queried inconsistently."""


class GraphError(LitragError):
    """The property graph violated an integrity constraint."""


class EngineError(LitragError):
    """The retrieval engine was used before its indexes were loaded."""


class TestsetError(LitragError):
    """Synthetic test-set generation could not proceed."""


class AnnotationError(LitragError):
    """Annotations did not match the test set they describe."""


class MetricError(LitragError):
    """A metric received invalid input or an unparseable judgment."""


class EvalError(LitragError):
    """An evaluation run was misconfigured or produced an inconsistent report."""
