"""Exception hierarchy shared across the pipeline."""


class PeriscopeError(Exception):
    """Base class for all pipeline errors."""


class AtdFormatError(PeriscopeError):
    """Activation-dump file has a malformed magic, kind, or shape header."""


class AtdTruncationError(AtdFormatError):
    """Activation-dump payload size disagrees with the declared shape."""


class TensorDataError(PeriscopeError):
    """Tensor payload violates a data invariant (non-finite values, bad shape)."""


class CatalogError(PeriscopeError):
    """Network catalog is missing or inconsistent (unknown layer, absent metadata)."""


class ComparatorError(PeriscopeError):
    """Two features cannot be compared (strategy, kind, or shape mismatch)."""


class MissingFeatureError(PeriscopeError):
    """A trial references a feature that is absent from the store."""


class AnnotationError(PeriscopeError):
    """Image annotations are degenerate or out of bounds."""


class TrialPlanError(PeriscopeError):
    """Manifest cannot produce a valid verification trial plan."""


class FusionTrainingError(PeriscopeError):
    """Score fusion cannot be trained on the given score sets."""


class MetricError(PeriscopeError):
    """Score populations cannot support the requested metric."""


class ExtractionError(PeriscopeError):
    """Graph execution produced tensors that disagree with the catalog."""
