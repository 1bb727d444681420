"""Periocular verification from off-the-shelf network activations,
handcrafted descriptors, and trained linear-logistic score fusion."""

from .errors import (
    AnnotationError,
    AtdFormatError,
    AtdTruncationError,
    CatalogError,
    ComparatorError,
    ExtractionError,
    FusionTrainingError,
    MetricError,
    MissingFeatureError,
    PeriscopeError,
    TensorDataError,
    TrialPlanError,
)
from .evaluation import GridResult, ScoreSet, SweepResult, compute_eer, det_points, fusion_grid
from .fusion import FusionModel, LinearLogisticFusion, apply_fusion, train_fusion
from .handcrafted import (
    BlockHistogramDescriptor,
    KeypointSet,
    chi2_distance,
    detect_keypoints,
    hog_descriptor,
    lbp_descriptor,
    sift_match_score,
)
from .normalize import Strategy, TensorNormalizer, normalize_tensor, score_normalized, score_tensors
from .preprocess import (
    Circle,
    ImageRecord,
    canonicalize_orientation,
    crop_periocular,
    load_manifest,
    resize_to_network,
    save_manifest,
    scale_to_group_radius,
)
from .protocol import ScoreTable, Trial, TrialPlan, build_trials, score_trials
from .store import FeatureStore, make_comparator
from .tensors import (
    ActivationTensor,
    NetworkCatalogEntry,
    TensorKind,
    learnables_up_to,
    read_activation_dump,
    write_activation_dump,
)

__version__ = "0.1.0"

__all__ = [
    "ActivationTensor",
    "AnnotationError",
    "AtdFormatError",
    "AtdTruncationError",
    "BlockHistogramDescriptor",
    "CatalogError",
    "Circle",
    "ComparatorError",
    "ExtractionError",
    "FeatureStore",
    "FusionModel",
    "FusionTrainingError",
    "GridResult",
    "ImageRecord",
    "KeypointSet",
    "LinearLogisticFusion",
    "MetricError",
    "MissingFeatureError",
    "NetworkCatalogEntry",
    "PeriscopeError",
    "ScoreSet",
    "ScoreTable",
    "Strategy",
    "SweepResult",
    "TensorDataError",
    "TensorKind",
    "TensorNormalizer",
    "Trial",
    "TrialPlan",
    "TrialPlanError",
    "apply_fusion",
    "build_trials",
    "canonicalize_orientation",
    "chi2_distance",
    "compute_eer",
    "crop_periocular",
    "det_points",
    "detect_keypoints",
    "fusion_grid",
    "hog_descriptor",
    "lbp_descriptor",
    "learnables_up_to",
    "load_manifest",
    "make_comparator",
    "normalize_tensor",
    "read_activation_dump",
    "resize_to_network",
    "save_manifest",
    "scale_to_group_radius",
    "score_normalized",
    "score_tensors",
    "score_trials",
    "sift_match_score",
    "train_fusion",
    "write_activation_dump",
]
