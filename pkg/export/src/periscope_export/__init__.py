"""One-shot tooling that exports tapped CNN/ViT backbones as portable
TorchScript graphs plus catalog/spec/manifest JSON, and dumps reference
ATD activations for cross-implementation parity checks."""

from .atd import KIND_CNN, KIND_VIT, read_atd, write_atd
from .dumps import dump_reference_activations, prepare_batch
from .errors import ExportError
from .exporter import ExportResult, export_network
from .networks import NETWORKS, NetworkDef, build_model, network_def

__all__ = [
    "ExportError",
    "ExportResult",
    "KIND_CNN",
    "KIND_VIT",
    "NETWORKS",
    "NetworkDef",
    "build_model",
    "dump_reference_activations",
    "export_network",
    "network_def",
    "prepare_batch",
    "read_atd",
    "write_atd",
]
