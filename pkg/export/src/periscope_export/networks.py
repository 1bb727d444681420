"""The six supported backbones and their tap plans.

Taps are intermediate layers promoted to graph outputs. CNN taps cover
the stem plus the four residual stages (spatial sizes 112/56/28/14/7 at
a 224 input); ViT taps cover the embedded token sequence and every third
encoder block (577 tokens at a 384 input, patch 16).
"""

from dataclasses import dataclass

from .errors import ExportError

IMAGENET_MEAN = (0.485, 0.456, 0.406)
IMAGENET_STD = (0.229, 0.224, 0.225)

CNN_TAPS = ("conv1", "layer1", "layer2", "layer3", "layer4")
VIT_TAPS = ("embed", "block03", "block06", "block09", "block12")
VIT_TAP_BLOCKS = (3, 6, 9, 12)


@dataclass(frozen=True)
class NetworkDef:
    name: str
    kind: str  # "cnn" or "vit"
    input_side: int
    mean: tuple
    std: tuple
    seed: int
    taps: tuple


NETWORKS = {
    d.name: d
    for d in (
        NetworkDef("r18", "cnn", 224, IMAGENET_MEAN, IMAGENET_STD, 1018, CNN_TAPS),
        NetworkDef("r50", "cnn", 224, IMAGENET_MEAN, IMAGENET_STD, 1050, CNN_TAPS),
        NetworkDef("r101", "cnn", 224, IMAGENET_MEAN, IMAGENET_STD, 1101, CNN_TAPS),
        NetworkDef("vit_tiny", "vit", 384, (0.5, 0.5, 0.5), (0.5, 0.5, 0.5), 2192, VIT_TAPS),
        NetworkDef("vit_small", "vit", 384, (0.5, 0.5, 0.5), (0.5, 0.5, 0.5), 2384, VIT_TAPS),
        NetworkDef("vit_base", "vit", 384, (0.5, 0.5, 0.5), (0.5, 0.5, 0.5), 2768, VIT_TAPS),
    )
}

# (hidden_dim, mlp_dim, heads) for the 12-block, patch-16 ViT family
_VIT_GEOMETRY = {
    "vit_tiny": (192, 768, 3),
    "vit_small": (384, 1536, 6),
    "vit_base": (768, 3072, 12),
}

_RESNET_BUILDERS = {"r18": "resnet18", "r50": "resnet50", "r101": "resnet101"}

_PRETRAINED_TAG = {"r18": "torchvision:ResNet18_Weights.IMAGENET1K_V1",
                   "r50": "torchvision:ResNet50_Weights.IMAGENET1K_V1",
                   "r101": "torchvision:ResNet101_Weights.IMAGENET1K_V1"}


def network_def(name: str) -> NetworkDef:
    try:
        return NETWORKS[name]
    except KeyError:
        raise ExportError(f"{name}: unknown network (choose from {sorted(NETWORKS)})") from None


def build_model(defn: NetworkDef, pretrained: bool = False, seed: int | None = None):
    """Instantiate the backbone in eval mode; returns (model, weights_source).

    Without ``pretrained``, parameters come from the default initializers
    under a fixed per-network seed, so rebuilds are bit-identical.
    """
    import torch
    import torchvision.models as tvm
    from torchvision.models.vision_transformer import VisionTransformer

    seed = defn.seed if seed is None else seed
    torch.manual_seed(seed)
    try:
        if defn.kind == "cnn":
            builder = getattr(tvm, _RESNET_BUILDERS[defn.name])
            if pretrained:
                weights = tvm.get_model_weights(_RESNET_BUILDERS[defn.name]).IMAGENET1K_V1
                model = builder(weights=weights)
                source = _PRETRAINED_TAG[defn.name]
            else:
                model = builder(weights=None)
                source = f"random:seed={seed}"
        else:
            if pretrained:
                raise ExportError(
                    f"{defn.name}: no pretrained 384-input export path is wired up; "
                    "drop --pretrained to use seeded initialization"
                )
            hidden, mlp, heads = _VIT_GEOMETRY[defn.name]
            model = VisionTransformer(
                image_size=defn.input_side, patch_size=16,
                num_layers=12, num_heads=heads, hidden_dim=hidden, mlp_dim=mlp,
            )
            source = f"random:seed={seed}"
    except ExportError:
        raise
    except Exception as exc:  # weight download or build failure surfaces the network name
        raise ExportError(f"{defn.name}: could not build model: {exc}") from exc
    model.eval()
    return model, source
