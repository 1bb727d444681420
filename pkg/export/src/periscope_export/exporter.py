"""Traces a backbone with its taps promoted to named outputs and writes
the portable artifact set: TorchScript graph, catalog JSON, ModelGraph
spec JSON, and an export manifest with a checksum over the graph bytes.
"""

import hashlib
import json
from dataclasses import dataclass
from pathlib import Path

from .errors import ExportError
from .networks import VIT_TAP_BLOCKS, NetworkDef, build_model, network_def


def _params(module) -> int:
    return sum(p.numel() for p in module.parameters())


def _tapped_module(defn: NetworkDef, model):
    import torch
    from torch import nn

    if defn.kind == "cnn":

        class TappedResNet(nn.Module):
            def __init__(self, net):
                super().__init__()
                self.net = net

            def forward(self, x):
                n = self.net
                out = {}
                x = n.relu(n.bn1(n.conv1(x)))
                out["conv1"] = x
                x = n.layer1(n.maxpool(x))
                out["layer1"] = x
                x = n.layer2(x)
                out["layer2"] = x
                x = n.layer3(x)
                out["layer3"] = x
                x = n.layer4(x)
                out["layer4"] = x
                return out

        return TappedResNet(model)

    class TappedViT(nn.Module):
        def __init__(self, net):
            super().__init__()
            self.net = net

        def forward(self, x):
            n = self.net
            out = {}
            x = n._process_input(x)
            cls = n.class_token.expand(x.shape[0], -1, -1)
            x = torch.cat([cls, x], dim=1)
            x = n.encoder.dropout(x + n.encoder.pos_embedding)
            out["embed"] = x
            done = 0
            for block in n.encoder.layers:
                x = block(x)
                done += 1
                if done % 3 == 0:
                    out[f"block{done:02d}"] = x
            return out

    return TappedViT(model)


def _cumulative_learnables(defn: NetworkDef, model) -> list:
    """(tap name, cumulative parameter count) in forward order, plus a
    final row for the untapped head so the last count equals the total."""
    if defn.kind == "cnn":
        rows = [("conv1", _params(model.conv1) + _params(model.bn1))]
        for stage in ("layer1", "layer2", "layer3", "layer4"):
            rows.append((stage, rows[-1][1] + _params(getattr(model, stage))))
        rows.append(("fc", _params(model)))
    else:
        embed = _params(model.conv_proj) + model.class_token.numel() + model.encoder.pos_embedding.numel()
        rows = [("embed", embed)]
        blocks = list(model.encoder.layers)
        for done in VIT_TAP_BLOCKS:
            rows.append((f"block{done:02d}", embed + sum(_params(b) for b in blocks[:done])))
        rows.append(("head", _params(model)))
    return rows


@dataclass(frozen=True)
class ExportResult:
    network: str
    graph_path: Path
    spec_path: Path
    catalog_path: Path
    manifest_path: Path
    total_params: int
    tap_shapes: dict
    checksum: str


def export_network(name: str, out_dir, pretrained: bool = False, seed: int | None = None) -> ExportResult:
    """Build, trace, validate, and write one network's artifact set."""
    import torch

    defn = network_def(name)
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    model, source = build_model(defn, pretrained=pretrained, seed=seed)
    tapped = _tapped_module(defn, model).eval()

    example = torch.zeros(1, 3, defn.input_side, defn.input_side)
    try:
        with torch.no_grad():
            traced = torch.jit.trace(tapped, example, strict=False, check_trace=False)
    except Exception as exc:
        raise ExportError(f"{name}: tracing failed: {exc}") from exc

    graph_path = out_dir / f"{name}.pt"
    torch.jit.save(traced, str(graph_path))

    # validate in the reference runtime before writing any metadata
    reloaded = torch.jit.load(str(graph_path), map_location="cpu").eval()
    with torch.no_grad():
        outputs = reloaded(example)
    tap_shapes = {}
    for tap in defn.taps:
        if tap not in outputs:
            raise ExportError(f"{name}: traced graph produced no output for tap {tap!r}")
        raw = outputs[tap]
        if defn.kind == "cnn":
            if raw.ndim != 4 or raw.shape[0] != 1:
                raise ExportError(f"{name}/{tap}: expected (1, C, S, S), got {tuple(raw.shape)}")
            tap_shapes[tap] = (int(raw.shape[2]), int(raw.shape[3]), int(raw.shape[1]))
        else:
            if raw.ndim != 3 or raw.shape[0] != 1:
                raise ExportError(f"{name}/{tap}: expected (1, P, E), got {tuple(raw.shape)}")
            tap_shapes[tap] = (int(raw.shape[1]), int(raw.shape[2]))

    learnables = dict(_cumulative_learnables(defn, model))
    total = _params(model)
    catalog = {
        "name": name,
        "total_params": total,
        "input_side": defn.input_side,
        "layers": [
            {"name": tap, "cum_learnables": learnables[tap], "shape": list(tap_shapes[tap])}
            for tap in defn.taps
        ]
        + [{"name": "fc" if defn.kind == "cnn" else "head", "cum_learnables": total}],
    }
    catalog_path = out_dir / f"{name}.catalog.json"
    catalog_path.write_text(json.dumps(catalog, indent=2) + "\n")

    spec = {
        "graph": graph_path.name,
        "catalog": catalog_path.name,
        "taps": list(defn.taps),
        "input": {
            "side": defn.input_side,
            "channels": 3,
            "mean": list(defn.mean),
            "std": list(defn.std),
        },
    }
    spec_path = out_dir / f"{name}.json"
    spec_path.write_text(json.dumps(spec, indent=2) + "\n")

    checksum = "sha256:" + hashlib.sha256(graph_path.read_bytes()).hexdigest()
    manifest = {
        "network": name,
        "weights_source": source,
        "total_params": total,
        "input": spec["input"],
        "taps": [
            {"name": tap, "shape": list(tap_shapes[tap]), "cum_learnables": learnables[tap]}
            for tap in defn.taps
        ],
        "checksum": checksum,
    }
    manifest_path = out_dir / f"{name}.manifest.json"
    manifest_path.write_text(json.dumps(manifest, indent=2) + "\n")

    return ExportResult(
        network=name,
        graph_path=graph_path,
        spec_path=spec_path,
        catalog_path=catalog_path,
        manifest_path=manifest_path,
        total_params=total,
        tap_shapes=tap_shapes,
        checksum=checksum,
    )
