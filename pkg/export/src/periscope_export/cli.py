"""Command line front end: ``export`` writes the artifact set for one or
all networks; ``dump`` runs an exported graph over images into ATD files.
"""

import argparse
import sys

from .dumps import dump_reference_activations
from .errors import ExportError
from .exporter import export_network
from .networks import NETWORKS


def _cmd_export(args) -> int:
    names = sorted(NETWORKS) if args.all else [args.network]
    if names == [None]:
        raise ExportError("export needs --network NAME or --all")
    for name in names:
        result = export_network(name, args.out, pretrained=args.pretrained, seed=args.seed)
        shapes = ", ".join(f"{t}:{list(s)}" for t, s in result.tap_shapes.items())
        print(f"export: {name} ({result.total_params:,} params) -> {result.graph_path.name} [{shapes}]")
    return 0


def _cmd_dump(args) -> int:
    taps = [t.strip() for t in args.taps.split(",") if t.strip()] if args.taps else None
    written = dump_reference_activations(args.spec, args.images, args.out, taps)
    print(f"dump: {written} ATD file(s) -> {args.out}")
    return 0


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="periscope-export",
        description="Export tapped CNN/ViT graphs and reference activation dumps",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("export", help="write graph + catalog + spec + manifest for a network")
    p.add_argument("--network", choices=sorted(NETWORKS), help="network to export")
    p.add_argument("--all", action="store_true", help="export every supported network")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--pretrained", action="store_true", help="fetch zoo weights instead of seeded init")
    p.add_argument("--seed", type=int, help="override the per-network init seed")
    p.set_defaults(func=_cmd_export)

    p = sub.add_parser("dump", help="dump tap activations for a directory of images")
    p.add_argument("--spec", required=True, help="ModelGraph spec JSON")
    p.add_argument("--images", required=True, help="directory of input images")
    p.add_argument("--out", required=True, help="output directory for ATD files")
    p.add_argument("--taps", help="comma list of taps (default: all exported)")
    p.set_defaults(func=_cmd_dump)

    return parser


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ExportError as exc:
        print(f"periscope-export: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"periscope-export: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
