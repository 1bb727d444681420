"""Command-line pipeline driver.

Subcommands cover the batch flow end to end: ``prep`` (geometric
normalization), ``extract`` (network activations), ``features``
(handcrafted descriptors), ``score`` (trial scoring), ``fuse-train`` /
``fuse-apply`` (linear-logistic fusion), ``eval`` (EER/DET), ``sweep``
(per-layer curves), ``grid`` (CNN x ViT fusion grids), and ``report``
(bundled artifacts).  Flags may come from a TOML config file; explicit
flags win.  The feature store root defaults to ``$PERISCOPE_CACHE``.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

try:
    import tomllib
except ModuleNotFoundError:  # Python 3.10
    import tomli as tomllib

from .errors import PeriscopeError
from .evaluation import (
    ScoreSet,
    compute_eer,
    fusion_grid,
    select_operating_points,
    selection_summary,
    sweep_from_tables,
    sweep_summary,
    write_det_csv,
    write_grid_csv,
    write_heatmap_pgm,
    write_summary_json,
    write_sweep_csv,
)
from .fusion import fuse_tables, load_fusion_model, save_fusion_model, train_fusion
from .inference import extract_to_store, load_model_graph
from .preprocess import load_manifest, read_grayscale, run_prep
from .protocol import build_trials, load_plan, load_scores, save_plan, save_scores, score_trials
from .store import FeatureStore, compute_handcrafted, make_comparator, sanitize_layer
from .tensors import learnables_up_to

log = logging.getLogger(__name__)

DEFAULTS = {
    "seed": 42,
    "jobs": 1,
    "strategy": "per-channel",
    "kinds": "lbp,hog,sift",
    "comparators": "lbp,hog,sift",
    "budget": 2_000_000,
}


def _resolve_cache(args) -> FeatureStore:
    root = args.cache or os.environ.get("PERISCOPE_CACHE") or ".periscope-cache"
    return FeatureStore(root)


def _load_plan_arg(args):
    if getattr(args, "plan", None):
        return load_plan(args.plan)
    if getattr(args, "manifest", None):
        plan = build_trials(load_manifest(args.manifest))
        if getattr(args, "save_plan", None):
            save_plan(plan, args.save_plan)
        return plan
    raise PeriscopeError("either --plan or --manifest is required")


def _map_jobs(fn, items, jobs: int) -> list:
    if jobs <= 1:
        return [fn(item) for item in items]
    with ThreadPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(fn, items))


def _image_dir(args) -> Path:
    if args.images:
        return Path(args.images)
    return Path(args.manifest).parent


def cmd_prep(args) -> int:
    manifest = run_prep(args.manifest, args.out)
    print(manifest)
    return 0


def cmd_features(args) -> int:
    store = _resolve_cache(args)
    records = load_manifest(args.manifest)
    image_dir = _image_dir(args)
    kinds = tuple(k.strip() for k in args.kinds.split(",") if k.strip())

    def one(rec):
        compute_handcrafted(store, rec.image_id, read_grayscale(image_dir / rec.path), kinds)

    _map_jobs(one, records, args.jobs)
    print(f"features: {len(records)} image(s) x {','.join(kinds)}")
    return 0


def cmd_extract(args) -> int:
    store = _resolve_cache(args)
    graph = load_model_graph(args.spec)
    records = load_manifest(args.manifest)
    taps = [t.strip() for t in args.taps.split(",") if t.strip()] if args.taps else None
    count = extract_to_store(graph, records, _image_dir(args), store, taps)
    print(f"extract: {count} tensor(s) from {len(records)} image(s)")
    return 0


def cmd_score(args) -> int:
    store = _resolve_cache(args)
    plan = _load_plan_arg(args)
    table = score_trials(plan, make_comparator(store, args.comparator))
    save_scores(table, args.out)
    print(f"score: {len(table)} trial(s), {table.n_missing} missing -> {args.out}")
    return 0


def _comparator_names(args, n_tables: int) -> list:
    if args.names:
        names = [n.strip() for n in args.names.split(",") if n.strip()]
        if len(names) != n_tables:
            raise PeriscopeError(f"{len(names)} names for {n_tables} score files")
        return names
    return [Path(p).stem for p in args.scores]


def cmd_fuse_train(args) -> int:
    tables = [load_scores(p) for p in args.scores]
    model = train_fusion(tables, _comparator_names(args, len(tables)))
    save_fusion_model(model, args.out)
    print(f"fuse-train: {len(tables)} comparator(s), {model.iterations} iteration(s) -> {args.out}")
    return 0


def cmd_fuse_apply(args) -> int:
    model = load_fusion_model(args.model)
    tables = [load_scores(p) for p in args.scores]
    fused = fuse_tables(model, tables)
    save_scores(fused, args.out)
    print(f"fuse-apply: {len(fused)} trial(s) -> {args.out}")
    return 0


def cmd_eval(args) -> int:
    table = load_scores(args.scores)
    scores = ScoreSet.from_table(table)
    eer = compute_eer(scores)
    if args.det:
        write_det_csv(scores, args.det)
    if args.out:
        write_summary_json(
            {
                "eer": eer,
                "n_genuine": int(scores.genuine.size),
                "n_impostor": int(scores.impostor.size),
                "n_missing": table.n_missing,
            },
            args.out,
        )
    print(f"EER {eer:.4f}% (genuine {scores.genuine.size}, impostor {scores.impostor.size}, "
          f"missing {table.n_missing})")
    return 0


def _table_or_gap(store, plan, comp_id: str):
    """Score one comparator; a layer with no usable scores becomes a gap."""
    table = score_trials(plan, make_comparator(store, comp_id))
    if not table.genuine_scores() or not table.impostor_scores():
        return None
    return table


def _sweep_network(spec_path, store, plan, strategy):
    graph = load_model_graph(spec_path)
    network = graph.catalog.name
    entries = []
    for layer in graph.taps:
        table = _table_or_gap(store, plan, f"{network}:{layer}:{strategy}")
        entries.append((layer, table, learnables_up_to(graph.catalog, layer)))
    return sweep_from_tables(network, strategy, entries), entries


def cmd_sweep(args) -> int:
    store = _resolve_cache(args)
    plan = _load_plan_arg(args)
    sweep, _ = _sweep_network(args.spec, store, plan, args.strategy)
    write_sweep_csv(sweep, args.out)
    best = sweep.best()
    print(f"sweep: {sweep.network}/{sweep.strategy}, best {best.layer} at {best.eer:.4f}% -> {args.out}")
    return 0


def cmd_grid(args) -> int:
    store = _resolve_cache(args)
    plan = _load_plan_arg(args)
    row_sweep, row_entries = _sweep_network(args.cnn, store, plan, args.strategy)
    col_sweep, col_entries = _sweep_network(args.vit, store, plan, args.strategy)
    grid = fusion_grid(row_sweep.network, col_sweep.network, row_entries, col_entries)
    prefix = Path(args.out_prefix)
    prefix.parent.mkdir(parents=True, exist_ok=True)
    write_grid_csv(grid, Path(f"{prefix}.csv"))
    write_heatmap_pgm(grid, Path(f"{prefix}.pgm"))
    selection = select_operating_points(grid, args.budget)
    write_summary_json(selection_summary(grid, selection), Path(f"{prefix}.selection.json"))
    best = selection["best"]
    print(f"grid: {grid.row_network} x {grid.col_network}, best {best.row_layer}+{best.col_layer} "
          f"at {best.eer:.4f}% -> {prefix}.csv/.pgm/.selection.json")
    return 0


def cmd_report(args) -> int:
    store = _resolve_cache(args)
    plan = _load_plan_arg(args)
    out = Path(args.out)
    (out / "scores").mkdir(parents=True, exist_ok=True)
    (out / "det").mkdir(parents=True, exist_ok=True)
    comparators = [c.strip() for c in args.comparators.split(",") if c.strip()]
    if not comparators:
        raise PeriscopeError("report needs at least one comparator")
    summary: dict = {
        "trials": {"genuine": plan.n_genuine, "impostor": plan.n_impostor},
        "comparators": {},
    }
    tables = []
    for comp_id in comparators:
        table = score_trials(plan, make_comparator(store, comp_id))
        tables.append(table)
        stem = sanitize_layer(comp_id)
        save_scores(table, out / "scores" / f"{stem}.csv")
        scores = ScoreSet.from_table(table)
        write_det_csv(scores, out / "det" / f"{stem}.csv")
        summary["comparators"][comp_id] = {
            "eer": compute_eer(scores),
            "n_missing": table.n_missing,
        }
    if len(tables) > 1:
        model = train_fusion(tables, comparators)
        save_fusion_model(model, out / "fusion.json")
        fused = fuse_tables(model, tables)
        save_scores(fused, out / "scores" / "fused.csv")
        fused_scores = ScoreSet.from_table(fused)
        write_det_csv(fused_scores, out / "det" / "fused.csv")
        summary["fusion"] = {
            "eer": compute_eer(fused_scores),
            "comparators": list(model.comparator_ids),
            "weights": list(model.weights),
            "n_missing": fused.n_missing,
        }
    if args.spec:
        (out / "sweeps").mkdir(exist_ok=True)
        summary["sweeps"] = []
        for spec_path in args.spec:
            sweep, _ = _sweep_network(spec_path, store, plan, args.strategy)
            write_sweep_csv(sweep, out / "sweeps" / f"{sanitize_layer(sweep.network)}.csv")
            summary["sweeps"].append(sweep_summary(sweep))
    write_summary_json(summary, out / "summary.json")
    print(f"report: {len(comparators)} comparator(s) -> {out}")
    return 0


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="periscope",
        description="Periocular verification pipeline: preprocessing, activation and "
        "handcrafted features, trial scoring, score fusion, and EER evaluation.",
    )
    parser.add_argument("--config", help="TOML file supplying defaults for any flag")
    parser.add_argument("--seed", type=int, help="seed for synthetic-data generators (default 42)")
    parser.add_argument("--jobs", type=int, help="worker threads for per-image work (default 1)")
    parser.add_argument("--verbose", action="store_true", help="log progress details")
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, fn, help_text):
        p = sub.add_parser(name, help=help_text)
        p.set_defaults(func=fn)
        return p

    p = add("prep", cmd_prep, "preprocess an annotated manifest into canonical crops")
    p.add_argument("--manifest", required=True, help="input manifest (JSON-lines of image records)")
    p.add_argument("--out", required=True, help="output directory for PNGs + updated manifest")

    p = add("features", cmd_features, "compute handcrafted descriptors into the feature store")
    p.add_argument("--manifest", required=True, help="preprocessed manifest")
    p.add_argument("--images", help="image directory (default: manifest directory)")
    p.add_argument("--cache", help="feature store root (default: $PERISCOPE_CACHE)")
    p.add_argument("--kinds", help="comma list from lbp,hog,sift (default all)")

    p = add("extract", cmd_extract, "run an exported model graph and dump activations")
    p.add_argument("--spec", required=True, help="ModelGraph spec JSON")
    p.add_argument("--manifest", required=True, help="preprocessed manifest")
    p.add_argument("--images", help="image directory (default: manifest directory)")
    p.add_argument("--cache", help="feature store root")
    p.add_argument("--taps", help="comma list of taps (default: all exported)")

    p = add("score", cmd_score, "score every trial of a plan with one comparator")
    p.add_argument("--comparator", required=True,
                   help="lbp | hog | sift | network:layer:strategy")
    p.add_argument("--plan", help="trial plan JSON-lines")
    p.add_argument("--manifest", help="build the plan from this manifest instead")
    p.add_argument("--save-plan", help="also write the built plan here")
    p.add_argument("--cache", help="feature store root")
    p.add_argument("--out", required=True, help="output score CSV")

    p = add("fuse-train", cmd_fuse_train, "train linear-logistic fusion weights")
    p.add_argument("--scores", nargs="+", required=True, help="aligned score CSVs, one per comparator")
    p.add_argument("--names", help="comma list of comparator names (default: file stems)")
    p.add_argument("--out", required=True, help="output fusion model JSON")

    p = add("fuse-apply", cmd_fuse_apply, "apply a fusion model to aligned score CSVs")
    p.add_argument("--model", required=True, help="fusion model JSON")
    p.add_argument("--scores", nargs="+", required=True, help="aligned score CSVs")
    p.add_argument("--out", required=True, help="output fused score CSV")

    p = add("eval", cmd_eval, "compute EER (and optionally DET points) from a score CSV")
    p.add_argument("--scores", required=True, help="score CSV")
    p.add_argument("--det", help="write DET operating points CSV here")
    p.add_argument("--out", help="write metrics JSON here")

    p = add("sweep", cmd_sweep, "per-layer EER sweep for one network")
    p.add_argument("--spec", required=True, help="ModelGraph spec JSON")
    p.add_argument("--strategy", help="normalization strategy (default per-channel)")
    p.add_argument("--plan", help="trial plan JSON-lines")
    p.add_argument("--manifest", help="build the plan from this manifest instead")
    p.add_argument("--cache", help="feature store root")
    p.add_argument("--out", required=True, help="output sweep CSV")

    p = add("grid", cmd_grid, "CNN x ViT layer-pair fusion grid with heatmap")
    p.add_argument("--cnn", required=True, help="row network ModelGraph spec JSON")
    p.add_argument("--vit", required=True, help="column network ModelGraph spec JSON")
    p.add_argument("--strategy", help="normalization strategy (default per-channel)")
    p.add_argument("--plan", help="trial plan JSON-lines")
    p.add_argument("--manifest", help="build the plan from this manifest instead")
    p.add_argument("--cache", help="feature store root")
    p.add_argument("--budget", type=int, help="learnables budget for low-depth selection")
    p.add_argument("--out-prefix", required=True, help="prefix for .csv/.pgm/.selection.json")

    p = add("report", cmd_report, "score, fuse, and bundle summary artifacts")
    p.add_argument("--plan", help="trial plan JSON-lines")
    p.add_argument("--manifest", help="build the plan from this manifest instead")
    p.add_argument("--cache", help="feature store root")
    p.add_argument("--comparators", help="comma list of comparator ids (default lbp,hog,sift)")
    p.add_argument("--spec", action="append", help="also sweep this ModelGraph spec (repeatable)")
    p.add_argument("--strategy", help="normalization strategy for sweeps")
    p.add_argument("--out", required=True, help="report output directory")

    return parser


def _apply_config(args: argparse.Namespace) -> None:
    config = {}
    if args.config:
        try:
            with open(args.config, "rb") as fh:
                config = tomllib.load(fh)
        except (OSError, tomllib.TOMLDecodeError) as exc:
            raise PeriscopeError(f"cannot read config {args.config}: {exc}") from exc
    for key, value in vars(args).copy().items():
        if value is None and key in config:
            setattr(args, key, config[key])
    for key, value in DEFAULTS.items():
        if getattr(args, key, None) is None and hasattr(args, key):
            setattr(args, key, value)


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        _apply_config(args)
        return args.func(args)
    except (PeriscopeError, OSError) as exc:
        print(f"periscope: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
