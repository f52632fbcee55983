#!/usr/bin/env python3
"""Command-line entry point for tactile-maps.

This can be run as: python -m tactile_maps
"""

import argparse
import asyncio
import hashlib
import logging
import re
import sys
from dataclasses import replace
from pathlib import Path
from typing import Callable, Dict, List, Optional, Sequence

from . import __version__
from .augment import PairAugmenter, preview_grid
from .config import ConfigError, TactileMapsConfig
from .dataset import (
    DatasetError,
    ImportOptions,
    MockMapServer,
    PublishedDatasetImporter,
    Split,
    SplitPolicy,
    StaticMapClient,
    load_pairs,
    load_png,
    manifest_hash,
    read_locations,
    read_manifest,
    save_png,
    split_dataset,
    synth_dataset,
    write_manifest,
    write_pairs,
)
from .dataset.fetch import MOCK_BASE_URL
from .formatting import (
    ReportFormat,
    format_class_fractions,
    format_table_summary,
    read_metrics_jsonl,
    render_report,
    write_metrics_jsonl,
)
from .gan import CheckpointError, ModelShapeError, load_checkpoint
from .metrics import (
    ModelId,
    ZoomCompatibilityError,
    check_compatibility,
    class_pixel_fractions,
    diff_table,
    evaluate_run,
)
from .palette import segment_image, texturize
from .train import TrainError, infer_batch, train

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_USAGE = 2
EXIT_CONFIG = 3
EXIT_ZOOM = 4
EXIT_DATASET = 5
EXIT_MODEL = 6

RESOLVED_CONFIG = "config.resolved.yaml"

_KEY_QUERY_RE = re.compile(r"([?&]key=)[^&\s\"'`)\]]+", re.IGNORECASE)


def exit_code_for(error: BaseException) -> int:
    if isinstance(error, ConfigError):
        return EXIT_CONFIG
    if isinstance(error, ZoomCompatibilityError):
        return EXIT_ZOOM
    if isinstance(error, DatasetError):
        return EXIT_DATASET
    if isinstance(error, (ModelShapeError, CheckpointError, TrainError)):
        return EXIT_MODEL
    return EXIT_FAILURE


def sanitise_error(text: str, secrets: Sequence[Optional[str]] = ()) -> str:
    """Scrub API keys from error text before it is printed or logged."""
    text = _KEY_QUERY_RE.sub(r"\1***", text)
    for secret in secrets:
        if secret:
            text = text.replace(secret, "***")
    return " ".join(text.split())


def configure_logging(level_name: str, log_file: Optional[str] = None) -> None:
    level_map = {
        "debug": logging.DEBUG,
        "info": logging.INFO,
        "warning": logging.WARNING,
        "error": logging.ERROR,
    }
    level = level_map.get(level_name, logging.INFO)

    handlers: List[logging.Handler] = []
    if log_file:
        try:
            log_path = Path(log_file)
            log_path.parent.mkdir(parents=True, exist_ok=True)
            handlers.append(logging.FileHandler(log_path, encoding="utf-8"))
        except OSError:
            handlers.append(logging.StreamHandler(sys.stderr))
    else:
        handlers.append(logging.StreamHandler(sys.stderr))

    # Reset root handlers so repeated main() calls do not duplicate output
    root_logger = logging.getLogger()
    for h in list(root_logger.handlers):
        root_logger.removeHandler(h)
    logging.basicConfig(
        level=level,
        format="%(asctime)s [%(levelname)s] %(name)s: %(message)s",
        handlers=handlers,
    )
    logging.getLogger("tactile_maps").setLevel(level)
    # request URLs carry the API key
    logging.getLogger("httpx").setLevel(max(level, logging.WARNING))


class RunLayout:
    """Directory layout of one ``--out`` directory."""

    def __init__(self, root: Path):
        self.root = root

    def _sub(self, name: str) -> Path:
        path = self.root / name
        path.mkdir(parents=True, exist_ok=True)
        return path

    @property
    def images(self) -> Path:
        return self._sub("images")

    @property
    def manifests(self) -> Path:
        return self._sub("manifests")

    @property
    def checkpoints(self) -> Path:
        return self._sub("checkpoints")

    @property
    def metrics(self) -> Path:
        return self._sub("metrics")

    @property
    def reports(self) -> Path:
        return self._sub("reports")

    @property
    def resolved_config(self) -> Path:
        return self.root / RESOLVED_CONFIG


# === SUBCOMMANDS ===


def cmd_fetch(args: argparse.Namespace, config: TactileMapsConfig, out: RunLayout) -> int:
    records = read_locations(args.locations)
    live = args.live or config.get("fetch", "live")
    settings = config.fetch_settings()
    if live:
        if not settings.api_key:
            raise ConfigError("Live fetching needs an API key; set TACTILE_API_KEY")
        transport = None
    else:
        transport = MockMapServer().transport
        settings = replace(settings, api_key=None, base_url=MOCK_BASE_URL)
        logger.info("Offline mode: serving tiles from the mock map server")

    async def _run():
        async with StaticMapClient(settings, transport=transport, palette=config.palette()) as client:
            return await client.fetch_locations(records, zooms=args.zooms)

    pairs = asyncio.run(_run())
    manifest = out.manifests / f"{args.name}.jsonl"
    write_pairs(pairs, out.root, manifest)
    print(f"Fetched {len(pairs)} pairs ({'live' if live else 'offline'}) -> {manifest}")
    return EXIT_OK


def cmd_import(args: argparse.Namespace, config: TactileMapsConfig, out: RunLayout) -> int:
    options = ImportOptions(
        include=args.include or ["*.png"],
        exclude=args.exclude or [],
        zoom=args.zoom,
        split=Split(args.split),
        country=args.country,
    )
    result = PublishedDatasetImporter(options, config.palette()).import_pairs(args.root)
    manifest = out.manifests / f"{args.name}.jsonl"
    write_pairs(result.pairs, out.root, manifest)
    for line in result.errors:
        logger.warning(f"Import failed: {line}")
    print(
        f"Imported {result.success_count} pairs -> {manifest} "
        f"({len(result.errors)} failed, {len(result.skipped)} skipped)"
    )
    return EXIT_OK


def cmd_synth(args: argparse.Namespace, config: TactileMapsConfig, out: RunLayout) -> int:
    zoom = args.zoom if args.zoom is not None else config.get("synth", "zoom")
    n = args.n if args.n is not None else config.get("synth", "n")
    profile = config.synth_profile(zoom=zoom)
    palette = config.palette()
    pairs = synth_dataset(n, profile, seed=profile.seed, palette=palette)
    manifest = out.manifests / f"synth-z{zoom}.jsonl"
    write_pairs(pairs, out.root, manifest)

    fractions = class_pixel_fractions([segment_image(p.tactile, palette) for p in pairs])
    breakdown = out.reports / "class_breakdown.csv"
    breakdown.write_text(format_class_fractions(fractions), encoding="utf-8")
    print(f"Synthesized {len(pairs)} zoom-{zoom} pairs -> {manifest}")
    return EXIT_OK


def cmd_split(args: argparse.Namespace, config: TactileMapsConfig, out: RunLayout) -> int:
    manifest = Path(args.manifest)
    policy = SplitPolicy(train=args.train, test=args.test, seed=config.get("train", "seed"))
    records = split_dataset(read_manifest(manifest), policy)
    target = Path(args.output) if args.output else manifest.with_name(f"{manifest.stem}-split.jsonl")
    write_manifest(records, target)
    counts: Dict[str, int] = {}
    for record in records:
        counts[record.split.value] = counts.get(record.split.value, 0) + 1
    summary = ", ".join(f"{k}={v}" for k, v in sorted(counts.items()))
    print(f"Split {len(records)} pairs ({summary}) -> {target}")
    return EXIT_OK


def cmd_augment_preview(args: argparse.Namespace, config: TactileMapsConfig, out: RunLayout) -> int:
    pairs = load_pairs(args.manifest)[: args.count]
    if not pairs:
        raise DatasetError(f"Manifest {args.manifest} holds no pairs")
    augmenter = PairAugmenter(config.augment_params(), args.grey_recolor, config.palette())
    augmented = [augmenter(p, args.epoch, i) for i, p in enumerate(pairs)]
    path = save_png(preview_grid(pairs, augmented), out.reports / "augment-preview.png")
    print(f"Wrote preview of {len(pairs)} pairs -> {path}")
    return EXIT_OK


def _combined_hash(manifests: Sequence[str]) -> str:
    hashes = [manifest_hash(m) for m in manifests]
    if len(hashes) == 1:
        return hashes[0]
    return hashlib.sha256("\n".join(hashes).encode("ascii")).hexdigest()


def cmd_train(args: argparse.Namespace, config: TactileMapsConfig, out: RunLayout) -> int:
    cfg = config.train_config()
    pairs = []
    for manifest in args.manifest:
        pairs.extend(load_pairs(manifest, splits=[Split.train], zooms=cfg.zoom_set))
    run = train(
        cfg,
        pairs,
        augment_params=config.augment_params() if config.augment_enabled else None,
        generator_config=config.generator_config(),
        discriminator_config=config.discriminator_config(),
        out_dir=out.root,
        manifest_hash=_combined_hash(args.manifest),
        palette=config.palette(),
    )
    final = run.losses[-1]
    print(
        f"Trained {run.model_id.value} on {len(pairs)} pairs: final G {final.g_total:.4f} "
        f"(L1 {final.g_l1:.4f}) D {final.d:.4f}; checkpoint {run.last_checkpoint}"
    )
    return EXIT_OK


def cmd_infer(args: argparse.Namespace, config: TactileMapsConfig, out: RunLayout) -> int:
    ckpt = load_checkpoint(args.checkpoint)
    sources = [load_png(p) for p in args.inputs]
    eval_cfg = config.section("eval")
    predictions = infer_batch(ckpt, sources, device=eval_cfg["device"], batch_size=eval_cfg["batch_size"])
    target = out.images / "predictions"
    for path, image in zip(args.inputs, predictions):
        save_png(image, target / f"{Path(path).stem}.png")
    print(f"Wrote {len(predictions)} predictions -> {target}")
    return EXIT_OK


def cmd_eval(args: argparse.Namespace, config: TactileMapsConfig, out: RunLayout) -> int:
    ckpt = load_checkpoint(args.model)
    if ckpt.model_id is None:
        raise CheckpointError(f"Checkpoint {args.model} does not record a model id")
    model_id = ModelId(ckpt.model_id)
    if args.zoom is not None:
        check_compatibility(model_id, args.zoom)

    zooms = [args.zoom] if args.zoom is not None else None
    pairs = load_pairs(args.data, splits=[Split(args.split)], zooms=zooms)
    if not pairs:
        raise DatasetError(f"No {args.split} pairs in {args.data}")
    for zoom in sorted({p.zoom for p in pairs}):
        check_compatibility(model_id, zoom)

    eval_cfg = config.section("eval")
    predictions = infer_batch(
        ckpt, [p.source for p in pairs], device=eval_cfg["device"], batch_size=eval_cfg["batch_size"]
    )
    palette = config.palette()
    table = evaluate_run(model_id, pairs, predictions, palette, max_workers=eval_cfg["max_workers"])

    label = args.label or f"{model_id.value.lower().replace('/', '-')}-{args.split}"
    write_metrics_jsonl(table, out.metrics / f"{label}.jsonl", label=label)
    for fmt in eval_cfg["formats"]:
        fmt = ReportFormat(fmt)
        suffix = "csv" if fmt is ReportFormat.csv else "md"
        (out.reports / f"{label}.{suffix}").write_text(render_report(table, fmt), encoding="utf-8")
    print(f"{model_id.value} on {len(pairs)} {args.split} pairs: {format_table_summary(table)}")
    return EXIT_OK


def cmd_report_diff(args: argparse.Namespace, config: TactileMapsConfig, out: RunLayout) -> int:
    double, double_label = read_metrics_jsonl(args.double)
    single, single_label = read_metrics_jsonl(args.single)
    diff = diff_table(double, single)
    fmt = ReportFormat(args.format)
    text = render_report(diff, fmt)
    name = args.label or f"diff-{double_label or 'double'}-vs-{single_label or 'single'}"
    suffix = "csv" if fmt is ReportFormat.csv else "md"
    (out.reports / f"{name}.{suffix}").write_text(text, encoding="utf-8")
    sys.stdout.write(text)
    return EXIT_OK


def cmd_texturize(args: argparse.Namespace, config: TactileMapsConfig, out: RunLayout) -> int:
    palette = config.palette()
    textures = config.texture_map()
    target = out.images / "textured"
    for path in args.inputs:
        save_png(texturize(load_png(path), palette, textures), target / f"{Path(path).stem}.png")
    print(f"Texturized {len(args.inputs)} images -> {target}")
    return EXIT_OK


COMMANDS: Dict[str, Callable[[argparse.Namespace, TactileMapsConfig, RunLayout], int]] = {
    "fetch": cmd_fetch,
    "import": cmd_import,
    "synth": cmd_synth,
    "split": cmd_split,
    "augment-preview": cmd_augment_preview,
    "train": cmd_train,
    "infer": cmd_infer,
    "eval": cmd_eval,
    "report-diff": cmd_report_diff,
    "texturize": cmd_texturize,
}


# defaults of the options accepted both before and after the subcommand
GLOBAL_DEFAULTS = {
    "config": None,
    "overrides": [],
    "out": "runs/latest",
    "seed": None,
    "log_level": "info",
    "log_file": None,
}


def _global_options() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False, argument_default=argparse.SUPPRESS)
    common.add_argument("--config", "-c", type=str, help="Path to configuration file (e.g., tactile-maps.yaml)")
    common.add_argument(
        "--set",
        dest="overrides",
        action="append",
        metavar="SECTION.KEY=VALUE",
        help="Override one configuration value (repeatable)",
    )
    common.add_argument("--out", "-o", help="Output directory (default: runs/latest)")
    common.add_argument("--seed", type=int, help="Seed for synthesis, augmentation and training")
    common.add_argument(
        "--log-level",
        choices=["debug", "info", "warning", "error"],
        help="Log level (default: info)",
    )
    common.add_argument("--log-file", type=str, help="Write logs to this file instead of stderr")
    return common


def build_parser() -> argparse.ArgumentParser:
    common = _global_options()
    parser = argparse.ArgumentParser(
        prog="tactile-maps",
        description="Build tactile map datasets, train map-to-tactile models and score them",
        parents=[common],
    )
    parser.add_argument("--version", "-V", action="version", version=f"tactile-maps {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("fetch", help="Download source/tactile pairs (offline mock unless --live)", parents=[common])
    p.add_argument("--locations", required=True, help="Locations CSV")
    p.add_argument("--zooms", type=int, nargs="+", help="Zoom levels (default: per location)")
    p.add_argument("--live", action="store_true", help="Query the real Static Maps API")
    p.add_argument("--name", default="fetch", help="Manifest name")

    p = sub.add_parser("import", help="Import the published dataset from a directory", parents=[common])
    p.add_argument("root", help="Directory with source/ and tactile/ folders")
    p.add_argument("--zoom", type=int, help="Zoom of every tile (default: from directory names)")
    p.add_argument("--split", default=Split.train.value, choices=[s.value for s in Split])
    p.add_argument("--country", default="")
    p.add_argument("--include", action="append", help="gitwildmatch include pattern (repeatable)")
    p.add_argument("--exclude", action="append", help="gitwildmatch exclude pattern (repeatable)")
    p.add_argument("--name", default="import", help="Manifest name")

    p = sub.add_parser("synth", help="Generate synthetic pairs", parents=[common])
    p.add_argument("--n", type=int, help="Number of pairs")
    p.add_argument("--zoom", type=int, help="Zoom level the pairs imitate")

    p = sub.add_parser("split", help="Assign train/test-english splits", parents=[common])
    p.add_argument("--manifest", required=True)
    p.add_argument("--train", type=int, required=True, help="Number of training pairs")
    p.add_argument("--test", type=int, help="Number of test pairs (default: the remainder)")
    p.add_argument("--output", help="Output manifest (default: <manifest>-split.jsonl)")

    p = sub.add_parser("augment-preview", help="Render augmented pairs next to the originals", parents=[common])
    p.add_argument("--manifest", required=True)
    p.add_argument("--count", type=int, default=4)
    p.add_argument("--epoch", type=int, default=0)
    p.add_argument("--grey-recolor", action="store_true", help="Allow grey recoloring")

    p = sub.add_parser("train", help="Train a Pix2Pix model", parents=[common])
    p.add_argument("--manifest", action="append", required=True, help="Training manifest (repeatable)")

    p = sub.add_parser("infer", help="Translate source images with a checkpoint", parents=[common])
    p.add_argument("--checkpoint", required=True)
    p.add_argument("inputs", nargs="+", help="Source PNG files")

    p = sub.add_parser("eval", help="Score a checkpoint on a test split", parents=[common])
    p.add_argument("--model", required=True, help="Checkpoint file")
    p.add_argument("--data", required=True, help="Manifest with the test pairs")
    p.add_argument("--zoom", type=int, help="Only evaluate this zoom")
    p.add_argument("--split", default=Split.test_english.value, choices=[s.value for s in Split])
    p.add_argument("--label", help="Name of the metrics and report files")

    p = sub.add_parser("report-diff", help="Compare a double-zoom run with a single-zoom run", parents=[common])
    p.add_argument("--double", required=True, help="Metrics JSONL of the Zoom-16/18 model")
    p.add_argument("--single", required=True, help="Metrics JSONL of the single-zoom model")
    p.add_argument("--format", default="csv", choices=[f.value for f in ReportFormat])
    p.add_argument("--label", help="Report file name")

    p = sub.add_parser("texturize", help="Render tactile images as black-and-white textures", parents=[common])
    p.add_argument("inputs", nargs="+", help="Tactile PNG files")

    return parser


def _apply_command_flags(args: argparse.Namespace, config: TactileMapsConfig) -> None:
    """Flags beat ``--set`` overrides."""
    if args.seed is not None:
        config.apply_seed(args.seed)


def main(argv: Optional[Sequence[str]] = None) -> int:
    """Main entry point for the tactile-maps command."""
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code) if isinstance(e.code, int) else EXIT_USAGE
    for name, default in GLOBAL_DEFAULTS.items():
        if not hasattr(args, name):
            setattr(args, name, list(default) if isinstance(default, list) else default)

    configure_logging(args.log_level, args.log_file)
    config: Optional[TactileMapsConfig] = None
    try:
        config = TactileMapsConfig.load(args.config, args.overrides)
        _apply_command_flags(args, config)
        out = RunLayout(Path(args.out))
        out.root.mkdir(parents=True, exist_ok=True)
        config.save_to_file(out.resolved_config)
        return COMMANDS[args.command](args, config, out)
    except Exception as e:
        secrets = [config.get("fetch", "api_key")] if config is not None else []
        message = sanitise_error(str(e), secrets)
        logger.debug("Command failed", exc_info=True)
        print(f"error: {type(e).__name__}: {message}", file=sys.stderr)
        return exit_code_for(e)


if __name__ == "__main__":
    sys.exit(main())
