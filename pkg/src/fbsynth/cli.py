"""Command-line entry point.

Subcommands: generate, validate-config, stats, extract, preview, selftest.
Exit codes: 0 ok, 2 config error, 3 I/O error, 4 generation failure.
Config overrides compose after the file config and before validation;
config.lock.json always reflects the final resolved values.
"""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

from . import cocoio, extractor, pipeline, preview, selftest
from .core import ConfigError, GenConfig

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_IO = 3
EXIT_GENERATION = 4


def _parse_override(text: str) -> tuple[str, object]:
    if "=" not in text:
        raise ConfigError(f"--set expects key=value, got {text!r}")
    key, raw = text.split("=", 1)
    try:
        value = json.loads(raw)
    except json.JSONDecodeError:
        value = raw  # bare strings are allowed unquoted
    return key, value


def _load_config(args) -> GenConfig:
    if args.config:
        try:
            cfg = GenConfig.from_json(Path(args.config).read_text())
        except FileNotFoundError:
            raise ConfigError(f"config file not found: {args.config}")
    else:
        cfg = GenConfig()
    overrides = dict(_parse_override(s) for s in (args.set or []))
    if getattr(args, "seed", None) is not None:
        overrides["master_seed"] = args.seed
    if getattr(args, "max_annotations", None) is not None:
        overrides["max_annotations"] = args.max_annotations
    if overrides:
        cfg = cfg.with_overrides(overrides)
    return cfg


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="fbsynth",
        description="Synthetic foreign-body dataset generator for chest "
                    "radiographs")
    sub = parser.add_subparsers(dest="command", required=True)

    def add_config_flags(p):
        p.add_argument("--config", help="config JSON path (defaults apply "
                                        "when omitted)")
        p.add_argument("--set", action="append", metavar="KEY=VALUE",
                       help="dotted-key config override, repeatable")

    gen = sub.add_parser("generate", help="generate a synthetic dataset")
    add_config_flags(gen)
    gen.add_argument("--n", type=int, required=True, help="number of images")
    gen.add_argument("--seed", type=int, help="master seed override")
    gen.add_argument("--max-annotations", type=int, dest="max_annotations",
                     help="max annotations per image override")
    gen.add_argument("--workers", type=int, default=1)
    gen.add_argument("--out", required=True, help="output directory")
    gen.add_argument("--validation", action="store_true",
                     help="generate on the validation seed branch")

    val = sub.add_parser("validate-config", help="validate a config file")
    add_config_flags(val)

    stats = sub.add_parser("stats", help="dataset statistics from a COCO file")
    stats.add_argument("--coco", required=True, help="annotations.json path")

    ext = sub.add_parser("extract", help="recover masks from a color-annotated "
                                         "/ clean image pair")
    ext.add_argument("--annotated", required=True)
    ext.add_argument("--clean", required=True)
    ext.add_argument("--out", required=True, help="output COCO JSON path")
    ext.add_argument("--chroma-threshold", type=float,
                     default=extractor.DEFAULT_CHROMA_THRESHOLD)
    ext.add_argument("--min-area", type=int, default=extractor.DEFAULT_MIN_AREA)

    prev = sub.add_parser("preview", help="render mask-contour previews")
    prev.add_argument("--dataset", required=True, help="generated dataset dir")
    prev.add_argument("--k", type=int, default=4)
    prev.add_argument("--out", required=True)

    sub.add_parser("selftest", help="run the embedded oracle suite")
    return parser


def _cmd_generate(args) -> int:
    cfg = _load_config(args)
    root = (pipeline.VALIDATION_ROOT_INDEX if args.validation
            else pipeline.TRAIN_ROOT_INDEX)
    summary = pipeline.generate_dataset(cfg, args.n, args.out,
                                        workers=args.workers, root_index=root)
    print(json.dumps(summary, indent=2))
    return EXIT_OK if summary["generated"] > 0 else EXIT_GENERATION


def _cmd_validate(args) -> int:
    _load_config(args)
    print("config ok")
    return EXIT_OK


def _cmd_stats(args) -> int:
    print(json.dumps(cocoio.dataset_stats(args.coco), indent=2))
    return EXIT_OK


def _cmd_extract(args) -> int:
    annotated = extractor.read_color_image(args.annotated)
    clean = pipeline.read_gray_image(args.clean)
    records = extractor.extract_masks(annotated, clean,
                                      chroma_threshold=args.chroma_threshold,
                                      min_area=args.min_area)
    extractor.export_extracted(records, Path(args.clean).name,
                               (clean.width, clean.height), args.out)
    print(f"extracted {len(records)} instances -> {args.out}")
    return EXIT_OK


def _cmd_preview(args) -> int:
    written = preview.run_preview(args.dataset, args.k, args.out)
    for p in written:
        print(p)
    return EXIT_OK


def main(argv=None) -> int:
    logging.basicConfig(level=os.environ.get("FBSYNTH_LOG", "WARNING").upper())
    args = build_parser().parse_args(argv)
    try:
        if args.command == "generate":
            return _cmd_generate(args)
        if args.command == "validate-config":
            return _cmd_validate(args)
        if args.command == "stats":
            return _cmd_stats(args)
        if args.command == "extract":
            return _cmd_extract(args)
        if args.command == "preview":
            return _cmd_preview(args)
        if args.command == "selftest":
            return EXIT_OK if selftest.run_selftest() else 1
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except pipeline.GenerationError as e:
        print(f"generation error: {e}", file=sys.stderr)
        return EXIT_GENERATION
    except (pipeline.DatasetError, OSError, ValueError,
            preview.PreviewError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_IO
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
