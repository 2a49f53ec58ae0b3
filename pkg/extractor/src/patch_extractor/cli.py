"""Command line front end.

    patch-extract extract --dataset ROOT --category CAT --out-dir DIR
    patch-extract manifest --dataset ROOT --category CAT --out FILE

Progress goes to stderr as log lines.  Failures print a single JSON
object on stderr ({"error": code, "message": text}) and exit with
status 2, so callers can branch on machine-readable causes.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from .config import ExtractConfig
from .dataset import build_manifest, save_manifest
from .errors import ExtractorError
from .pipeline import extract_category

log = logging.getLogger("patch_extractor")

_CONFIG_FLAGS = ("backbone", "layers", "resolution", "patch_size",
                 "augmentations", "rotation_max_degrees",
                 "rotation_disabled", "seed", "angle_mode", "aggregation")


def _add_config_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", type=Path, default=None,
                        help="JSON file with extraction settings")
    parser.add_argument("--backbone", type=str, default=None)
    parser.add_argument("--layers", type=int, nargs="+", default=None)
    parser.add_argument("--resolution", type=int, default=None)
    parser.add_argument("--patch-size", type=int, default=None)
    parser.add_argument("--augmentations", type=int, default=None)
    parser.add_argument("--rotation-max-degrees", type=float, default=None)
    parser.add_argument("--rotation-disabled", type=str, nargs="*",
                        default=None)
    parser.add_argument("--seed", type=int, default=None)
    parser.add_argument("--angle-mode", type=str, default=None,
                        choices=("random", "grid"))
    parser.add_argument("--aggregation", type=str, default=None,
                        choices=("mean", "concat"))


def _load_config(args: argparse.Namespace) -> ExtractConfig:
    if args.config is not None:
        config = ExtractConfig.from_file(args.config)
    else:
        config = ExtractConfig()
    for name in _CONFIG_FLAGS:
        value = getattr(args, name)
        if value is not None:
            setattr(config, name, value)
    config.validate()
    return config


def cmd_extract(args: argparse.Namespace) -> int:
    config = _load_config(args)
    doc = extract_category(args.dataset, args.category, args.out_dir,
                           config, split=args.split)
    n_train = sum(1 for item in doc["items"] if item["role"] == "train")
    n_test = len(doc["items"]) - n_train
    print(f"{args.category}: {n_train} train views, {n_test} test images "
          f"-> {args.out_dir}")
    return 0


def cmd_manifest(args: argparse.Namespace) -> int:
    config = _load_config(args)
    doc = build_manifest(args.dataset, args.category, config,
                         split=args.split)
    save_manifest(doc, args.out)
    print(f"{args.category}: {len(doc['items'])} entries -> {args.out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="patch-extract",
        description="Turn images into patch feature grids for "
                    "subspace anomaly scoring.")
    sub = parser.add_subparsers(dest="command", required=True)

    p_extract = sub.add_parser(
        "extract", help="extract features for one dataset category")
    p_extract.add_argument("--dataset", type=Path, required=True)
    p_extract.add_argument("--category", type=str, required=True)
    p_extract.add_argument("--out-dir", type=Path, required=True)
    p_extract.add_argument("--split", type=str, default="both",
                           choices=("train", "test", "both"))
    _add_config_flags(p_extract)
    p_extract.set_defaults(func=cmd_extract)

    p_manifest = sub.add_parser(
        "manifest", help="write the manifest without extracting")
    p_manifest.add_argument("--dataset", type=Path, required=True)
    p_manifest.add_argument("--category", type=str, required=True)
    p_manifest.add_argument("--out", type=Path, required=True)
    p_manifest.add_argument("--split", type=str, default="both",
                            choices=("train", "test", "both"))
    _add_config_flags(p_manifest)
    p_manifest.set_defaults(func=cmd_manifest)
    return parser


def main(argv=None) -> int:
    logging.basicConfig(
        stream=sys.stderr, level=logging.INFO,
        format="%(asctime)s %(levelname)s %(name)s: %(message)s")
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ExtractorError as exc:
        print(json.dumps({"error": exc.code, "message": str(exc)}),
              file=sys.stderr)
        return 2
    except (ValueError, OSError, json.JSONDecodeError) as exc:
        print(json.dumps({"error": type(exc).__name__,
                          "message": str(exc)}),
              file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
