#!/usr/bin/env python3
"""Full-dataset benchmark driver: extract, fit, score, and evaluate
every category of an MVTec-style dataset tree, then average the
per-category reports.

This is the integration run that reproduces published-scale numbers.
It needs the real image datasets on disk, downloadable backbone
weights, and ideally a GPU; none of that is available to the unit test
suites, which is why this lives here and not under tests/.

Expected layout (VisA works after reorganizing into the same 1-class
layout):

    <dataset-root>/<category>/train/good/*.png
    <dataset-root>/<category>/test/{good,<defect>}/*.png
    <dataset-root>/<category>/ground_truth/<defect>/*_mask.png

Example:

    python3 scripts/run_benchmark.py \
        --dataset-root /data/mvtec --out /tmp/bench \
        --shots 1 --seeds 0 1 2 3 4
"""

from __future__ import annotations

import argparse
import json
import statistics
import sys
from pathlib import Path

from patch_extractor import ExtractConfig, extract_category
import subspace_ad.cli as scoring_cli

METRICS = ("i_auroc", "i_aupr", "p_auroc", "pro")


def discover_categories(root: Path) -> list[str]:
    return sorted(p.name for p in root.iterdir()
                  if (p / "train" / "good").is_dir())


def run_category(root: Path, category: str, out: Path,
                 args: argparse.Namespace) -> dict:
    work = out / category
    config = ExtractConfig(backbone=args.backbone,
                           resolution=args.resolution,
                           augmentations=args.augmentations,
                           seed=args.extract_seed)
    if args.layers is not None:
        config.layers = args.layers
    extract_category(root, category, work, config)

    manifest = str(work / "manifest.json")
    seeds = [str(s) for s in args.seeds]
    rc = scoring_cli.main(
        ["fit", "--manifest", manifest, "--out", str(work / "model.ssm"),
         "--shots", str(args.shots), "--tau", str(args.tau),
         "--seeds", *seeds])
    if rc != 0:
        raise SystemExit(f"fit failed for {category}")

    for seed in args.seeds:
        model = work / ("model.ssm" if len(args.seeds) == 1
                        else f"model_seed{seed}.ssm")
        rc = scoring_cli.main(
            ["score", "--manifest", manifest, "--model", str(model),
             "--out-dir", str(work / "scores" / f"sample_seed{seed}")])
        if rc != 0:
            raise SystemExit(f"score failed for {category} seed {seed}")

    rc = scoring_cli.main(
        ["eval", "--manifest", manifest, "--scores", str(work / "scores"),
         "--out", str(work / "report.json"),
         "--shots", str(args.shots)])
    if rc != 0:
        raise SystemExit(f"eval failed for {category}")
    return json.loads((work / "report.json").read_text())


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--dataset-root", type=Path, required=True)
    parser.add_argument("--out", type=Path, required=True)
    parser.add_argument("--categories", nargs="*", default=None,
                        help="subset; default is every category found")
    parser.add_argument("--backbone", default="dinov2_vitg14")
    parser.add_argument("--layers", type=int, nargs="+", default=None,
                        help="backbone layer set; default 22-28")
    parser.add_argument("--resolution", type=int, default=672)
    parser.add_argument("--augmentations", type=int, default=30)
    parser.add_argument("--extract-seed", type=int, default=0)
    parser.add_argument("--shots", type=int, default=1)
    parser.add_argument("--seeds", type=int, nargs="+",
                        default=[0, 1, 2, 3, 4])
    parser.add_argument("--tau", type=float, default=0.99)
    args = parser.parse_args()

    categories = args.categories or discover_categories(args.dataset_root)
    if not categories:
        print("no categories found", file=sys.stderr)
        return 2

    by_category = {}
    for category in categories:
        print(f"=== {category} ===", flush=True)
        report = run_category(args.dataset_root, category, args.out, args)
        by_category[category] = report["mean"]
        row = "  ".join(f"{m}={report['mean'][m]:.4f}"
                        if report["mean"][m] is not None else f"{m}=n/a"
                        for m in METRICS)
        print(f"{category}: {row}", flush=True)

    summary = {}
    for metric in METRICS:
        values = [v[metric] for v in by_category.values()
                  if v[metric] is not None]
        summary[metric] = statistics.mean(values) if values else None
    out_doc = {"categories": by_category, "summary": summary,
               "shots": args.shots, "seeds": args.seeds}
    (args.out / "summary.json").write_text(
        json.dumps(out_doc, indent=2, sort_keys=True) + "\n")
    row = "  ".join(f"{m}={summary[m]:.4f}" if summary[m] is not None
                    else f"{m}=n/a" for m in METRICS)
    print(f"overall ({len(by_category)} categories): {row}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
