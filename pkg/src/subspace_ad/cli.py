"""Command-line front end: fit, score, eval, batched, synth.

Every subcommand is deterministic: the same inputs, config and seeds
produce byte-identical output files.  Logs (with timestamps) go to
stderr only.  Failures print one machine-readable JSON object on
stderr: {"error": <code>, "message": <text>}.

Exit codes: 0 success, 1 finished but some metric was undefined,
2 input or validation error.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import fileio, model as model_mod, scoring, synthgen
from .config import RunConfig
from .errors import IoFailure, ManifestError, ModelNotFound, SubspaceADError
from .manifest import Manifest, load_manifest
from .metrics import (
    EvalReport,
    compute_sample_metrics,
    mask_for_item,
    mean_over_samples,
)

log = logging.getLogger("subspace_ad")

_CONFIG_FLAGS = ("tau", "rho", "sigma", "resolution", "shots",
                 "pro_fpr_limit", "normalization")


def _add_config_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", type=Path, default=None,
                   help="JSON file with RunConfig keys")
    p.add_argument("--tau", type=float, default=None,
                   help="explained-variance threshold (0, 1]")
    p.add_argument("--rho", type=float, default=None,
                   help="TVaR tail percent (0, 100]")
    p.add_argument("--sigma", type=float, default=None,
                   help="Gaussian blur std, pixels")
    p.add_argument("--resolution", type=int, default=None,
                   help="working resolution, pixels")
    p.add_argument("--shots", type=int, default=None,
                   help="support images per sample (k)")
    p.add_argument("--seeds", type=int, nargs="+", default=None,
                   help="one seed per sample")
    p.add_argument("--pro-fpr-limit", dest="pro_fpr_limit", type=float,
                   default=None, help="overlap-curve integration limit")
    p.add_argument("--normalization", choices=("raw", "per-image"),
                   default=None, help="pixel-metric input maps")


def _load_config(args: argparse.Namespace) -> RunConfig:
    cfg = RunConfig.from_file(args.config) if args.config else RunConfig()
    for key in _CONFIG_FLAGS:
        value = getattr(args, key, None)
        if value is not None:
            setattr(cfg, key, value)
    if getattr(args, "seeds", None) is not None:
        cfg.seeds = [int(s) for s in args.seeds]
    cfg.validate()
    return cfg


def _safe_name(image_id: str) -> str:
    return image_id.replace("/", "_")


def _seed_suffixed(path: Path, seed: int) -> Path:
    return path.with_name(f"{path.stem}_seed{seed}{path.suffix}")


def _select_support(n_train: int, shots: int, seed: int) -> list[int]:
    """Seeded shuffle picks the support set; fitting keeps manifest order."""
    rng = np.random.Generator(np.random.Philox(key=seed))
    chosen = rng.permutation(n_train)[:shots]
    return sorted(int(i) for i in chosen)


def cmd_fit(args: argparse.Namespace) -> int:
    cfg = _load_config(args)
    man = load_manifest(args.manifest)
    train = man.train_items
    if not train:
        raise ManifestError("manifest has no train items")
    if cfg.shots > len(train):
        raise ManifestError(
            f"k={cfg.shots} support images requested, "
            f"manifest lists {len(train)}")
    out = Path(args.out)
    if out.parent != Path(""):
        out.parent.mkdir(parents=True, exist_ok=True)
    for seed in cfg.seeds:
        picked = _select_support(len(train), cfg.shots, seed)
        maps = [fileio.read_feature_map(man.resolve(train[i].feature_file))
                for i in picked]
        fitted = model_mod.fit(maps, tau=cfg.tau)
        path = out if len(cfg.seeds) == 1 else _seed_suffixed(out, seed)
        path.write_bytes(model_mod.serialize(fitted))
        lam = fitted.eigenvalues
        total = float(lam.sum())
        explained = float(lam[:fitted.rank].sum() / total) if total else 0.0
        log.info("fit seed=%d support=%s n=%d D=%d r=%d explained=%.6f -> %s",
                 seed, picked, fitted.fit_row_count, fitted.dim, fitted.rank,
                 explained, path)
    return 0


def _score_to_dir(fitted, man: Manifest, cfg: RunConfig,
                  out_dir: Path) -> list[dict]:
    out_dir.mkdir(parents=True, exist_ok=True)
    records = []
    for item in man.test_items:
        fmap = fileio.read_feature_map(man.resolve(item.feature_file))
        result = scoring.score_image_pipeline(
            fitted, fmap, item.original_height, item.original_width,
            rho=cfg.rho, sigma=cfg.sigma)
        stem = _safe_name(item.image_id)
        map_name = f"{stem}.pgm"
        raw_name = f"{stem}.raw"
        fileio.write_map_pgm(result.pixel_map.values, out_dir / map_name)
        fileio.write_raw_map(result.raw_pixel_scores, out_dir / raw_name)
        records.append({"image_id": item.image_id,
                        "image_score": result.image_score.value,
                        "map_file": map_name,
                        "raw_file": raw_name})
    lines = [json.dumps(r, sort_keys=True) for r in records]
    (out_dir / "scores.jsonl").write_text("\n".join(lines) + "\n")
    return records


def cmd_score(args: argparse.Namespace) -> int:
    cfg = _load_config(args)
    model_path = Path(args.model)
    if not model_path.exists():
        raise ModelNotFound(f"model file {model_path} does not exist")
    fitted = model_mod.deserialize(model_path.read_bytes())
    man = load_manifest(args.manifest)
    if not man.test_items:
        raise ManifestError("manifest has no test items")
    records = _score_to_dir(fitted, man, cfg, Path(args.out_dir))
    log.info("scored %d images -> %s", len(records), args.out_dir)
    return 0


def _sample_dirs(scores_dir: Path) -> list[Path]:
    if not scores_dir.is_dir():
        raise IoFailure(f"score directory {scores_dir} does not exist")
    subs = sorted(p for p in scores_dir.iterdir()
                  if p.is_dir() and (p / "scores.jsonl").exists())
    if subs:
        return subs
    if (scores_dir / "scores.jsonl").exists():
        return [scores_dir]
    raise IoFailure(f"no scores.jsonl under {scores_dir}")


def _sample_from_dir(sample_dir: Path, man: Manifest,
                     cfg: RunConfig) -> dict:
    by_id = {item.image_id: item for item in man.test_items}
    image_scores, image_labels, pixel_maps, pixel_masks = [], [], [], []
    text = (sample_dir / "scores.jsonl").read_text()
    for line in text.splitlines():
        if not line.strip():
            continue
        rec = json.loads(line)
        item = by_id.get(rec["image_id"])
        if item is None:
            raise ManifestError(
                f"scored image {rec['image_id']} not in manifest test set")
        image_scores.append(float(rec["image_score"]))
        image_labels.append(item.image_label)
        raw = fileio.read_raw_map(sample_dir / rec["raw_file"])
        if cfg.normalization == "per-image":
            pixel_maps.append(scoring.normalize_minmax(raw).values)
        else:
            pixel_maps.append(np.asarray(raw, dtype=np.float64))
        pixel_masks.append(mask_for_item(
            item, man.base_dir, item.original_height, item.original_width))
    if not image_scores:
        raise IoFailure(f"{sample_dir / 'scores.jsonl'} is empty")
    return compute_sample_metrics(
        image_scores, image_labels, pixel_maps, pixel_masks, cfg)


def _seed_of_dir(name: str, fallback: int | None) -> int | None:
    marker = "seed"
    if marker in name:
        tail = name.rsplit(marker, 1)[1]
        if tail.lstrip("-").isdigit():
            return int(tail)
    return fallback


_TABLE_HEADER = f"{'category':<16}{'k':>4}{'i_auroc':>10}{'i_aupr':>10}" \
                f"{'p_auroc':>10}{'pro':>10}"


def _format_row(report: EvalReport) -> str:
    cells = [f"{report.category:<16}", f"{report.k:>4}"]
    for key in ("i_auroc", "i_aupr", "p_auroc", "pro"):
        value = report.mean[key]
        cells.append(f"{value:>10.4f}" if value is not None else f"{'n/a':>10}")
    return "".join(cells)


def _finish_eval(report: EvalReport, out_path: Path) -> int:
    report.save(out_path)
    print(_TABLE_HEADER)
    print(_format_row(report))
    missing = [k for k, v in report.mean.items() if v is None]
    if missing:
        log.warning("metrics undefined for this test set: %s",
                    ", ".join(sorted(missing)))
        return 1
    return 0


def cmd_eval(args: argparse.Namespace) -> int:
    cfg = _load_config(args)
    man = load_manifest(args.manifest)
    if not man.test_items:
        raise ManifestError("manifest has no test items")
    dirs = _sample_dirs(Path(args.scores))
    samples = []
    for i, sample_dir in enumerate(dirs):
        fallback = cfg.seeds[i] if i < len(cfg.seeds) else None
        entry = {"seed": _seed_of_dir(sample_dir.name, fallback)}
        entry.update(_sample_from_dir(sample_dir, man, cfg))
        samples.append(entry)
    report = EvalReport(category=man.category, k=cfg.shots, samples=samples,
                        mean=mean_over_samples(samples), config=cfg.to_dict())
    return _finish_eval(report, Path(args.out))


def cmd_batched(args: argparse.Namespace) -> int:
    cfg = _load_config(args)
    man = load_manifest(args.manifest)
    if not man.test_items:
        raise ManifestError("manifest has no test items")
    maps = [fileio.read_feature_map(man.resolve(item.feature_file))
            for item in man.test_items]
    fitted = model_mod.fit_batched(maps, tau=cfg.tau)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "model_batched.ssm").write_bytes(model_mod.serialize(fitted))
    log.info("batched fit n=%d D=%d r=%d", fitted.fit_row_count,
             fitted.dim, fitted.rank)
    _score_to_dir(fitted, man, cfg, out_dir)
    samples = [{"seed": None, **_sample_from_dir(out_dir, man, cfg)}]
    report = EvalReport(category=man.category, k=0, samples=samples,
                        mean=mean_over_samples(samples), config=cfg.to_dict())
    return _finish_eval(report, out_dir / "report.json")


def cmd_synth(args: argparse.Namespace) -> int:
    spec_path = Path(args.spec)
    if not spec_path.exists():
        raise IoFailure(f"spec file {spec_path} does not exist")
    spec = synthgen.SynthSpec.from_dict(json.loads(spec_path.read_text()))
    dataset = synthgen.generate(spec)
    synthgen.write_dataset(dataset, args.out_dir)
    log.info("synth seed=%d: %d train, %d test -> %s", spec.seed,
             len(dataset.train_maps), len(dataset.test_maps), args.out_dir)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="subspace-ad",
        description="Training-free anomaly detection on patch feature maps.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("fit", help="fit a normality subspace per seed")
    p.add_argument("--manifest", required=True, type=Path)
    p.add_argument("--out", required=True, type=Path,
                   help="model path; multi-seed runs add _seed<N>")
    _add_config_flags(p)
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("score", help="score test images against a model")
    p.add_argument("--model", required=True, type=Path)
    p.add_argument("--manifest", required=True, type=Path)
    p.add_argument("--out-dir", required=True, type=Path)
    _add_config_flags(p)
    p.set_defaults(func=cmd_score)

    p = sub.add_parser("eval", help="aggregate a score directory into metrics")
    p.add_argument("--scores", required=True, type=Path,
                   help="score dir, or parent of per-sample score dirs")
    p.add_argument("--manifest", required=True, type=Path)
    p.add_argument("--out", required=True, type=Path,
                   help="EvalReport JSON path")
    _add_config_flags(p)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("batched",
                       help="zero-shot: fit on the test set, then score it")
    p.add_argument("--manifest", required=True, type=Path)
    p.add_argument("--out-dir", required=True, type=Path)
    _add_config_flags(p)
    p.set_defaults(func=cmd_batched)

    p = sub.add_parser("synth", help="materialize a synthetic category")
    p.add_argument("--spec", required=True, type=Path,
                   help="generation spec JSON")
    p.add_argument("--out-dir", required=True, type=Path)
    p.set_defaults(func=cmd_synth)
    return parser


def main(argv=None) -> int:
    logging.basicConfig(
        stream=sys.stderr, level=logging.INFO,
        format="%(asctime)s %(name)s %(levelname)s %(message)s")
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except SubspaceADError as exc:
        print(json.dumps({"error": exc.code, "message": str(exc)}),
              file=sys.stderr)
        return 2
    except (ValueError, OSError, json.JSONDecodeError) as exc:
        print(json.dumps({"error": type(exc).__name__, "message": str(exc)}),
              file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
