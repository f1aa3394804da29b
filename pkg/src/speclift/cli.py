"""Command-line front end: speclift <detect|restore|remove|synth|eval|bench>.

Exit codes: 0 success, 1 per-frame failures occurred, 2 fatal error.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from . import frameio, metrics, pipeline
from .detect import detect_specular_mask
from .errors import SpecliftError
from .frameio import FRAME_PATTERN, MASK_PATTERN, SequenceSource
from .synth import PRESETS, generate_sequence, preset_config


def _add_config_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", type=Path, help="key = value config file")
    p.add_argument("--rank", type=int, help="explicit truncation rank")
    p.add_argument("--energy", type=float, help="spectral energy fraction")
    p.add_argument("--full-rank", action="store_true",
                   help="bypass truncation (rank = prior count)")
    p.add_argument("--patch-size", type=int, dest="patch_size")
    p.add_argument("--sweeps", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--prior-count", type=int, dest="prior_count")
    p.add_argument("--dilation", type=int, dest="dilation_radius")


def _config_from_args(args) -> frameio.PipelineConfig:
    cfg = frameio.load_config(getattr(args, "config", None))
    overrides = {}
    for key in ("rank", "energy", "patch_size", "sweeps", "seed",
                "prior_count", "dilation_radius"):
        val = getattr(args, key, None)
        if val is not None:
            overrides[key] = val
    if getattr(args, "full_rank", False):
        overrides["rank"] = overrides.get("prior_count", cfg.prior_count)
    if overrides:
        cfg = cfg.replace(**overrides)
    return cfg


def _write_json(path: Path, payload: dict) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n",
                    encoding="utf-8")


def _load_masks(directory: Path, count: int) -> list:
    src = SequenceSource(directory, MASK_PATTERN)
    paths = sorted(directory.glob("mask_*.png"))
    if len(paths) < count:
        raise SpecliftError(
            f"need {count} masks in {directory}, found {len(paths)}"
        )
    del src
    return [frameio.load_mask(p) for p in paths[:count]]


def cmd_detect(args) -> int:
    cfg = _config_from_args(args)
    seq = frameio.load_sequence(SequenceSource(args.input))
    args.output.mkdir(parents=True, exist_ok=True)
    rows = []
    for w in range(len(seq)):
        mask, ds = detect_specular_mask(seq[w], cfg.dilation_radius)
        frameio.save_mask(mask, args.output / (MASK_PATTERN % w))
        rows.append({
            "index": w, "dispersion": ds.dispersion, "beta": ds.beta,
            "max_intensity": ds.max_intensity, "mask_pixels": mask.count,
        })
    _write_json(args.output / "detect_stats.json",
                {"schema": 1, "mode": "detect", "config": cfg.as_dict(),
                 "frames": rows})
    return 0


def _run_restore_mode(args, mode: str) -> int:
    cfg = _config_from_args(args)
    seq = frameio.load_sequence(SequenceSource(args.input))
    user_masks = None
    if mode == "remove":
        user_masks = _load_masks(args.masks, len(seq))
    results, errors = pipeline.run_restore(seq, cfg, user_masks=user_masks)
    args.output.mkdir(parents=True, exist_ok=True)
    for fr in results:
        frameio.save_frame(fr.restored, args.output / (FRAME_PATTERN % fr.index))
        frameio.save_mask(fr.mask, args.output / (MASK_PATTERN % fr.index))
    report = pipeline.build_report(mode, cfg, results, errors)
    _write_json(args.output / "report.json", report)
    return 1 if errors else 0


def cmd_restore(args) -> int:
    return _run_restore_mode(args, "restore")


def cmd_remove(args) -> int:
    return _run_restore_mode(args, "remove")


def cmd_synth(args) -> int:
    cfg = preset_config(args.preset, frames=args.frames, size=args.size,
                        seed=args.seed)
    clean, damaged, gt = generate_sequence(cfg)
    for sub, frames in (("clean", clean), ("damaged", damaged)):
        d = args.output / sub
        d.mkdir(parents=True, exist_ok=True)
        for w in range(len(frames)):
            frameio.save_frame(frames[w], d / (FRAME_PATTERN % w))
    gtd = args.output / "gt"
    gtd.mkdir(parents=True, exist_ok=True)
    for w, m in enumerate(gt):
        frameio.save_mask(m, gtd / (MASK_PATTERN % w))
    _write_json(args.output / "synth.json",
                {"schema": 1, "mode": "synth", "preset": args.preset,
                 "frames": args.frames, "size": args.size, "seed": args.seed})
    return 0


def cmd_eval(args) -> int:
    preds = [frameio.load_mask(p) for p in sorted(args.pred.glob("mask_*.png"))]
    gts = [frameio.load_mask(p) for p in sorted(args.gt.glob("mask_*.png"))]
    if len(preds) != len(gts) or not preds:
        raise SpecliftError(
            f"mask counts differ or empty: {len(preds)} predictions, {len(gts)} truths"
        )
    report = metrics.detection_report(preds, gts, config={"pred": str(args.pred),
                                                          "gt": str(args.gt)})
    _write_json(args.report, report.to_dict())
    return 0


def cmd_bench(args) -> int:
    cfg = _config_from_args(args)
    seq = frameio.load_sequence(SequenceSource(args.input))
    report = pipeline.timing_compare(seq, cfg)
    _write_json(args.report, report)
    return 0


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="speclift",
        description="Specular-free video recovery: detection, low-rank temporal "
                    "alignment and patch-based restoration over PNG frame "
                    "directories.",
    )
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("detect", help="write specular masks and stats")
    p.add_argument("--input", type=Path, required=True)
    p.add_argument("--output", type=Path, required=True)
    _add_config_flags(p)
    p.set_defaults(fn=cmd_detect)

    p = sub.add_parser("restore", help="detect and restore every frame")
    p.add_argument("--input", type=Path, required=True)
    p.add_argument("--output", type=Path, required=True)
    _add_config_flags(p)
    p.set_defaults(fn=cmd_restore)

    p = sub.add_parser("remove", help="object removal with user masks")
    p.add_argument("--input", type=Path, required=True)
    p.add_argument("--masks", type=Path, required=True)
    p.add_argument("--output", type=Path, required=True)
    _add_config_flags(p)
    p.set_defaults(fn=cmd_remove)

    p = sub.add_parser("synth", help="generate a synthetic benchmark sequence")
    p.add_argument("--preset", choices=sorted(PRESETS), required=True)
    p.add_argument("--frames", type=int, default=12)
    p.add_argument("--size", type=int, default=256)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--output", type=Path, required=True)
    p.set_defaults(fn=cmd_synth)

    p = sub.add_parser("eval", help="score predicted masks against ground truth")
    p.add_argument("--pred", type=Path, required=True)
    p.add_argument("--gt", type=Path, required=True)
    p.add_argument("--report", type=Path, required=True)
    p.set_defaults(fn=cmd_eval)

    p = sub.add_parser("bench", help="full-rank vs low-rank timing comparison")
    p.add_argument("--input", type=Path, required=True)
    p.add_argument("--report", type=Path, required=True)
    _add_config_flags(p)
    p.set_defaults(fn=cmd_bench)

    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except (SpecliftError, OSError) as exc:
        print(f"speclift: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
