"""Per-frame orchestration: detect, select priors, truncate, align, fill.

Frames are processed in index order because each frame's detected mask
feeds later prior selection.  Priors are registered pairwise along the
recency chain and the fields composed into the current frame's
coordinates; detected specular pixels of the priors (and low-rank
contamination) are barred from serving as fill sources.
"""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from .detect import detect_specular_mask
from .errors import CoverageError, RegistrationError, SpecliftError
from .ffd import DeformationField, bilinear_sample, compose_positions
from .frameio import PipelineConfig
from .lowrank import lowrank_frames_with_info
from .model import Frame, Sequence, SpecularMask
from .recovery import build_search_space, fill_damage, solve_shift_map
from .registration import lm_register

GHOST_THRESHOLD = 0.08  # |low-rank - original| above this marks leaked damage

VOLATILE_KEYS = ("wall_time", "mean_wall_time", "total_wall_time", "speedup")


@dataclass
class FrameResult:
    index: int
    restored: Frame
    mask: SpecularMask
    stats: dict


def _frame_rng(seed: int, index: int) -> np.random.Generator:
    return np.random.default_rng([seed, index])


def select_priors(
    w: int, masks: list[SpecularMask], current_mask: SpecularMask, z: int
) -> tuple[list[int], bool]:
    """Pick up to z recent prior frames whose damage overlaps the current
    damaged region by less than half; falls back to the most recent z
    (with a warning) when too few qualify."""
    available = list(range(w - 1, -1, -1))
    area = current_mask.count
    qualify = []
    for i in available:
        overlap = int((masks[i].bits & current_mask.bits).sum())
        if area == 0 or overlap < 0.5 * area:
            qualify.append(i)
        if len(qualify) == z:
            break
    want = min(z, len(available))
    if len(qualify) >= want:
        return qualify[:z], False
    return available[:z], True


def _out_of_domain(positions: np.ndarray, shape: tuple[int, int]) -> np.ndarray:
    h, w = shape
    return (
        (positions[..., 0] < 0.0) | (positions[..., 0] > h - 1.0)
        | (positions[..., 1] < 0.0) | (positions[..., 1] > w - 1.0)
    )


def _warped_flag(flags: np.ndarray, positions: np.ndarray) -> np.ndarray:
    # any fractional contribution from a flagged pixel marks the sample
    return bilinear_sample(flags.astype(np.float64), positions) > 0.1


def restore_frame(
    w: int,
    sequence: Sequence,
    masks: list[SpecularMask],
    cfg: PipelineConfig,
    user_mask: SpecularMask | None = None,
    rng: np.random.Generator | None = None,
) -> FrameResult:
    """Run the full recovery chain for frame w.

    masks holds the (detected or user-provided) masks of frames 0..w-1.
    An empty mask or a frame with no priors short-circuits to
    pass-through.
    """
    t0 = time.perf_counter()
    frame = sequence[w]
    stats: dict = {"warnings": []}

    if user_mask is not None:
        mask = user_mask
        stats["detection"] = {"mode": "user-mask", "mask_pixels": mask.count}
    else:
        mask, ds = detect_specular_mask(frame, cfg.dilation_radius)
        stats["detection"] = {
            "mode": "adaptive",
            "dispersion": ds.dispersion,
            "max_intensity": ds.max_intensity,
            "beta": ds.beta,
            "mask_pixels": mask.count,
        }

    def passthrough(reason: str) -> FrameResult:
        stats["passthrough"] = reason
        stats["wall_time"] = time.perf_counter() - t0
        return FrameResult(index=w, restored=frame, mask=mask, stats=stats)

    if mask.count == 0:
        return passthrough("empty-mask")
    if w == 0:
        stats["warnings"].append("cold-start: no prior frames, frame passed through")
        return passthrough("cold-start")

    prior_idx, overlap_warning = select_priors(w, masks, mask, cfg.prior_count)
    if overlap_warning:
        stats["warnings"].append(
            "prior overlap rule could not fill the window; using most recent frames"
        )
    if len(prior_idx) < cfg.prior_count:
        stats["warnings"].append(
            f"cold start: only {len(prior_idx)} priors available of {cfg.prior_count}"
        )
    stats["priors"] = prior_idx

    priors = [sequence[i] for i in prior_idx]
    recon, ranks = lowrank_frames_with_info(priors, cfg.rank, cfg.energy)
    stats["ranks"] = ranks

    # leaked damage: where truncation mixed other frames' highlights in
    ghosts = [
        np.abs(r.data - p.data).max(axis=2) > GHOST_THRESHOLD
        for r, p in zip(recon, priors)
    ]

    reg_rows = []
    aligned = []
    invalid = []
    to_prior: np.ndarray | None = None
    for a in range(len(priors)):
        if a == 0:
            res = lm_register(recon[0], frame, cfg)
            to_prior = res.field.positions
        else:
            res = lm_register(recon[a], recon[a - 1], cfg)
            to_prior = compose_positions(res.field.positions, to_prior)
        reg_rows.append({
            "prior": prior_idx[a],
            "iterations": res.iterations,
            "regrids": res.regrid_count,
            "converged": res.converged,
            "final_energy": res.trace[-1]["energy"].total if res.trace else None,
        })
        aligned.append(Frame(np.clip(bilinear_sample(recon[a].data, to_prior), 0.0, 1.0)))
        bad = _warped_flag(masks[prior_idx[a]].bits, to_prior)
        bad |= _warped_flag(ghosts[a], to_prior)
        bad |= _out_of_domain(to_prior, frame.shape)
        invalid.append(bad)
    stats["registrations"] = reg_rows

    space = build_search_space(aligned, invalid, mask)
    stats["coverage"] = space.coverage

    rng = rng if rng is not None else _frame_rng(cfg.seed, w)
    shift_map = solve_shift_map(frame, mask, space, cfg.patch_size, cfg.sweeps, rng)
    stats["shift_distance"] = shift_map.aggregate_distance
    restored = fill_damage(frame, mask, space, shift_map, cfg.patch_size)

    stats["wall_time"] = time.perf_counter() - t0
    return FrameResult(index=w, restored=restored, mask=mask, stats=stats)


def run_restore(
    sequence: Sequence,
    cfg: PipelineConfig,
    user_masks: list[SpecularMask] | None = None,
) -> tuple[list[FrameResult], list[dict]]:
    """Restore every frame in order; per-frame numerical failures are
    recorded (frame passes through) without aborting the batch."""
    results: list[FrameResult] = []
    masks: list[SpecularMask] = []
    errors: list[dict] = []
    for w in range(len(sequence)):
        um = user_masks[w] if user_masks is not None else None
        try:
            fr = restore_frame(w, sequence, masks, cfg, user_mask=um,
                               rng=_frame_rng(cfg.seed, w))
        except (CoverageError, RegistrationError) as exc:
            mask = um
            if mask is None:
                mask, _ = detect_specular_mask(sequence[w], cfg.dilation_radius)
            fr = FrameResult(
                index=w, restored=sequence[w], mask=mask,
                stats={"error": f"{type(exc).__name__}: {exc}",
                       "passthrough": "error", "warnings": [], "wall_time": 0.0},
            )
            errors.append({"index": w, "error": str(exc)})
        results.append(fr)
        masks.append(fr.mask)
    return results, errors


def _frame_stats_row(fr: FrameResult) -> dict:
    row = {"index": fr.index, "mask_pixels": fr.mask.count}
    row.update(fr.stats)
    return row


def build_report(mode: str, cfg: PipelineConfig, results: list[FrameResult],
                 errors: list[dict]) -> dict:
    rows = [_frame_stats_row(fr) for fr in results]
    times = [r.get("wall_time", 0.0) for r in rows]
    return {
        "schema": 1,
        "mode": mode,
        "config": cfg.as_dict(),
        "frames": rows,
        "aggregates": {
            "frame_count": len(results),
            "error_count": len(errors),
            "errors": errors,
            "mean_wall_time": float(np.mean(times)) if times else 0.0,
            "total_wall_time": float(np.sum(times)),
        },
    }


def strip_volatile(obj):
    """Drop wall-clock fields so reports from identical runs compare equal."""
    if isinstance(obj, dict):
        return {k: strip_volatile(v) for k, v in obj.items() if k not in VOLATILE_KEYS}
    if isinstance(obj, list):
        return [strip_volatile(v) for v in obj]
    return obj


def timing_compare(sequence: Sequence, cfg: PipelineConfig) -> dict:
    """Run the pipeline full-rank and low-rank on the same sequence and
    report per-frame wall time and solver iteration counts for both."""
    if len(sequence) <= cfg.prior_count:
        raise SpecliftError(
            f"bench needs more frames ({len(sequence)}) than priors ({cfg.prior_count})"
        )

    def one_mode(mode_cfg: PipelineConfig, label: str) -> dict:
        t0 = time.perf_counter()
        results, errors = run_restore(sequence, mode_cfg)
        total = time.perf_counter() - t0
        iters = [
            sum(r["iterations"] for r in fr.stats.get("registrations", []))
            for fr in results
        ]
        return {
            "label": label,
            "rank": mode_cfg.rank,
            "energy": mode_cfg.energy,
            "per_frame_time": total / len(sequence),
            "total_time": total,
            "lm_iterations": iters,
            "mean_lm_iterations": float(np.mean(iters)) if iters else 0.0,
            "errors": len(errors),
        }

    full = one_mode(cfg.replace(rank=cfg.prior_count), "full-rank")
    low = one_mode(cfg, "low-rank")
    ratio = full["per_frame_time"] / max(low["per_frame_time"], 1e-12)
    return {
        "schema": 1,
        "mode": "bench",
        "config": cfg.as_dict(),
        "rows": [full, low],
        "speedup": ratio,
    }
