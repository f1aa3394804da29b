"""Fill damaged regions from the aligned prior search space.

Every damaged pixel gets a shift-map entry (prior index, spatial
displacement) chosen to minimize a validity-masked patch distance.
The minimizer alternates neighbor-propagation and halving-radius random
search sweeps over a working image frozen after initialization, so the
aggregate mapped distance can only decrease.  The final fill blends the
overlapping source-patch votes with uniform weights.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import CoverageError, DimensionMismatchError
from .model import Frame, SpecularMask


@dataclass(frozen=True)
class SearchSpace:
    """Aligned prior frames plus per-prior usability masks."""

    priors: tuple[np.ndarray, ...]     # each (H, W, 3)
    validity: tuple[np.ndarray, ...]   # each (H, W) bool, True = usable
    coverage: float                    # fraction of damaged px usable in >= 1 prior

    @property
    def shape(self) -> tuple[int, int]:
        return self.priors[0].shape[:2]


def build_search_space(
    aligned_priors: list[Frame],
    prior_masks: list[np.ndarray],
    current_mask: SpecularMask,
) -> SearchSpace:
    """Assemble the search space; prior_masks flag unusable pixels
    (the prior's own warped specular region, out-of-domain samples, and
    any other contamination the pipeline identified).

    Raises CoverageError when no damaged pixel is usable in any prior.
    """
    if not aligned_priors:
        raise CoverageError("search space needs at least one aligned prior")
    shape = current_mask.shape
    priors = []
    validity = []
    for z, (f, bad) in enumerate(zip(aligned_priors, prior_masks)):
        if f.shape != shape or bad.shape != shape:
            raise DimensionMismatchError(
                f"prior {z} shape {f.shape}/{bad.shape} does not match frame {shape}"
            )
        priors.append(np.asarray(f.data))
        validity.append(~np.asarray(bad, dtype=bool))
    usable = np.any(np.stack(validity), axis=0)
    damaged = current_mask.bits
    coverage = 1.0 if not damaged.any() else float(usable[damaged].mean())
    if damaged.any() and coverage == 0.0:
        raise CoverageError(
            "no usable search-space pixel covers the damaged region; "
            "increase the prior window (prior_count)"
        )
    return SearchSpace(tuple(priors), tuple(validity), coverage)


def patch_distance(a: np.ndarray, b: np.ndarray, validity: np.ndarray) -> float:
    """Squared RGB difference over valid pixels, normalized by their count.

    Returns +inf when no pixel is valid (the candidate is rejected).
    """
    if a.shape != b.shape or validity.shape != a.shape[:2]:
        raise DimensionMismatchError("patches and validity must share one odd size")
    count = int(validity.sum())
    if count == 0:
        return float("inf")
    diff = (a - b) ** 2
    return float(diff[validity].sum() / count)


@dataclass(frozen=True)
class ShiftMap:
    """One source location per damaged pixel.

    coords[k] is the damaged pixel (i, j); its source patch center is
    coords[k] + disp[k] inside priors[prior_idx[k]].
    """

    coords: np.ndarray      # (K, 2) int
    prior_idx: np.ndarray   # (K,) int
    disp: np.ndarray        # (K, 2) int
    distances: np.ndarray   # (K,) float, final patch distances

    def __len__(self) -> int:
        return self.coords.shape[0]

    @property
    def aggregate_distance(self) -> float:
        return float(self.distances.sum())

    def to_jsonable(self) -> dict:
        return {
            "pixels": [
                [int(i), int(j), int(z), int(di), int(dj)]
                for (i, j), z, (di, dj) in zip(self.coords, self.prior_idx, self.disp)
            ]
        }


class _Matcher:
    """Shared state for one shift-map solve."""

    def __init__(self, frame: Frame, mask: SpecularMask, space: SearchSpace,
                 patch_size: int):
        if patch_size < 3 or patch_size % 2 == 0:
            raise ValueError(f"patch size must be odd and >= 3, got {patch_size}")
        self.h, self.w = frame.shape
        self.half = patch_size // 2
        self.space = space
        self.damaged = np.argwhere(mask.bits)
        # working image: damaged pixels replaced by the mean of the usable
        # prior values at that location, then frozen for all sweeps
        work = np.array(frame.data)
        stack = np.stack(space.priors)
        vstack = np.stack(space.validity).astype(np.float64)
        weight = vstack.sum(axis=0)
        mean = np.divide(
            (stack * vstack[..., None]).sum(axis=0),
            np.maximum(weight, 1.0)[..., None],
        )
        fillable = mask.bits & (weight > 0)
        work[fillable] = mean[fillable]
        self.work = work
        # candidate centers: usable and with the full footprint in bounds
        lo, hi_i, hi_j = self.half, self.h - self.half, self.w - self.half
        inb = np.zeros((self.h, self.w), bool)
        if hi_i > lo and hi_j > lo:
            inb[lo:hi_i, lo:hi_j] = True
        self.cand_ok = [v & inb for v in space.validity]
        self.cand_lists = [np.argwhere(ok) for ok in self.cand_ok]
        # padded target data so border patches read as invalid, not wrapped
        ph = self.half
        self.tpad = np.pad(work, ((ph, ph), (ph, ph), (0, 0)))
        self.tvalid = np.pad(np.ones((self.h, self.w), bool), ph)
        self.vpad = [np.pad(v, ph) for v in space.validity]

    def target_patch(self, i: int, j: int):
        p = 2 * self.half + 1
        return (self.tpad[i:i + p, j:j + p], self.tvalid[i:i + p, j:j + p])

    def distance(self, i: int, j: int, z: int, di: int, dj: int) -> float:
        si, sj = i + di, j + dj
        p = 2 * self.half + 1
        tgt, tok = self.target_patch(i, j)
        src = self.space.priors[z][si - self.half:si + self.half + 1,
                                   sj - self.half:sj + self.half + 1]
        sok = self.vpad[z][si:si + p, sj:sj + p]
        return patch_distance(tgt, src, tok & sok)

    def in_bounds(self, i: int, j: int) -> bool:
        return (self.half <= i < self.h - self.half
                and self.half <= j < self.w - self.half)


def solve_shift_map(
    frame: Frame,
    mask: SpecularMask,
    space: SearchSpace,
    patch_size: int = 7,
    sweeps: int = 5,
    rng: np.random.Generator | None = None,
) -> ShiftMap:
    """Find, for every damaged pixel, the best (prior, displacement) source.

    Initialization prefers the zero displacement per prior; sweeps then
    alternate raster/reverse-raster propagation with random search whose
    radius halves per probe.  Deterministic for a fixed rng seed.
    """
    rng = rng or np.random.default_rng(0)
    if not mask.bits.any():
        empty = np.zeros((0,), int)
        return ShiftMap(np.zeros((0, 2), int), empty, np.zeros((0, 2), int),
                        np.zeros((0,)))
    st = _Matcher(frame, mask, space, patch_size)
    pts = st.damaged
    k = len(pts)
    npriors = len(space.priors)
    best_z = np.zeros(k, int)
    best_d = np.zeros((k, 2), int)
    best_dist = np.full(k, np.inf)

    index_of = -np.ones((st.h, st.w), int)
    for n, (i, j) in enumerate(pts):
        index_of[i, j] = n

    # zero-displacement init where usable, random valid candidate otherwise
    for n, (i, j) in enumerate(pts):
        for z in range(npriors):
            if st.in_bounds(i, j) and st.cand_ok[z][i, j]:
                d = st.distance(i, j, z, 0, 0)
                if d < best_dist[n]:
                    best_dist[n], best_z[n], best_d[n] = d, z, (0, 0)
        if not np.isfinite(best_dist[n]):
            for _ in range(64):
                z = int(rng.integers(npriors))
                cl = st.cand_lists[z]
                if len(cl) == 0:
                    continue
                si, sj = cl[rng.integers(len(cl))]
                d = st.distance(i, j, z, si - i, sj - j)
                if d < best_dist[n]:
                    best_dist[n], best_z[n], best_d[n] = d, z, (si - i, sj - j)
                if np.isfinite(best_dist[n]):
                    break
            if not np.isfinite(best_dist[n]):
                for z in range(npriors):
                    if len(st.cand_lists[z]):
                        si, sj = st.cand_lists[z][0]
                        best_dist[n] = st.distance(i, j, z, si - i, sj - j)
                        best_z[n], best_d[n] = z, (si - i, sj - j)
                        break

    max_radius = max(st.h, st.w)
    order = np.arange(k)
    for sweep in range(sweeps):
        sweep_order = order if sweep % 2 == 0 else order[::-1]
        step = 1 if sweep % 2 == 0 else -1
        for n in sweep_order:
            i, j = pts[n]
            # propagation from the two already-visited neighbors
            for ni, nj in ((i - step, j), (i, j - step)):
                if 0 <= ni < st.h and 0 <= nj < st.w and index_of[ni, nj] >= 0:
                    mth = index_of[ni, nj]
                    z, (di, dj) = best_z[mth], best_d[mth]
                    si, sj = i + di, j + dj
                    if st.in_bounds(si, sj) and st.cand_ok[z][si, sj]:
                        d = st.distance(i, j, z, di, dj)
                        if d < best_dist[n]:
                            best_dist[n], best_z[n], best_d[n] = d, z, (di, dj)
            # random search around the current best, radius halving
            radius = max_radius
            ci, cj = i + best_d[n][0], j + best_d[n][1]
            while radius >= 1:
                z = int(rng.integers(npriors))
                si = int(ci + rng.integers(-radius, radius + 1))
                sj = int(cj + rng.integers(-radius, radius + 1))
                if st.in_bounds(si, sj) and st.cand_ok[z][si, sj]:
                    d = st.distance(i, j, z, si - i, sj - j)
                    if d < best_dist[n]:
                        best_dist[n], best_z[n], best_d[n] = d, z, (si - i, sj - j)
                        ci, cj = si, sj
                radius //= 2

    return ShiftMap(coords=pts.copy(), prior_idx=best_z, disp=best_d,
                    distances=best_dist)


def fill_damage(frame: Frame, mask: SpecularMask, space: SearchSpace,
                shift_map: ShiftMap, patch_size: int = 7) -> Frame:
    """Replace damaged pixels by the uniform blend of the source-patch
    votes that cover them; clean pixels pass through bit-identically."""
    if mask.shape != frame.shape:
        raise DimensionMismatchError("mask and frame shapes differ")
    out = np.array(frame.data)
    if len(shift_map) == 0:
        return Frame(out)
    half = patch_size // 2
    h, w = frame.shape
    acc = np.zeros((h, w, 3))
    cnt = np.zeros((h, w))
    for (i, j), z, (di, dj) in zip(shift_map.coords, shift_map.prior_idx,
                                   shift_map.disp):
        i0, i1 = max(i - half, 0), min(i + half + 1, h)
        j0, j1 = max(j - half, 0), min(j + half + 1, w)
        src = space.priors[z][i0 + di:i1 + di, j0 + dj:j1 + dj]
        ok = space.validity[z][i0 + di:i1 + di, j0 + dj:j1 + dj]
        acc[i0:i1, j0:j1] += src * ok[..., None]
        cnt[i0:i1, j0:j1] += ok
    voted = mask.bits & (cnt > 0)
    out[voted] = acc[voted] / cnt[voted, None]
    return Frame(np.clip(out, 0.0, 1.0))
