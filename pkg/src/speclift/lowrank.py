"""Low-rank temporal prior: stack frames as matrix columns and truncate.

Each color channel of the Z prior frames is flattened (row-major) into a
column of an N x Z matrix.  Temporal redundancy makes the columns
strongly correlated, so a small number of singular triplets carries the
scene while noise and transient highlights fall into the tail.  The
decomposition runs on the Z x Z Gram matrix because N = H*W dwarfs Z.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DimensionMismatchError
from .model import Frame

_RELATIVE_CUTOFF = 1e-7  # singular values below cutoff*s_max get completed columns


@dataclass(frozen=True)
class CasoratiMatrix:
    """One channel of Z prior frames, flattened column-wise: shape (H*W, Z)."""

    data: np.ndarray
    channel: int
    height: int
    width: int

    @property
    def prior_count(self) -> int:
        return self.data.shape[1]


@dataclass(frozen=True)
class TruncatedSVD:
    """Top-r singular triplets: u (N, r), s (r,) descending, v (Z, r)."""

    u: np.ndarray
    s: np.ndarray
    v: np.ndarray

    @property
    def rank(self) -> int:
        return self.s.shape[0]

    def reconstruct(self) -> np.ndarray:
        return (self.u * self.s) @ self.v.T


def build_casorati(priors: list[Frame], channel: int) -> CasoratiMatrix:
    """Column z holds the row-major flattening of priors[z]'s chosen channel."""
    if not priors:
        raise DimensionMismatchError("need at least one prior frame")
    h, w = priors[0].shape
    for z, f in enumerate(priors):
        if f.shape != (h, w):
            raise DimensionMismatchError(
                f"prior {z} has shape {f.shape}, expected {(h, w)}"
            )
    cols = [f.channel(channel).ravel() for f in priors]
    return CasoratiMatrix(np.stack(cols, axis=1), channel=channel, height=h, width=w)


def unstack_casorati(data: np.ndarray, height: int, width: int) -> list[np.ndarray]:
    """Inverse of the column flattening: one (H, W) plane per column."""
    return [data[:, z].reshape(height, width) for z in range(data.shape[1])]


def _complete_orthonormal(u: np.ndarray, n_good: int) -> None:
    """Fill trailing columns of u with unit vectors orthogonal to the rest."""
    n, r = u.shape
    k = 0
    for j in range(n_good, r):
        while True:
            cand = np.zeros(n)
            cand[k % n] = 1.0
            k += 1
            w = cand - u[:, :j] @ (u[:, :j].T @ cand)
            norm = np.linalg.norm(w)
            if norm > 0.5:
                break
        u[:, j] = w / norm


def truncated_svd(c: CasoratiMatrix, r: int) -> TruncatedSVD:
    """Top-r triplets via eigendecomposition of the Z x Z Gram matrix.

    The reconstruction u*s@v.T is the Frobenius-optimal rank-r
    approximation; its squared error equals the dropped squared singular
    values (Eckart-Young).
    """
    a = c.data
    n, z = a.shape
    if not 1 <= r <= min(n, z):
        raise ValueError(f"rank must be in [1, {min(n, z)}], got {r}")
    gram = a.T @ a
    evals, evecs = np.linalg.eigh(gram)
    order = np.argsort(evals)[::-1][:r]
    s = np.sqrt(np.clip(evals[order], 0.0, None))
    v = evecs[:, order]
    u = np.zeros((n, r))
    cutoff = _RELATIVE_CUTOFF * (s[0] if s.size else 0.0)
    n_good = int(np.sum(s > cutoff))
    s[n_good:] = 0.0  # numerically zero; keeps completed columns inert
    if n_good:
        u[:, :n_good] = (a @ v[:, :n_good]) / s[:n_good]
    _complete_orthonormal(u, n_good)
    return TruncatedSVD(u=u, s=s, v=v)


def select_rank(singular_values: np.ndarray, energy_fraction: float) -> int:
    """Smallest r whose leading squared values reach the energy fraction."""
    s = np.asarray(singular_values, dtype=np.float64)
    if s.size == 0:
        raise ValueError("empty spectrum")
    if np.any(np.diff(s) > 0) or np.any(s < 0):
        raise ValueError("spectrum must be descending and nonnegative")
    if not 0.0 < energy_fraction <= 1.0:
        raise ValueError(f"energy fraction must be in (0, 1], got {energy_fraction}")
    cum = np.cumsum(s**2)
    total = cum[-1]
    if total == 0.0:
        return 1
    return int(np.argmax(cum >= energy_fraction * total)) + 1


def lowrank_frames_with_info(
    priors: list[Frame], rank: int | None = None, energy: float = 0.95
) -> tuple[list[Frame], list[int]]:
    """Per-channel truncation of the prior stack; returns frames and the
    rank actually used per channel."""
    z = len(priors)
    planes: list[list[np.ndarray]] = [[] for _ in priors]
    ranks = []
    for ch in range(3):
        c = build_casorati(priors, ch)
        full = truncated_svd(c, min(z, c.data.shape[0]))
        r = rank if rank is not None else select_rank(full.s, energy)
        r = min(r, full.rank)
        recon = (full.u[:, :r] * full.s[:r]) @ full.v[:, :r].T
        ranks.append(r)
        for zi, plane in enumerate(unstack_casorati(recon, c.height, c.width)):
            planes[zi].append(plane)
    frames = [
        Frame(np.clip(np.stack(chs, axis=2), 0.0, 1.0)) for chs in planes
    ]
    return frames, ranks


def lowrank_frames(
    priors: list[Frame], rank: int | None = None, energy: float = 0.95
) -> list[Frame]:
    """Replace each prior with its value in the truncated column space."""
    frames, _ = lowrank_frames_with_info(priors, rank=rank, energy=energy)
    return frames
