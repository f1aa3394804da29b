"""Synthetic benchmark sequences with exact specular ground truth.

Clean frames come from a procedural texture animated by a simple motion
model; damage is injected as additive truncated-Gaussian highlight blobs
that saturate toward 1.0 and drift frame to frame, so the occluded
content genuinely exists in the temporal neighbors.  The ground-truth
mask is every pixel the injection moved by more than one 8-bit step.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError
from .ffd import bilinear_sample
from .model import Frame, Sequence, SpecularMask

GT_THRESHOLD = 1.0 / 255.0

MOTIONS = ("static", "translate", "rotate", "camera-pan")
TEXTURES = ("checker", "noise", "gradient")


@dataclass(frozen=True)
class SynthConfig:
    frames: int = 12
    height: int = 256
    width: int = 256
    motion: str = "camera-pan"
    pan: tuple[float, float] = (0.7, 0.4)   # px/frame for translate and pan
    rotate_deg: float = 0.25                # deg/frame for rotate
    texture: str = "noise"
    highlight_count: int = 2
    radius_range: tuple[float, float] = (9.0, 14.0)
    gain: float = 1.9                       # additive amplitude is gain - 1
    drift: float = 28.0                     # blob center movement, px/frame
    noise_sigma: float = 0.0
    tint: tuple[float, float, float] = (1.0, 1.0, 1.0)
    seed: int = 0

    def validate(self) -> None:
        if self.frames < 1 or self.height < 8 or self.width < 8:
            raise ConfigError("need frames >= 1 and at least 8x8 pixels")
        if self.motion not in MOTIONS:
            raise ConfigError(f"motion must be one of {MOTIONS}, got {self.motion!r}")
        if self.texture not in TEXTURES:
            raise ConfigError(f"texture must be one of {TEXTURES}, got {self.texture!r}")
        if self.gain <= 1.0:
            raise ConfigError(f"highlight gain must exceed 1, got {self.gain}")
        if self.radius_range[0] <= 0 or self.radius_range[1] < self.radius_range[0]:
            raise ConfigError(f"bad radius range {self.radius_range}")
        if self.highlight_count < 0 or self.noise_sigma < 0:
            raise ConfigError("highlight_count and noise_sigma must be >= 0")


def _value_noise(rng: np.random.Generator, h: int, w: int) -> np.ndarray:
    """Sum of bilinearly upsampled random grids, one per octave."""
    out = np.zeros((h, w))
    amp = 1.0
    for cell in (32, 16, 8):
        gh, gw = h // cell + 2, w // cell + 2
        grid = rng.random((gh, gw))
        ii = np.arange(h) / cell
        jj = np.arange(w) / cell
        pos = np.empty((h, w, 2))
        pos[:, :, 0] = ii[:, None]
        pos[:, :, 1] = jj[None, :]
        out += amp * bilinear_sample(grid, pos)
        amp *= 0.5
    return out


def _normalize(tex: np.ndarray, lo: float = 0.15, hi: float = 0.80) -> np.ndarray:
    t = tex - tex.min()
    span = t.max()
    if span > 0:
        t /= span
    return lo + (hi - lo) * t


def _texture(cfg: SynthConfig, rng: np.random.Generator, h: int, w: int) -> np.ndarray:
    if cfg.texture == "noise":
        base = _normalize(_value_noise(rng, h, w))
    elif cfg.texture == "checker":
        ii, jj = np.meshgrid(np.arange(h) // 8, np.arange(w) // 8, indexing="ij")
        base = np.where((ii + jj) % 2 == 0, 0.3, 0.7)
    else:  # gradient
        ii, jj = np.meshgrid(np.arange(h), np.arange(w), indexing="ij")
        base = _normalize(0.6 * ii / max(h - 1, 1) + 0.4 * jj / max(w - 1, 1))
    weights = np.array([1.0, 0.93, 0.85])
    rgb = base[:, :, None] * weights[None, None, :]
    return np.clip(rgb, 0.02, 0.95)


def _clean_frame(cfg: SynthConfig, canvas: np.ndarray, w_idx: int,
                 margin: int) -> np.ndarray:
    h, w = cfg.height, cfg.width
    pos = np.empty((h, w, 2))
    if cfg.motion == "static":
        pos[:, :, 0] = np.arange(h)[:, None] + margin
        pos[:, :, 1] = np.arange(w)[None, :] + margin
    elif cfg.motion in ("translate", "camera-pan"):
        oi, oj = w_idx * cfg.pan[0], w_idx * cfg.pan[1]
        pos[:, :, 0] = np.arange(h)[:, None] + margin + oi
        pos[:, :, 1] = np.arange(w)[None, :] + margin + oj
    else:  # rotate about the frame center
        theta = np.deg2rad(cfg.rotate_deg * w_idx)
        ci, cj = (h - 1) / 2.0, (w - 1) / 2.0
        ii, jj = np.meshgrid(np.arange(h) - ci, np.arange(w) - cj, indexing="ij")
        pos[:, :, 0] = np.cos(theta) * ii - np.sin(theta) * jj + ci + margin
        pos[:, :, 1] = np.sin(theta) * ii + np.cos(theta) * jj + cj + margin
    return bilinear_sample(canvas, pos)


def generate_sequence(
    cfg: SynthConfig,
) -> tuple[Sequence, Sequence, list[SpecularMask]]:
    """Build (clean, damaged, ground-truth masks), deterministic per seed."""
    cfg.validate()
    rng = np.random.default_rng(cfg.seed)
    h, w = cfg.height, cfg.width

    if cfg.motion in ("translate", "camera-pan"):
        margin = int(np.ceil(max(abs(cfg.pan[0]), abs(cfg.pan[1])) * cfg.frames)) + 4
    elif cfg.motion == "rotate":
        margin = int(np.ceil(0.3 * max(h, w))) + 4
    else:
        margin = 2
    canvas = _texture(cfg, rng, h + 2 * margin, w + 2 * margin)

    centers = rng.random((cfg.highlight_count, 2)) * np.array([h, w])
    angles = rng.random(cfg.highlight_count) * 2 * np.pi
    vel = cfg.drift * np.stack([np.cos(angles), np.sin(angles)], axis=1)
    radii = rng.uniform(cfg.radius_range[0], cfg.radius_range[1],
                        cfg.highlight_count)
    amp = cfg.gain - 1.0
    tint = np.asarray(cfg.tint)

    clean_frames, damaged_frames, gt = [], [], []
    ii, jj = np.meshgrid(np.arange(h, dtype=np.float64),
                         np.arange(w, dtype=np.float64), indexing="ij")
    for t in range(cfg.frames):
        clean = _clean_frame(cfg, canvas, t, margin)
        if cfg.noise_sigma > 0:
            clean = clean + rng.normal(0.0, cfg.noise_sigma, clean.shape)
        clean = np.clip(clean, 0.0, 1.0)

        add = np.zeros((h, w))
        for b in range(cfg.highlight_count):
            ci = (centers[b, 0] + t * vel[b, 0]) % h
            cj = (centers[b, 1] + t * vel[b, 1]) % w
            r2 = (ii - ci) ** 2 + (jj - cj) ** 2
            sigma = radii[b] / 2.0
            blob = amp * np.exp(-r2 / (2.0 * sigma * sigma))
            blob[r2 > radii[b] ** 2] = 0.0
            add = np.maximum(add, blob)
        damaged = np.clip(clean + add[:, :, None] * tint[None, None, :], 0.0, 1.0)

        clean_frames.append(Frame(clean))
        damaged_frames.append(Frame(damaged))
        gt.append(SpecularMask((damaged - clean).max(axis=2) > GT_THRESHOLD))
    return Sequence(tuple(clean_frames)), Sequence(tuple(damaged_frames)), gt


PRESETS = {
    "torso-like": dict(
        motion="camera-pan", pan=(0.7, 0.4), texture="noise",
        highlight_count=2, radius_range=(9.0, 14.0), gain=1.9, drift=28.0,
        noise_sigma=0.004,
    ),
    "heart-like": dict(
        motion="rotate", rotate_deg=0.3, texture="noise",
        highlight_count=5, radius_range=(4.0, 7.0), gain=1.8, drift=18.0,
        noise_sigma=0.008,
    ),
    "dragon-like": dict(
        motion="translate", pan=(0.5, 0.9), texture="gradient",
        highlight_count=3, radius_range=(6.0, 10.0), gain=1.7, drift=22.0,
        tint=(1.0, 0.78, 0.5), noise_sigma=0.006,
    ),
}


def preset_config(name: str, frames: int = 12, size: int = 256,
                  seed: int = 0) -> SynthConfig:
    if name not in PRESETS:
        raise ConfigError(f"unknown preset {name!r}; have {sorted(PRESETS)}")
    return SynthConfig(frames=frames, height=size, width=size, seed=seed,
                       **PRESETS[name])
