"""Core pixel-grid types shared by every stage.

A video is a Sequence of Frames; every Frame is an H x W x 3 array of
reals in [0, 1].  Detection produces a binary SpecularMask per frame
(1 = damaged / specular, 0 = clean), and intermediate per-pixel scalar
quantities (mean intensity, gradient magnitude) travel as ScalarField.
All four types are immutable after construction and safe to share.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DegenerateInputError, DimensionMismatchError

CHANNELS = ("r", "g", "b")


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(a)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class Frame:
    """One RGB frame, shape (H, W, 3), every sample finite and in [0, 1]."""

    data: np.ndarray

    def __post_init__(self):
        a = np.asarray(self.data, dtype=np.float64)
        if a.ndim != 3 or a.shape[2] != 3:
            raise DimensionMismatchError(f"frame data must be (H, W, 3), got {a.shape}")
        if a.shape[0] < 1 or a.shape[1] < 1:
            raise DimensionMismatchError(f"frame must be at least 1x1, got {a.shape}")
        if not np.all(np.isfinite(a)):
            raise ValueError("frame contains non-finite samples")
        if a.min() < 0.0 or a.max() > 1.0:
            raise ValueError("frame samples must lie in [0, 1]")
        object.__setattr__(self, "data", _frozen(a))

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def shape(self) -> tuple[int, int]:
        return self.data.shape[:2]

    def channel(self, c: int | str) -> np.ndarray:
        """Return one color plane as a read-only (H, W) view."""
        if isinstance(c, str):
            c = CHANNELS.index(c)
        return self.data[:, :, c]


@dataclass(frozen=True)
class Sequence:
    """An ordered, dimension-uniform run of frames."""

    frames: tuple[Frame, ...]

    def __post_init__(self):
        frames = tuple(self.frames)
        if not frames:
            raise DegenerateInputError("sequence must contain at least one frame")
        shape = frames[0].shape
        for k, f in enumerate(frames):
            if f.shape != shape:
                raise DimensionMismatchError(
                    f"frame {k} has shape {f.shape}, expected {shape}"
                )
        object.__setattr__(self, "frames", frames)

    def __len__(self) -> int:
        return len(self.frames)

    def __getitem__(self, w: int) -> Frame:
        return self.frames[w]

    @property
    def shape(self) -> tuple[int, int]:
        return self.frames[0].shape


@dataclass(frozen=True)
class SpecularMask:
    """Binary per-pixel damage map: True/1 = specular, False/0 = clean."""

    bits: np.ndarray

    def __post_init__(self):
        a = np.asarray(self.bits)
        if a.ndim != 2:
            raise DimensionMismatchError(f"mask must be 2-D, got shape {a.shape}")
        if a.dtype != np.bool_:
            vals = np.unique(a)
            if not np.all(np.isin(vals, (0, 1))):
                raise ValueError(f"mask values must be 0/1, got {vals[:8]}")
            a = a.astype(bool)
        object.__setattr__(self, "bits", _frozen(a))

    @property
    def shape(self) -> tuple[int, int]:
        return self.bits.shape

    @property
    def count(self) -> int:
        """Number of damaged pixels."""
        return int(self.bits.sum())

    def complement(self) -> "SpecularMask":
        return SpecularMask(~self.bits)


@dataclass(frozen=True)
class ScalarField:
    """A finite real value per pixel, shape (H, W)."""

    values: np.ndarray

    def __post_init__(self):
        a = np.asarray(self.values, dtype=np.float64)
        if a.ndim != 2:
            raise DimensionMismatchError(f"field must be 2-D, got shape {a.shape}")
        if not np.all(np.isfinite(a)):
            raise ValueError("field contains non-finite values")
        object.__setattr__(self, "values", _frozen(a))

    @property
    def shape(self) -> tuple[int, int]:
        return self.values.shape


def mean_intensity(frame: Frame) -> ScalarField:
    """Per-pixel mean of the three color planes."""
    return ScalarField(frame.data.mean(axis=2))


def gradient_magnitude(field: ScalarField) -> ScalarField:
    """Euclidean norm of the spatial gradient.

    Central differences in the interior, one-sided at the borders.
    Requires at least 2 pixels along each axis.
    """
    h, w = field.shape
    if h < 2 or w < 2:
        raise DegenerateInputError(f"gradient needs at least 2x2 pixels, got {h}x{w}")
    gi, gj = np.gradient(field.values)
    return ScalarField(np.hypot(gi, gj))
