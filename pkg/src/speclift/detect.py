"""Adaptive per-frame detection of specular (damaged) regions.

A pixel is labeled specular when its mean intensity exceeds the frame
maximum minus the frame's color dispersion, or when its intensity
gradient magnitude exceeds a histogram threshold chosen to maximize the
between-class variance.  Both cutoffs are recomputed per frame, so the
detector adapts to each frame's illumination on its own.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .errors import DegenerateInputError
from .model import Frame, ScalarField, SpecularMask, gradient_magnitude, mean_intensity

HISTOGRAM_BINS = 256


@dataclass(frozen=True)
class DetectionStats:
    """Per-frame quantities the detector derived its cutoffs from."""

    dispersion: float          # sample variance of the mean-intensity field
    max_intensity: float
    beta: float | None         # gradient cutoff; None = flat field, no gradient test


def color_dispersion(frame: Frame) -> float:
    """Sample variance of the per-pixel mean intensities (N-1 normalization)."""
    h, w = frame.shape
    if h * w < 2:
        raise DegenerateInputError("color dispersion needs at least 2 pixels")
    return float(np.var(mean_intensity(frame).values, ddof=1))


def optimal_beta(grad: ScalarField) -> float | None:
    """Histogram threshold maximizing between-class variance (Otsu criterion).

    256 bins over [min, max].  A flat field has no meaningful split and
    returns None, which downstream means "no pixel exceeds beta".
    """
    v = grad.values.ravel()
    lo, hi = float(v.min()), float(v.max())
    if hi - lo <= 1e-12 * max(abs(hi), 1.0):
        return None
    hist, edges = np.histogram(v, bins=HISTOGRAM_BINS, range=(lo, hi))
    hist = hist.astype(np.float64)
    centers = 0.5 * (edges[:-1] + edges[1:])
    total = hist.sum()
    w0 = np.cumsum(hist)[:-1]
    w1 = total - w0
    mass0 = np.cumsum(hist * centers)[:-1]
    mass1 = (hist * centers).sum() - mass0
    with np.errstate(divide="ignore", invalid="ignore"):
        mu0 = np.where(w0 > 0, mass0 / w0, 0.0)
        mu1 = np.where(w1 > 0, mass1 / w1, 0.0)
    between = w0 * w1 * (mu0 - mu1) ** 2
    t = int(np.argmax(between))
    return float(edges[t + 1])


def dilate_mask(mask: SpecularMask, radius: int) -> SpecularMask:
    """Morphological dilation with a square element of half-width ``radius``."""
    if radius < 0:
        raise ValueError(f"radius must be >= 0, got {radius}")
    if radius == 0 or not mask.bits.any():
        return mask
    size = 2 * radius + 1
    out = ndimage.binary_dilation(mask.bits, structure=np.ones((size, size), bool))
    return SpecularMask(out)


def detect_specular_mask(
    frame: Frame, dilation_radius: int = 1
) -> tuple[SpecularMask, DetectionStats]:
    """Label each pixel specular or clean; returns the mask and its stats.

    Specular iff  I(i,j) > max(I) - dispersion  or  |grad I|(i,j) > beta,
    then dilated to cover the halo at region boundaries.
    """
    intensity = mean_intensity(frame)
    s2 = color_dispersion(frame)
    i_max = float(intensity.values.max())
    hot = intensity.values > i_max - s2
    beta = None
    if min(frame.shape) >= 2:
        grad = gradient_magnitude(intensity)
        beta = optimal_beta(grad)
        if beta is not None:
            hot |= grad.values > beta
    mask = dilate_mask(SpecularMask(hot), dilation_radius)
    return mask, DetectionStats(dispersion=s2, max_intensity=i_max, beta=beta)
