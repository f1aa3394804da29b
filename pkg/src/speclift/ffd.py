"""Free-form deformation geometry: cubic B-spline lattices and fields.

A deformation is parameterized by a coarse lattice of 2-D control point
positions; the dense map phi(x) is the tensor-product cubic B-spline
interpolation of the 4x4 surrounding points.  Control points sit at
rest on a uniform grid covering the image plus a one-cell border, so a
rest lattice reproduces the identity exactly.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, replace

import numpy as np

from .errors import DimensionMismatchError
from .model import Frame


def bspline_weights(u):
    """The four cubic B-spline basis values at fractional position u in [0, 1).

    Returns an array with a trailing axis of length 4; the weights are
    nonnegative and sum to 1.
    """
    u = np.asarray(u, dtype=np.float64)
    if np.any(u < 0.0) or np.any(u >= 1.0):
        raise ValueError("u must lie in [0, 1)")
    u2 = u * u
    u3 = u2 * u
    w = np.stack(
        [
            (1.0 - u) ** 3 / 6.0,
            (3.0 * u3 - 6.0 * u2 + 4.0) / 6.0,
            (-3.0 * u3 + 3.0 * u2 + 3.0 * u + 1.0) / 6.0,
            u3 / 6.0,
        ],
        axis=-1,
    )
    return w


def bspline_deriv_weights(u):
    """Derivatives of the four basis functions with respect to u."""
    u = np.asarray(u, dtype=np.float64)
    u2 = u * u
    return np.stack(
        [
            -0.5 * (1.0 - u) ** 2,
            (9.0 * u2 - 12.0 * u) / 6.0,
            (-9.0 * u2 + 6.0 * u + 3.0) / 6.0,
            0.5 * u2,
        ],
        axis=-1,
    )


def _cell_count(extent: int, spacing: float) -> int:
    # sized so every x in [0, extent-1] lands in a cell with u in [0, 1)
    return int(np.floor((extent - 1) / spacing)) + 1


@dataclass(frozen=True)
class FFDLattice:
    """Control-point positions on a uniform grid with a one-cell border.

    points has shape (cells_i + 3, cells_j + 3, 2); grid node (a, b)
    rests at ((a - 1) * spacing_i, (b - 1) * spacing_j).
    """

    points: np.ndarray
    spacing: tuple[float, float]
    shape: tuple[int, int]  # image domain (H, W) the lattice covers
    level: int = 0

    @property
    def rest(self) -> np.ndarray:
        g1, g2 = self.points.shape[:2]
        ri = (np.arange(g1) - 1.0) * self.spacing[0]
        rj = (np.arange(g2) - 1.0) * self.spacing[1]
        out = np.empty((g1, g2, 2))
        out[:, :, 0] = ri[:, None]
        out[:, :, 1] = rj[None, :]
        return out

    @property
    def displacements(self) -> np.ndarray:
        return self.points - self.rest

    def with_displacements(self, disp: np.ndarray) -> "FFDLattice":
        return replace(self, points=self.rest + disp)


def identity_lattice(shape: tuple[int, int], spacing: float, level: int = 0) -> FFDLattice:
    h, w = shape
    ci = _cell_count(h, spacing)
    cj = _cell_count(w, spacing)
    lat = FFDLattice(
        points=np.zeros((ci + 3, cj + 3, 2)),
        spacing=(float(spacing), float(spacing)),
        shape=(h, w),
        level=level,
    )
    return replace(lat, points=lat.rest)


def axis_tables(extent: int, spacing: float, coords: np.ndarray | None = None):
    """Per-coordinate cell indices plus basis and derivative weights.

    Returns (cell, w, dw): cell (n,) int, w and dw (n, 4).  dw is already
    divided by the spacing, i.e. it is d/dx not d/du.
    """
    if coords is None:
        coords = np.arange(extent, dtype=np.float64)
    t = coords / spacing
    cell = np.floor(t).astype(np.intp)
    cell = np.clip(cell, 0, _cell_count(extent, spacing) - 1)
    u = t - cell
    return cell, bspline_weights(u), bspline_deriv_weights(u) / spacing


def deform(lattice: FFDLattice, x: tuple[float, float]) -> np.ndarray:
    """Map a single position through the lattice (16-point tensor product)."""
    h, w = lattice.shape
    x1, x2 = float(x[0]), float(x[1])
    c1, w1, _ = axis_tables(h, lattice.spacing[0], np.array([x1]))
    c2, w2, _ = axis_tables(w, lattice.spacing[1], np.array([x2]))
    out = np.zeros(2)
    for l in range(4):
        for m in range(4):
            out += w1[0, l] * w2[0, m] * lattice.points[c1[0] + l, c2[0] + m]
    return out


def deform_grid(lattice: FFDLattice, tables=None) -> np.ndarray:
    """phi(x) for every pixel of the lattice's image domain, shape (H, W, 2)."""
    h, w = lattice.shape
    if tables is None:
        c1, w1, _ = axis_tables(h, lattice.spacing[0])
        c2, w2, _ = axis_tables(w, lattice.spacing[1])
    else:
        (c1, w1, _), (c2, w2, _) = tables
    pos = np.zeros((len(c1), len(c2), 2))
    for l in range(4):
        rows = lattice.points[c1 + l]
        for m in range(4):
            pos += (w1[:, l, None] * w2[:, m])[:, :, None] * rows[:, c2 + m]
    return pos


def jacobian_grid(lattice: FFDLattice, tables=None) -> np.ndarray:
    """det of the deformation Jacobian at every pixel, shape (H, W)."""
    h, w = lattice.shape
    if tables is None:
        c1, w1, d1 = axis_tables(h, lattice.spacing[0])
        c2, w2, d2 = axis_tables(w, lattice.spacing[1])
    else:
        (c1, w1, d1), (c2, w2, d2) = tables
    dphi_d1 = np.zeros((len(c1), len(c2), 2))  # d phi / d x1
    dphi_d2 = np.zeros((len(c1), len(c2), 2))  # d phi / d x2
    for l in range(4):
        rows = lattice.points[c1 + l]
        for m in range(4):
            p = rows[:, c2 + m]
            dphi_d1 += (d1[:, l, None] * w2[:, m])[:, :, None] * p
            dphi_d2 += (w1[:, l, None] * d2[:, m])[:, :, None] * p
    return dphi_d1[..., 0] * dphi_d2[..., 1] - dphi_d2[..., 0] * dphi_d1[..., 1]


def jacobian_det(lattice: FFDLattice, x: tuple[float, float]) -> float:
    """Analytic Jacobian determinant of the deformation at one position."""
    h, w = lattice.shape
    c1, w1, d1 = axis_tables(h, lattice.spacing[0], np.array([float(x[0])]))
    c2, w2, d2 = axis_tables(w, lattice.spacing[1], np.array([float(x[1])]))
    a = np.zeros(2)
    b = np.zeros(2)
    for l in range(4):
        for m in range(4):
            p = lattice.points[c1[0] + l, c2[0] + m]
            a += d1[0, l] * w2[0, m] * p
            b += w1[0, l] * d2[0, m] * p
    return float(a[0] * b[1] - b[0] * a[1])


def bilinear_sample(img: np.ndarray, pos: np.ndarray) -> np.ndarray:
    """Sample img (H, W) or (H, W, C) at positions (..., 2), clamped to the
    border (out-of-domain positions take the nearest boundary value)."""
    h, w = img.shape[:2]
    p1 = np.clip(pos[..., 0], 0.0, h - 1.0)
    p2 = np.clip(pos[..., 1], 0.0, w - 1.0)
    i0 = np.floor(p1).astype(np.intp)
    j0 = np.floor(p2).astype(np.intp)
    i0 = np.minimum(i0, h - 2) if h > 1 else i0 * 0
    j0 = np.minimum(j0, w - 2) if w > 1 else j0 * 0
    fi = p1 - i0
    fj = p2 - j0
    i1 = np.minimum(i0 + 1, h - 1)
    j1 = np.minimum(j0 + 1, w - 1)
    if img.ndim == 3:
        fi = fi[..., None]
        fj = fj[..., None]
    v00 = img[i0, j0]
    v01 = img[i0, j1]
    v10 = img[i1, j0]
    v11 = img[i1, j1]
    top = v00 * (1 - fj) + v01 * fj
    bot = v10 * (1 - fj) + v11 * fj
    return top * (1 - fi) + bot * fi


def bilinear_sample_and_grad(img: np.ndarray, pos: np.ndarray):
    """Bilinear value plus its exact spatial derivatives at pos.

    Outside the domain the clamped sample is constant, so the derivative
    in the clamped axis is zero there.
    """
    h, w = img.shape
    in1 = (pos[..., 0] >= 0.0) & (pos[..., 0] <= h - 1.0)
    in2 = (pos[..., 1] >= 0.0) & (pos[..., 1] <= w - 1.0)
    p1 = np.clip(pos[..., 0], 0.0, h - 1.0)
    p2 = np.clip(pos[..., 1], 0.0, w - 1.0)
    i0 = np.minimum(np.floor(p1).astype(np.intp), h - 2) if h > 1 else np.zeros(p1.shape, np.intp)
    j0 = np.minimum(np.floor(p2).astype(np.intp), w - 2) if w > 1 else np.zeros(p2.shape, np.intp)
    fi = p1 - i0
    fj = p2 - j0
    i1 = np.minimum(i0 + 1, h - 1)
    j1 = np.minimum(j0 + 1, w - 1)
    v00, v01 = img[i0, j0], img[i0, j1]
    v10, v11 = img[i1, j0], img[i1, j1]
    val = (v00 * (1 - fj) + v01 * fj) * (1 - fi) + (v10 * (1 - fj) + v11 * fj) * fi
    g1 = ((v10 - v00) * (1 - fj) + (v11 - v01) * fj) * in1
    g2 = ((v01 - v00) * (1 - fi) + (v11 - v10) * fi) * in2
    return val, g1, g2


def identity_positions(shape: tuple[int, int]) -> np.ndarray:
    h, w = shape
    out = np.empty((h, w, 2))
    out[:, :, 0] = np.arange(h, dtype=np.float64)[:, None]
    out[:, :, 1] = np.arange(w, dtype=np.float64)[None, :]
    return out


@dataclass(frozen=True)
class DeformationField:
    """Dense per-pixel mapped positions plus the regrid snapshot history.

    positions[i, j] is phi((i, j)).  history holds the position arrays of
    every regrid snapshot followed by the last optimized field; positions
    equals their left-to-right composition.
    """

    positions: np.ndarray
    history: tuple[np.ndarray, ...] = ()

    def __post_init__(self):
        if self.positions.ndim != 3 or self.positions.shape[2] != 2:
            raise DimensionMismatchError(
                f"field must be (H, W, 2), got {self.positions.shape}"
            )

    @property
    def shape(self) -> tuple[int, int]:
        return self.positions.shape[:2]

    @property
    def displacements(self) -> np.ndarray:
        return self.positions - identity_positions(self.shape)


def identity_field(shape: tuple[int, int]) -> DeformationField:
    return DeformationField(identity_positions(shape))


def compose_positions(outer: np.ndarray, inner: np.ndarray) -> np.ndarray:
    """Positions of x -> outer(inner(x)).

    The outer field's displacement (not its absolute position) is sampled
    at the inner positions; this keeps the identity part exact so border
    clamping cannot flatten the composition.
    """
    disp = outer - identity_positions(outer.shape[:2])
    return inner + bilinear_sample(disp, inner)


def field_from_lattice(
    lattice: FFDLattice, out_shape: tuple[int, int] | None = None, scale: float = 1.0
) -> np.ndarray:
    """Dense positions for an image of out_shape, where the lattice lives
    in coordinates out_shape/scale (used to lift pyramid-level lattices
    to full resolution)."""
    if out_shape is None or (out_shape == lattice.shape and scale == 1.0):
        return deform_grid(lattice)
    h, w = out_shape
    hl, wl = lattice.shape
    q1 = np.clip(np.arange(h, dtype=np.float64) / scale, 0.0, hl - 1.0)
    q2 = np.clip(np.arange(w, dtype=np.float64) / scale, 0.0, wl - 1.0)
    c1, w1, _ = axis_tables(hl, lattice.spacing[0], q1)
    c2, w2, _ = axis_tables(wl, lattice.spacing[1], q2)
    pos = np.zeros((h, w, 2))
    for l in range(4):
        rows = lattice.points[c1 + l]
        for m in range(4):
            pos += (w1[:, l, None] * w2[:, m])[:, :, None] * rows[:, c2 + m]
    return pos * scale


def warp_plane(values: np.ndarray, positions: np.ndarray) -> np.ndarray:
    """Resample a scalar (H, W) image at phi(x) with border clamping."""
    return bilinear_sample(values, positions)


def warp_image(image: Frame, field: DeformationField) -> Frame:
    """Resample each channel of the frame at phi(x)."""
    if field.shape != image.shape:
        raise DimensionMismatchError(
            f"field shape {field.shape} does not match image {image.shape}"
        )
    warped = bilinear_sample(np.asarray(image.data), field.positions)
    return Frame(np.clip(warped, 0.0, 1.0))


def field_jacobian(positions: np.ndarray) -> np.ndarray:
    """Finite-difference Jacobian determinant of a dense field."""
    d1 = np.stack(np.gradient(positions[..., 0]), axis=-1)
    d2 = np.stack(np.gradient(positions[..., 1]), axis=-1)
    return d1[..., 0] * d2[..., 1] - d1[..., 1] * d2[..., 0]


_FIELD_MAGIC = b"FFD1"


def save_deformation_field(field: DeformationField, path) -> None:
    """Raw dump: 16-byte header (magic 'FFD1', H, W, reserved int32,
    little-endian) followed by two float32 planes (phi_1 then phi_2)."""
    h, w = field.shape
    with open(path, "wb") as fh:
        fh.write(_FIELD_MAGIC + struct.pack("<iii", h, w, 0))
        fh.write(field.positions[..., 0].astype("<f4").tobytes())
        fh.write(field.positions[..., 1].astype("<f4").tobytes())


def load_deformation_field(path) -> DeformationField:
    with open(path, "rb") as fh:
        header = fh.read(16)
        if len(header) != 16 or header[:4] != _FIELD_MAGIC:
            raise ValueError(f"{path}: not a deformation-field dump")
        h, w, _ = struct.unpack("<iii", header[4:])
        plane = h * w * 4
        raw = fh.read(2 * plane)
    p1 = np.frombuffer(raw[:plane], dtype="<f4").reshape(h, w)
    p2 = np.frombuffer(raw[plane:], dtype="<f4").reshape(h, w)
    return DeformationField(np.stack([p1, p2], axis=-1).astype(np.float64))
