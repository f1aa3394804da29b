"""Robust multilevel registration of consecutive prior frames.

Minimizes, over the control points of a cubic B-spline lattice,

    E = sum_x rho(m(phi(x)) - f(x))  +  gamma * sum ||grad u||^2
        + delta * sum_x h(det J_phi(x))

where rho is the Tukey biweight (hard outlier rejection), u is the
displacement field, and h penalizes Jacobian determinants outside the
[1 - zeta, 1 + zeta] margin with exp(-det) + xi*|det|.  The solve is
Levenberg-Marquardt on the control-point vector, coarse-to-fine, with a
regridding restart whenever the determinant drops below tolerance; the
final map is the composition of all regrid snapshots.
"""

from __future__ import annotations

from dataclasses import dataclass, field as dc_field

import numpy as np
from scipy import sparse
from scipy.sparse.linalg import spsolve

from .errors import DimensionMismatchError, RegistrationError
from .ffd import (
    DeformationField,
    FFDLattice,
    axis_tables,
    bilinear_sample_and_grad,
    compose_positions,
    field_from_lattice,
    identity_lattice,
    warp_image,
    warp_plane,
)
from .frameio import PipelineConfig
from .model import Frame, mean_intensity

MAX_ITER_PER_LEVEL = 50
RELATIVE_TOL = 1e-5
MAX_REGRIDS = 20
MAX_REJECTS = 10


def tukey_rho(x, c: float):
    """Tukey biweight loss: bounded by c^2/6, flat beyond |x| = c."""
    if c <= 0:
        raise ValueError(f"cutoff c must be positive, got {c}")
    x = np.asarray(x, dtype=np.float64)
    inside = np.abs(x) <= c
    t = 1.0 - (x / c) ** 2
    rho = (c * c / 6.0) * (1.0 - t**3)
    return np.where(inside, rho, c * c / 6.0)


def tukey_psi(x, c: float):
    """Derivative of tukey_rho: x*(1 - (x/c)^2)^2 inside, 0 outside."""
    if c <= 0:
        raise ValueError(f"cutoff c must be positive, got {c}")
    x = np.asarray(x, dtype=np.float64)
    t = 1.0 - (x / c) ** 2
    return np.where(np.abs(x) <= c, x * t * t, 0.0)


def tukey_weight(x, c: float):
    """psi(x)/x extended by continuity: (1 - (x/c)^2)^2 inside, 0 outside."""
    x = np.asarray(x, dtype=np.float64)
    t = 1.0 - (x / c) ** 2
    return np.where(np.abs(x) <= c, t * t, 0.0)


@dataclass(frozen=True)
class EnergyBreakdown:
    data: float
    smoothness: float
    topology: float
    total: float

    @classmethod
    def combine(cls, d: float, r: float, t: float, gamma: float, delta: float):
        return cls(data=d, smoothness=r, topology=t, total=d + gamma * r + delta * t)


class _Context:
    """Per-level constants: basis/derivative matrices and the smoothness
    normal matrix for a fixed image shape and lattice spacing."""

    def __init__(self, shape: tuple[int, int], spacing: tuple[float, float],
                 grid_dims: tuple[int, int]):
        h, w = shape
        g1, g2 = grid_dims
        c1, w1, d1 = axis_tables(h, spacing[0])
        c2, w2, d2 = axis_tables(w, spacing[1])
        offs = np.arange(4)
        cols = ((c1[:, None, None, None] + offs[None, None, :, None]) * g2
                + (c2[None, :, None, None] + offs[None, None, None, :]))
        rows = np.repeat(np.arange(h * w), 16)
        cols = cols.reshape(h, w, 16).reshape(-1)

        def mat(av, bv):
            vals = (av[:, None, :, None] * bv[None, :, None, :]).reshape(-1)
            return sparse.csr_matrix((vals, (rows, cols)), shape=(h * w, g1 * g2))

        self.shape = shape
        self.spacing = spacing
        self.grid_dims = grid_dims
        self.n_params = g1 * g2
        self.basis = mat(w1, w2)           # values of the 16 local bases
        self.basis_d1 = mat(d1, w2)        # d/dx1 weights
        self.basis_d2 = mat(w1, d2)        # d/dx2 weights
        idx = np.arange(h * w).reshape(h, w)
        di = sparse.csr_matrix(
            (np.concatenate([np.ones((h - 1) * w), -np.ones((h - 1) * w)]),
             (np.concatenate([np.arange((h - 1) * w)] * 2),
              np.concatenate([idx[1:, :].ravel(), idx[:-1, :].ravel()]))),
            shape=((h - 1) * w, h * w))
        dj = sparse.csr_matrix(
            (np.concatenate([np.ones(h * (w - 1)), -np.ones(h * (w - 1))]),
             (np.concatenate([np.arange(h * (w - 1))] * 2),
              np.concatenate([idx[:, 1:].ravel(), idx[:, :-1].ravel()]))),
            shape=(h * (w - 1), h * w))
        self.diff_ops = (di @ self.basis, dj @ self.basis)
        s = sum(2.0 * (d.T @ d) for d in self.diff_ops)
        self.smooth_normal = s.tocsr()

    def positions(self, p: np.ndarray) -> np.ndarray:
        h, w = self.shape
        disp1 = self.basis @ p[: self.n_params]
        disp2 = self.basis @ p[self.n_params:]
        pos = np.empty((h, w, 2))
        pos[:, :, 0] = np.arange(h)[:, None] + disp1.reshape(h, w)
        pos[:, :, 1] = np.arange(w)[None, :] + disp2.reshape(h, w)
        return pos


def _context_for_lattice(lattice: FFDLattice) -> _Context:
    return _Context(lattice.shape, lattice.spacing, lattice.points.shape[:2])


def _params_from_lattice(lattice: FFDLattice) -> np.ndarray:
    d = lattice.displacements
    return np.concatenate([d[:, :, 0].ravel(), d[:, :, 1].ravel()])


def _lattice_from_params(ctx: _Context, p: np.ndarray, ident: FFDLattice) -> FFDLattice:
    g1, g2 = ctx.grid_dims
    disp = np.stack(
        [p[: ctx.n_params].reshape(g1, g2), p[ctx.n_params:].reshape(g1, g2)], axis=-1
    )
    return ident.with_displacements(disp)


def _energy_parts(ctx: _Context, p: np.ndarray, m: np.ndarray, f: np.ndarray,
                  cfg: PipelineConfig) -> dict:
    n = ctx.n_params
    p1, p2 = p[:n], p[n:]
    pos = ctx.positions(p)
    warped, img_g1, img_g2 = bilinear_sample_and_grad(m, pos)
    r = (warped - f).ravel()
    data = float(tukey_rho(r, cfg.tukey_c).sum())

    diffs = [(d @ p1, d @ p2) for d in ctx.diff_ops]
    smooth = float(sum((a * a).sum() + (b * b).sum() for a, b in diffs))

    aa = 1.0 + ctx.basis_d1 @ p1
    bb = ctx.basis_d2 @ p1
    cc = ctx.basis_d1 @ p2
    dd = 1.0 + ctx.basis_d2 @ p2
    det = aa * dd - bb * cc
    active = np.abs(det - 1.0) >= cfg.zeta
    topo = float((np.exp(-det[active]) + cfg.xi * np.abs(det[active])).sum())

    return {
        "pos": pos, "residual": r, "img_g1": img_g1.ravel(), "img_g2": img_g2.ravel(),
        "aa": aa, "bb": bb, "cc": cc, "dd": dd, "det": det, "active": active,
        "energy": EnergyBreakdown.combine(data, smooth, topo, cfg.gamma, cfg.delta),
    }


def _gradients(ctx: _Context, p: np.ndarray, parts: dict, cfg: PipelineConfig):
    n = ctx.n_params
    psi = tukey_psi(parts["residual"], cfg.tukey_c)
    gd = np.concatenate([
        ctx.basis.T @ (psi * parts["img_g1"]),
        ctx.basis.T @ (psi * parts["img_g2"]),
    ])

    gr = np.concatenate([ctx.smooth_normal @ p[:n], ctx.smooth_normal @ p[n:]])

    det, active = parts["det"], parts["active"]
    hp = np.where(active, -np.exp(-det) + cfg.xi * np.sign(det), 0.0)
    aa, bb, cc, dd = parts["aa"], parts["bb"], parts["cc"], parts["dd"]
    gt = np.concatenate([
        ctx.basis_d1.T @ (hp * dd) - ctx.basis_d2.T @ (hp * cc),
        ctx.basis_d2.T @ (hp * aa) - ctx.basis_d1.T @ (hp * bb),
    ])
    return gd, gr, gt


def _row_scaled(mat: sparse.csr_matrix, v: np.ndarray) -> sparse.csr_matrix:
    out = mat.copy()
    out.data *= np.repeat(v, np.diff(mat.indptr))
    return out


def _hessian(ctx: _Context, parts: dict, cfg: PipelineConfig) -> sparse.csr_matrix:
    sw = np.sqrt(tukey_weight(parts["residual"], cfg.tukey_c))
    j1 = _row_scaled(ctx.basis, sw * parts["img_g1"])
    j2 = _row_scaled(ctx.basis, sw * parts["img_g2"])
    jd = sparse.hstack([j1, j2], format="csr")
    h = (jd.T @ jd).tocsr()

    h = h + cfg.gamma * sparse.block_diag(
        [ctx.smooth_normal, ctx.smooth_normal], format="csr"
    )

    active = parts["active"]
    if active.any():
        se = np.sqrt(np.where(active, np.exp(-parts["det"]), 0.0))
        jt1 = _row_scaled(ctx.basis_d1, se * parts["dd"]) - _row_scaled(ctx.basis_d2, se * parts["cc"])
        jt2 = _row_scaled(ctx.basis_d2, se * parts["aa"]) - _row_scaled(ctx.basis_d1, se * parts["bb"])
        jt = sparse.hstack([jt1, jt2], format="csr")
        h = h + cfg.delta * (jt.T @ jt)
    return h


def energy(moving: Frame, fixed: Frame, lattice: FFDLattice,
           cfg: PipelineConfig | None = None) -> EnergyBreakdown:
    """Total alignment energy of the lattice, broken into its three terms.

    Computed on the mean-intensity images with bilinear sampling of the
    moving frame at phi(x).
    """
    cfg = cfg or PipelineConfig()
    if moving.shape != fixed.shape or moving.shape != lattice.shape:
        raise DimensionMismatchError("moving, fixed and lattice shapes must agree")
    ctx = _context_for_lattice(lattice)
    m = mean_intensity(moving).values
    f = mean_intensity(fixed).values
    parts = _energy_parts(ctx, _params_from_lattice(lattice), m, f, cfg)
    return parts["energy"]


def energy_gradients(moving: Frame, fixed: Frame, lattice: FFDLattice,
                     cfg: PipelineConfig | None = None):
    """Analytic gradient of each energy term with respect to the control
    points, each shaped like lattice.points.  Returns (data, smooth, topo)."""
    cfg = cfg or PipelineConfig()
    ctx = _context_for_lattice(lattice)
    m = mean_intensity(moving).values
    f = mean_intensity(fixed).values
    p = _params_from_lattice(lattice)
    parts = _energy_parts(ctx, p, m, f, cfg)
    g1, g2 = ctx.grid_dims

    def shaped(v):
        return np.stack(
            [v[: ctx.n_params].reshape(g1, g2), v[ctx.n_params:].reshape(g1, g2)],
            axis=-1,
        )

    gd, gr, gt = _gradients(ctx, p, parts, cfg)
    return shaped(gd), shaped(gr), shaped(gt)


def _box_down(a: np.ndarray, factor: int) -> np.ndarray:
    out = a
    while factor > 1:
        h, w = out.shape
        if h % 2 or w % 2:
            out = np.pad(out, ((0, h % 2), (0, w % 2)), mode="edge")
        out = 0.25 * (out[0::2, 0::2] + out[1::2, 0::2] + out[0::2, 1::2] + out[1::2, 1::2])
        factor //= 2
    return out


def _eval_disp(disp: np.ndarray, spacing: tuple[float, float],
               shape: tuple[int, int], q1: np.ndarray, q2: np.ndarray) -> np.ndarray:
    """Evaluate a displacement lattice at arbitrary (clamped) coordinates."""
    h, w = shape
    q1 = np.clip(q1, 0.0, h - 1.0)
    q2 = np.clip(q2, 0.0, w - 1.0)
    c1, w1, _ = axis_tables(h, spacing[0], q1)
    c2, w2, _ = axis_tables(w, spacing[1], q2)
    out = np.zeros((len(q1), len(q2), 2))
    for l in range(4):
        rows = disp[c1 + l]
        for m in range(4):
            out += (w1[:, l, None] * w2[:, m])[:, :, None] * rows[:, c2 + m]
    return out


def _prolong(prev: FFDLattice, new_ident: FFDLattice) -> np.ndarray:
    """Initialize the next level's (2x finer image) displacements from the
    previous level's field."""
    g1, g2 = new_ident.points.shape[:2]
    r1 = (np.arange(g1) - 1.0) * new_ident.spacing[0] / 2.0
    r2 = (np.arange(g2) - 1.0) * new_ident.spacing[1] / 2.0
    return 2.0 * _eval_disp(prev.displacements, prev.spacing, prev.shape, r1, r2)


@dataclass
class RegistrationResult:
    field: DeformationField
    warped: Frame
    trace: list = dc_field(default_factory=list)
    regrid_count: int = 0
    iterations: int = 0
    converged: bool = True


def lm_register(moving: Frame, fixed: Frame, cfg: PipelineConfig | None = None) -> RegistrationResult:
    """Align moving to fixed: coarse-to-fine Levenberg-Marquardt with
    multiplicative damping (x10 on energy increase, /10 on decrease),
    terminating each level on relative decrease < 1e-5 or 50 iterations.

    Regridding restarts the solve from the warped image whenever the
    candidate field's min Jacobian determinant drops below regrid_tol;
    the returned field composes every snapshot and has positive
    determinant everywhere.
    """
    cfg = cfg or PipelineConfig()
    if moving.shape != fixed.shape:
        raise DimensionMismatchError(
            f"moving {moving.shape} and fixed {fixed.shape} shapes differ"
        )
    h, w = moving.shape
    m_full = mean_intensity(moving).values
    f_full = mean_intensity(fixed).values

    work_factor = 1
    while max(h, w) // work_factor > cfg.reg_max_dim:
        work_factor *= 2
    m_work = _box_down(m_full, work_factor)
    f_work = _box_down(f_full, work_factor)

    levels = cfg.levels
    # drop levels that would shrink the image below the lattice support
    while levels > 1 and min(m_work.shape) // 2 ** (levels - 1) < cfg.lattice_spacing:
        levels -= 1

    m_src = m_work.copy()
    snapshots: list[np.ndarray] = []
    trace: list[dict] = []
    regrid_count = 0
    iterations = 0
    converged = True
    prev_lattice: FFDLattice | None = None
    lam = 1e-3

    for lev in range(levels):
        rel = 2 ** (levels - 1 - lev)
        f_l = _box_down(f_work, rel)
        m_l = _box_down(m_src, rel)
        ident = identity_lattice(f_l.shape, cfg.lattice_spacing, level=lev)
        ctx = _Context(f_l.shape, ident.spacing, ident.points.shape[:2])
        if prev_lattice is None:
            p = np.zeros(2 * ctx.n_params)
        else:
            disp = _prolong(prev_lattice, ident)
            p = np.concatenate([disp[:, :, 0].ravel(), disp[:, :, 1].ravel()])

        parts = _energy_parts(ctx, p, m_l, f_l, cfg)
        if not np.isfinite(parts["energy"].total):
            raise RegistrationError(f"non-finite energy at level {lev} start")

        for it in range(MAX_ITER_PER_LEVEL):
            gd, gr, gt = _gradients(ctx, p, parts, cfg)
            g = gd + cfg.gamma * gr + cfg.delta * gt
            hess = _hessian(ctx, parts, cfg)
            diag = hess.diagonal()
            damp = np.maximum(diag, 1e-9 * max(float(diag.max()), 1e-30))

            stepped = False
            cand_parts = None
            dp = None
            for _ in range(MAX_REJECTS):
                m_mat = (hess + sparse.diags(lam * damp)).tocsc()
                try:
                    dp = spsolve(m_mat, -g)
                except RuntimeError:
                    lam *= 10.0
                    continue
                if not np.all(np.isfinite(dp)):
                    lam *= 10.0
                    continue
                cand_parts = _energy_parts(ctx, p + dp, m_l, f_l, cfg)
                if not np.isfinite(cand_parts["energy"].total):
                    raise RegistrationError(
                        f"non-finite energy at level {lev} iteration {it}"
                    )
                if cand_parts["energy"].total < parts["energy"].total:
                    stepped = True
                    lam = max(lam * 0.1, 1e-12)
                    break
                lam *= 10.0
                if lam > 1e10:
                    break
            if not stepped:
                break

            if float(cand_parts["det"].min()) < cfg.regrid_tol:
                # candidate folds space: snapshot the current field, warp
                # the source through it, restart from the identity
                regrid_count += 1
                if regrid_count > MAX_REGRIDS:
                    raise RegistrationError(
                        f"regridding ran away ({regrid_count} restarts)"
                    )
                cur = _lattice_from_params(ctx, p, ident)
                snap_work = field_from_lattice(cur, m_work.shape, scale=float(rel))
                snapshots.append(field_from_lattice(cur, (h, w), scale=float(rel * work_factor)))
                m_src = warp_plane(m_src, snap_work)
                m_l = _box_down(m_src, rel)
                p = np.zeros(2 * ctx.n_params)
                parts = _energy_parts(ctx, p, m_l, f_l, cfg)
                trace.append({"level": lev, "iteration": it, "event": "regrid",
                              "energy": parts["energy"], "lam": lam})
                continue

            rel_decrease = (parts["energy"].total - cand_parts["energy"].total) / max(
                abs(parts["energy"].total), 1e-30
            )
            p = p + dp
            parts = cand_parts
            iterations += 1
            trace.append({"level": lev, "iteration": it, "event": "accept",
                          "energy": parts["energy"], "lam": lam})
            if rel_decrease < RELATIVE_TOL:
                break
        else:
            converged = False

        prev_lattice = _lattice_from_params(ctx, p, ident)

    last = field_from_lattice(prev_lattice, (h, w), scale=float(work_factor))
    positions = snapshots[0].copy() if snapshots else last
    if snapshots:
        for nxt in snapshots[1:]:
            positions = compose_positions(positions, nxt)
        positions = compose_positions(positions, last)
    field = DeformationField(positions, history=tuple(snapshots) + (last,))
    warped = warp_image(moving, field)
    return RegistrationResult(
        field=field, warped=warped, trace=trace, regrid_count=regrid_count,
        iterations=iterations, converged=converged,
    )
