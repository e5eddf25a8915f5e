"""Rigid 6-DOF intensity registration with pull-resampling.

Transform convention (the single source of truth; every test derives its
expected values from this):

* A RigidTransform maps FIXED-space physical points into MOVING space:
  q = R @ (p - c) + c + t, where c is the fixed volume's physical center,
  p = origin + index * spacing, and t is in millimeters.
* R applies the z rotation first, then y, then x: R = Rx(rx) @ Ry(ry) @ Rz(rz).
* Resampling pulls: each target voxel center maps through the transform and
  interpolates the moving volume there. A moving volume that is the fixed
  anatomy shifted by +d is therefore recovered with translation -d.

The optimizer is deterministic derivative-free coordinate descent over a
coarse-to-fine pyramid: at each parameter it probes +/- the current step
(a central-difference direction check), extends greedily while the cost
improves, and halves all steps when a full sweep finds no improvement.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DegenerateInput, EmptyOverlap
from .volume_io import BinaryMask, Volume


@dataclass(frozen=True)
class RigidTransform:
    rotation: tuple = (0.0, 0.0, 0.0)  # (rx, ry, rz) radians
    translation: tuple = (0.0, 0.0, 0.0)  # (tx, ty, tz) millimeters

    def __post_init__(self):
        rot = tuple(float(v) for v in self.rotation)
        tra = tuple(float(v) for v in self.translation)
        if len(rot) != 3 or len(tra) != 3:
            raise ValueError("rotation and translation need 3 components each")
        if not all(math.isfinite(v) for v in rot + tra):
            raise ValueError("transform parameters must be finite")
        object.__setattr__(self, "rotation", rot)
        object.__setattr__(self, "translation", tra)

    def matrix(self) -> np.ndarray:
        rx, ry, rz = self.rotation
        cx, sx = math.cos(rx), math.sin(rx)
        cy, sy = math.cos(ry), math.sin(ry)
        cz, sz = math.cos(rz), math.sin(rz)
        mx = np.array([[1, 0, 0], [0, cx, -sx], [0, sx, cx]])
        my = np.array([[cy, 0, sy], [0, 1, 0], [-sy, 0, cy]])
        mz = np.array([[cz, -sz, 0], [sz, cz, 0], [0, 0, 1]])
        return mx @ my @ mz

    def apply(self, points: np.ndarray, center) -> np.ndarray:
        """Map (N, 3) physical points through the transform about `center`."""
        c = np.asarray(center, dtype=float)
        return (points - c) @ self.matrix().T + c + np.asarray(self.translation)

    def inverse(self) -> "RigidTransform":
        """Inverse about the same center: R' = R^T, t' = -R^T t."""
        rt = self.matrix().T
        t = -(rt @ np.asarray(self.translation))
        return RigidTransform(_angles_from_matrix(rt), tuple(t))

    def compose(self, other: "RigidTransform") -> "RigidTransform":
        """self after other (about the same center)."""
        r = self.matrix() @ other.matrix()
        t = self.matrix() @ np.asarray(other.translation) + np.asarray(self.translation)
        return RigidTransform(_angles_from_matrix(r), tuple(t))

    def to_json(self) -> str:
        return json.dumps(
            {"rotation_rad": list(self.rotation), "translation_mm": list(self.translation)}
        )

    @classmethod
    def from_json(cls, text: str) -> "RigidTransform":
        doc = json.loads(text)
        return cls(tuple(doc["rotation_rad"]), tuple(doc["translation_mm"]))


def _angles_from_matrix(r: np.ndarray):
    """Extract (rx, ry, rz) with R = Rx @ Ry @ Rz. Valid away from |ry| = pi/2."""
    ry = math.asin(max(-1.0, min(1.0, float(r[0, 2]))))
    rx = math.atan2(-float(r[1, 2]), float(r[2, 2]))
    rz = math.atan2(-float(r[0, 1]), float(r[0, 0]))
    return (rx, ry, rz)


def volume_center(vol) -> np.ndarray:
    """Physical center of a volume: origin + (dims - 1) / 2 * spacing."""
    dims = np.asarray(vol.dims, dtype=float)
    return np.asarray(vol.origin) + (dims - 1.0) / 2.0 * np.asarray(vol.spacing)


@dataclass(frozen=True)
class RegConfig:
    metric: str = "mse"  # or "ncc"
    pyramid: tuple = (4, 2, 1)
    max_iters: int = 200
    tol: float = 1e-3  # joint update-norm threshold (radians and mm)
    rot_step: float = 0.02  # initial rotation step per pyramid factor, radians
    trans_step: float = 1.0  # initial translation step per pyramid factor, mm
    smooth_passes: int = 3  # binomial smoothing per pyramid level
    # cost is evaluated on voxels at least this far inside the fixed volume, so
    # the comparison support stays identical across candidate transforms; must
    # exceed the largest displacement expected, or the true optimum pays the
    # out-of-support penalty
    support_margin_mm: float = 12.0

    def __post_init__(self):
        if self.metric not in ("mse", "ncc"):
            raise ValueError(f"unknown metric {self.metric!r}")
        factors = tuple(int(f) for f in self.pyramid)
        if not factors or any(f < 1 for f in factors):
            raise ValueError("pyramid factors must be positive")
        if any(a < b for a, b in zip(factors, factors[1:])):
            raise ValueError("pyramid factors must be non-increasing")
        if self.max_iters < 1:
            raise ValueError("max_iters must be >= 1")
        if self.smooth_passes < 0 or self.support_margin_mm < 0:
            raise ValueError("smoothing and margin must be >= 0")
        object.__setattr__(self, "pyramid", factors)


@dataclass
class RegistrationResult:
    transform: RigidTransform
    converged: bool
    iterations: int
    initial_cost: float
    final_cost: float
    cost_history: list = field(default_factory=list)  # accepted costs, per level


def similarity(fixed: Volume, moving_resampled: Volume, metric: str = "mse",
               support: np.ndarray = None) -> float:
    """Cost between two same-grid volumes: MSE, or 1 - NCC. Lower is better."""
    fixed.require_same_geometry(moving_resampled)
    a = fixed.data
    b = moving_resampled.data
    if support is not None:
        if not support.any():
            raise EmptyOverlap("no in-bounds voxels to compare")
        a = a[support]
        b = b[support]
    a = a.astype(np.float64).ravel()
    b = b.astype(np.float64).ravel()
    if metric == "mse":
        d = a - b
        return float(np.mean(d * d))
    if metric == "ncc":
        a = a - a.mean()
        b = b - b.mean()
        denom = np.sqrt((a * a).sum()) * np.sqrt((b * b).sum())
        if denom == 0.0:
            return 1.0
        return float(1.0 - (a * b).sum() / denom)
    raise ValueError(f"unknown metric {metric!r}")


def _grid_points(like) -> np.ndarray:
    """Physical coordinates of all voxel centers of `like`, flattened (N, 3)."""
    nx, ny, nz = like.dims
    ii, jj, kk = np.meshgrid(
        np.arange(nx), np.arange(ny), np.arange(nz), indexing="ij"
    )
    pts = np.stack([ii, jj, kk], axis=-1).reshape(-1, 3).astype(np.float64)
    return pts * np.asarray(like.spacing) + np.asarray(like.origin)


def _moving_coords(t: RigidTransform, like, moving, center, pts=None):
    if pts is None:
        pts = _grid_points(like)
    q = t.apply(pts, center)
    u = (q - np.asarray(moving.origin)) / np.asarray(moving.spacing)
    return u.reshape(*like.dims, 3)


def _sample_nearest(data: np.ndarray, u: np.ndarray):
    dims = np.asarray(data.shape)
    r = np.rint(u).astype(np.int64)
    support = np.all((r >= 0) & (r < dims), axis=-1)
    r = np.clip(r, 0, dims - 1)
    out = data[r[..., 0], r[..., 1], r[..., 2]]
    return np.where(support, out, 0), support


def _sample_trilinear(data: np.ndarray, u: np.ndarray):
    nx, ny, nz = data.shape
    dims = np.array([nx, ny, nz], dtype=np.float64)
    uf = u.reshape(-1, 3)
    support = np.all((uf >= 0.0) & (uf <= dims - 1.0), axis=1)
    lo = np.floor(uf).astype(np.int64)
    np.clip(lo, 0, np.array([nx, ny, nz]) - 2, out=lo)
    if min(nx, ny, nz) < 2:  # degenerate axis: duplicate the single plane
        hi = np.minimum(lo + 1, np.array([nx, ny, nz]) - 1)
        lo = np.clip(lo, 0, np.array([nx, ny, nz]) - 1)
        corners = {}
        for dx in (0, 1):
            for dy in (0, 1):
                for dz in (0, 1):
                    ix = hi[:, 0] if dx else lo[:, 0]
                    iy = hi[:, 1] if dy else lo[:, 1]
                    iz = hi[:, 2] if dz else lo[:, 2]
                    corners[dx, dy, dz] = data[ix, iy, iz]
        get = corners.__getitem__
    else:
        flat = np.ascontiguousarray(data).ravel()
        sx, sy = ny * nz, nz
        base = (lo[:, 0] * ny + lo[:, 1]) * nz + lo[:, 2]
        corners = {
            (dx, dy, dz): flat[base + dx * sx + dy * sy + dz]
            for dx in (0, 1)
            for dy in (0, 1)
            for dz in (0, 1)
        }
        get = corners.__getitem__
    frac = uf - lo
    fx, fy, fz = frac[:, 0], frac[:, 1], frac[:, 2]
    c00 = get((0, 0, 0)) + (get((0, 0, 1)) - get((0, 0, 0))) * fz
    c01 = get((0, 1, 0)) + (get((0, 1, 1)) - get((0, 1, 0))) * fz
    c10 = get((1, 0, 0)) + (get((1, 0, 1)) - get((1, 0, 0))) * fz
    c11 = get((1, 1, 0)) + (get((1, 1, 1)) - get((1, 1, 0))) * fz
    c0 = c00 + (c01 - c00) * fy
    c1 = c10 + (c11 - c10) * fy
    out = c0 + (c1 - c0) * fx
    out[~support] = 0.0
    return out.reshape(u.shape[:-1]), support.reshape(u.shape[:-1])


def resample(moving, t: RigidTransform, like, interpolation: str = "trilinear",
             center=None):
    """Pull-resample `moving` onto the grid of `like` through transform t.

    Returns (volume-or-mask, support) where support marks in-bounds voxels;
    out-of-bounds cells are filled with 0.
    """
    if center is None:
        center = volume_center(like)
    u = _moving_coords(t, like, moving, center)
    if interpolation == "nearest":
        out, support = _sample_nearest(moving.data, u)
    elif interpolation == "trilinear":
        out, support = _sample_trilinear(moving.data.astype(np.float64), u)
        out = out.astype(np.float32)
    else:
        raise ValueError(f"unknown interpolation {interpolation!r}")

    if isinstance(moving, BinaryMask):
        result = BinaryMask(out.astype(np.uint8), like.spacing, like.origin)
    else:
        result = Volume(out.astype(np.float32), like.spacing, like.origin)
    return result, support


def propagate_mask(prior_mask: BinaryMask, t: RigidTransform, like) -> BinaryMask:
    """Nearest-neighbor warp of a mask into the target grid; stays binary."""
    warped, _ = resample(prior_mask, t, like, interpolation="nearest")
    return warped


def _binomial_smooth(a: np.ndarray, passes: int) -> np.ndarray:
    """Separable [1/4, 1/2, 1/4] smoothing with edge-replicated borders."""
    out = a.astype(np.float64)
    for _ in range(passes):
        for ax in range(3):
            if out.shape[ax] < 2:
                continue
            pad = [(1, 1) if i == ax else (0, 0) for i in range(3)]
            p = np.pad(out, pad, mode="edge")
            sl = lambda s: tuple(s if i == ax else slice(None) for i in range(3))
            out = (
                0.25 * p[sl(slice(0, -2))]
                + 0.5 * p[sl(slice(1, -1))]
                + 0.25 * p[sl(slice(2, None))]
            )
    return out


def _interior_region(dims, spacing, margin_mm: float):
    """Voxels at least margin_mm inside the grid, or the whole grid.

    Returns (region, restricted): restricted is False when the margin cannot
    be honored, in which case the caller must not treat lost support as an
    error signal (border voxels always leave support under motion).
    """
    region = np.zeros(dims, dtype=bool)
    marg = [int(np.ceil(margin_mm / s)) for s in spacing]
    if margin_mm > 0 and all(d > 2 * m for d, m in zip(dims, marg)):
        region[
            marg[0] : dims[0] - marg[0],
            marg[1] : dims[1] - marg[1],
            marg[2] : dims[2] - marg[2],
        ] = True
        return region, True
    region[:] = True
    return region, False


def _block_mean(a: np.ndarray, f: int) -> np.ndarray:
    if f == 1:
        return a.astype(np.float64)
    out = a.astype(np.float64)
    for ax in range(3):
        idx = np.arange(0, out.shape[ax], f)
        sums = np.add.reduceat(out, idx, axis=ax)
        counts = np.diff(np.append(idx, out.shape[ax])).astype(np.float64)
        shape = [1, 1, 1]
        shape[ax] = len(idx)
        out = sums / counts.reshape(shape)
    return out


def _downsample(vol: Volume, f: int) -> Volume:
    if f == 1:
        return vol
    data = _block_mean(vol.data, f).astype(np.float32)
    spacing = tuple(s * f for s in vol.spacing)
    # block centers sit (f-1)/2 original voxels past the old origin
    origin = tuple(o + (f - 1) / 2.0 * s for o, s in zip(vol.origin, vol.spacing))
    return Volume(data, spacing, origin)


def register_rigid(fixed: Volume, moving: Volume,
                   config: RegConfig = RegConfig()) -> RegistrationResult:
    """Recover the rigid transform aligning `moving` onto `fixed`'s grid.

    Returns the best transform found; non-convergence at the iteration cap is
    reported through the `converged` flag, not an exception.
    """
    if float(fixed.data.max() - fixed.data.min()) == 0.0:
        raise DegenerateInput("fixed volume has zero intensity range")
    if float(moving.data.max() - moving.data.min()) == 0.0:
        raise DegenerateInput("moving volume has zero intensity range")

    center = volume_center(fixed)
    params = np.zeros(6, dtype=np.float64)  # (rx, ry, rz, tx, ty, tz)
    history = []
    total_iters = 0
    converged = True
    initial_cost = None

    for factor in config.pyramid:
        fx = _downsample(fixed, factor)
        mv = _downsample(moving, factor)
        fx_data = _binomial_smooth(fx.data, config.smooth_passes)
        mv_data = _binomial_smooth(mv.data, config.smooth_passes)
        # coarse levels hunt the basin on the full grid; the fixed interior
        # region only matters for unbiased fine-scale polishing
        margin = config.support_margin_mm if factor == 1 else 0.0
        region, restricted = _interior_region(fx.dims, fx.spacing, margin)
        pts = _grid_points(fx)[region.ravel()]
        fx_vals = fx_data[region]
        mv_origin = np.asarray(mv.origin)
        mv_spacing = np.asarray(mv.spacing)

        def cost(p):
            t = RigidTransform(tuple(p[:3]), tuple(p[3:]))
            u = (t.apply(pts, center) - mv_origin) / mv_spacing
            warped, support = _sample_trilinear(mv_data, u[:, None, None, :])
            warped = warped.ravel()
            support = support.ravel()
            if not support.any():
                return math.inf
            a = fx_vals[support]
            b = warped[support]
            if config.metric == "mse":
                d = a - b
                base = float(np.mean(d * d))
            else:
                am = a - a.mean()
                bm = b - b.mean()
                denom = np.sqrt((am * am).sum()) * np.sqrt((bm * bm).sum())
                base = 1.0 if denom == 0.0 else float(1.0 - (am * bm).sum() / denom)
            if restricted:
                # interior voxels leaving support mark a worse candidate, not
                # a smaller comparison set: penalize to keep costs comparable
                base += 1e3 * float(np.count_nonzero(~support)) / support.size
            return base

        best = cost(params)
        if initial_cost is None:
            initial_cost = best
        history.append(best)
        steps = np.array(
            [config.rot_step * factor] * 3 + [config.trans_step * factor] * 3
        )
        level_converged = False
        for _ in range(config.max_iters):
            total_iters += 1
            sweep_start = params.copy()
            improved = False
            grad = np.zeros(6)
            for i in range(6):
                plus = params.copy()
                plus[i] += steps[i]
                minus = params.copy()
                minus[i] -= steps[i]
                c_plus, c_minus = cost(plus), cost(minus)
                grad[i] = (c_plus - c_minus) / 2.0  # per step_i, scaled units
                if min(c_plus, c_minus) >= best - 1e-15:
                    continue
                sign = 1.0 if c_plus < c_minus else -1.0
                params = plus if sign > 0 else minus
                best = min(c_plus, c_minus)
                history.append(best)
                improved = True
                while True:  # extend along the winning direction
                    cand = params.copy()
                    cand[i] += sign * steps[i]
                    c = cost(cand)
                    if c >= best - 1e-15:
                        break
                    params, best = cand, c
                    history.append(best)
            # coordinate moves stall in coupled valleys; also try the steepest
            # descent direction built from the sweep's central differences
            gnorm = float(np.linalg.norm(grad))
            if gnorm > 0 and np.isfinite(gnorm):
                direction = -grad / gnorm * steps
                cand = params + direction
                c = cost(cand)
                while c < best - 1e-15:
                    params, best = cand, c
                    history.append(best)
                    improved = True
                    cand = params + direction
                    c = cost(cand)
            delta = float(np.linalg.norm(params - sweep_start))
            # exit only once the probe scale is already fine: an improving
            # sweep with a sub-tol update at coarse steps can still be mid-way
            # along a curved valley floor
            if improved and delta < config.tol and steps.max() < 4.0 * config.tol:
                level_converged = True
                break
            if not improved:
                steps /= 2.0
                if steps.max() < config.tol / 2.0:
                    level_converged = True
                    break
        converged = converged and level_converged

    return RegistrationResult(
        transform=RigidTransform(tuple(params[:3]), tuple(params[3:])),
        converged=converged,
        iterations=total_iters,
        initial_cost=float(initial_cost),
        final_cost=float(history[-1]),
        cost_history=history,
    )
