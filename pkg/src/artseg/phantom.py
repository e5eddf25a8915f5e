"""Synthetic prior/current case generation with exact analytic ground truth.

A case is an ellipsoidal tumor on a linear intensity ramp plus seeded Gaussian
noise. The current scan is the prior anatomy moved by a known rigid transform
(about the volume center) with optionally rescaled tumor radii; its mask is
recomputed from the transformed ellipsoid analytically, never resampled, so
registration and propagation error is measurable against an exact reference.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import TumorOutOfBounds
from .manifest import CaseEntry, DatasetManifest
from .registration import RigidTransform
from .volume_io import BinaryMask, Volume, write_nifti


@dataclass(frozen=True)
class PhantomSpec:
    dims: tuple = (48, 48, 20)
    spacing: tuple = (1.5, 1.5, 3.0)
    origin: tuple = (0.0, 0.0, 0.0)
    tumor_center_mm: tuple | None = None  # defaults to the volume center
    tumor_radii_mm: tuple = (9.0, 7.0, 8.0)
    contrast: float = 80.0
    ramp_offset: float = 100.0
    ramp_gradient: tuple = (1.0, 0.5, 0.25)
    noise_sigma: float = 1.0
    transform: RigidTransform = field(default_factory=RigidTransform)
    radius_scale: float = 1.0
    # imaged tumor edge: 0 = ideal binary step; > 0 renders a partial-volume
    # ramp of that half-width (in voxels) so the image is band-limited like a
    # real scan. The ground-truth mask is always the exact binary ellipsoid.
    edge_width_voxels: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if any(r <= 0 for r in self.tumor_radii_mm):
            raise ValueError(f"tumor_radii_mm must be positive, got {self.tumor_radii_mm}")
        if self.noise_sigma < 0:
            raise ValueError("noise_sigma must be >= 0")
        if self.radius_scale <= 0:
            raise ValueError("radius_scale must be positive")
        if self.edge_width_voxels < 0:
            raise ValueError("edge_width_voxels must be >= 0")
        if self.tumor_center_mm is None:
            dims = np.asarray(self.dims, dtype=float)
            c = np.asarray(self.origin) + (dims - 1.0) / 2.0 * np.asarray(self.spacing)
            object.__setattr__(self, "tumor_center_mm", tuple(c))


@dataclass(frozen=True)
class PhantomCase:
    prior_image: Volume
    prior_mask: BinaryMask
    current_image: Volume
    current_mask: BinaryMask
    truth: RigidTransform  # anatomy motion prior -> current


def _grid_points_mm(spec) -> np.ndarray:
    axes = [
        np.asarray(spec.origin)[i] + np.arange(spec.dims[i]) * spec.spacing[i]
        for i in range(3)
    ]
    ii, jj, kk = np.meshgrid(*axes, indexing="ij")
    return np.stack([ii, jj, kk], axis=-1)


def _tumor_term(points, center, radii, edge_width_mm):
    """Tumor intensity factor in [0, 1]: binary, or a smoothstep edge profile."""
    d = points - center
    q = np.sqrt(((d / radii) ** 2).sum(axis=-1))
    if edge_width_mm <= 0:
        return (q <= 1.0).astype(np.float64)
    # radius of the ellipsoid along each point's direction; signed distance
    # from the surface is then (1 - q) times that radius
    norm = np.linalg.norm(d, axis=-1)
    r_dir = np.where(q > 1e-12, norm / np.maximum(q, 1e-12), float(np.min(radii)))
    sd = (1.0 - q) * r_dir
    t = np.clip(0.5 + sd / (2.0 * edge_width_mm), 0.0, 1.0)
    return t * t * (3.0 - 2.0 * t)


def _check_margin(spec, center, radii_mm, label):
    """radii_mm is per-axis for an axis-aligned ellipsoid, or a scalar bound."""
    radii_mm = np.broadcast_to(np.asarray(radii_mm, dtype=float), (3,))
    for ax in range(3):
        lo_idx = (center[ax] - radii_mm[ax] - spec.origin[ax]) / spec.spacing[ax]
        hi_idx = (center[ax] + radii_mm[ax] - spec.origin[ax]) / spec.spacing[ax]
        if lo_idx < 2.0 or hi_idx > spec.dims[ax] - 3.0:
            raise TumorOutOfBounds(
                f"{label} tumor violates the 2-voxel margin on axis {ax}: "
                f"extent [{lo_idx:.2f}, {hi_idx:.2f}] in a {spec.dims[ax]}-voxel grid"
            )


def generate_case(spec: PhantomSpec) -> PhantomCase:
    """Build one prior/current pair; deterministic per spec."""
    center_tumor = np.asarray(spec.tumor_center_mm, dtype=float)
    radii = np.asarray(spec.tumor_radii_mm, dtype=float)
    _check_margin(spec, center_tumor, radii, "prior")

    vol_center = np.asarray(spec.origin) + (
        np.asarray(spec.dims, dtype=float) - 1.0
    ) / 2.0 * np.asarray(spec.spacing)
    cur_center = spec.transform.apply(center_tumor[None, :], vol_center)[0]
    cur_radii = radii * spec.radius_scale
    if spec.transform.rotation == (0.0, 0.0, 0.0):
        _check_margin(spec, cur_center, cur_radii, "current")
    else:
        # rotated ellipsoid: bound by the largest radius on every axis
        _check_margin(spec, cur_center, float(cur_radii.max()), "current")

    pts = _grid_points_mm(spec)
    flat = pts.reshape(-1, 3)
    rng = np.random.default_rng(spec.seed)
    edge_mm = spec.edge_width_voxels * float(np.mean(spec.spacing))

    prior_in = ((pts - center_tumor) / radii) ** 2
    prior_mask = (prior_in.sum(axis=-1) <= 1.0).astype(np.uint8)
    ramp = spec.ramp_offset + (pts - np.asarray(spec.origin)) @ np.asarray(
        spec.ramp_gradient
    )
    prior_img = ramp + spec.contrast * _tumor_term(pts, center_tumor, radii, edge_mm)
    if spec.noise_sigma > 0:
        prior_img = prior_img + spec.noise_sigma * rng.standard_normal(spec.dims)

    # current anatomy at p equals prior anatomy at T^-1(p); identity is kept
    # bit-exact rather than run through the float round trip
    if spec.transform == RigidTransform():
        back = pts
    else:
        inv = spec.transform.inverse()
        back = inv.apply(flat, vol_center).reshape(pts.shape)
    cur_in = ((back - center_tumor) / cur_radii) ** 2
    current_mask = (cur_in.sum(axis=-1) <= 1.0).astype(np.uint8)
    cur_ramp = spec.ramp_offset + (back - np.asarray(spec.origin)) @ np.asarray(
        spec.ramp_gradient
    )
    current_img = cur_ramp + spec.contrast * _tumor_term(
        back, center_tumor, cur_radii, edge_mm
    )
    if spec.noise_sigma > 0:
        current_img = current_img + spec.noise_sigma * rng.standard_normal(spec.dims)

    return PhantomCase(
        prior_image=Volume(prior_img.astype(np.float32), spec.spacing, spec.origin),
        prior_mask=BinaryMask(prior_mask, spec.spacing, spec.origin),
        current_image=Volume(current_img.astype(np.float32), spec.spacing, spec.origin),
        current_mask=BinaryMask(current_mask, spec.spacing, spec.origin),
        truth=spec.transform,
    )


@dataclass(frozen=True)
class SuiteSpec:
    """Knobs for a multi-patient phantom dataset."""

    dims: tuple = (48, 48, 20)
    spacing: tuple = (1.5, 1.5, 3.0)
    n_patients: int = 2
    fractions_per_patient: int = 3
    contrast: float = 80.0
    ramp_offset: float = 100.0
    ramp_gradient: tuple = (1.0, 0.5, 0.25)
    noise_sigma: float = 1.0
    tumor_radius_mm: tuple = (6.0, 10.0)  # sampled per axis, per patient
    max_translation_mm: float = 4.0
    max_rotation_deg: float = 2.0
    radius_scale_range: tuple = (1.0, 1.0)
    edge_width_voxels: float = 1.5
    seed: int = 0

    def __post_init__(self):
        _require_positive("tumor_radius_mm", min(self.tumor_radius_mm))
        _require_positive("n_patients", self.n_patients)
        _require_positive("fractions_per_patient", self.fractions_per_patient)
        _require_positive("contrast", self.contrast)
        _require_nonnegative("noise_sigma", self.noise_sigma)
        _require_nonnegative("max_translation_mm", self.max_translation_mm)
        _require_nonnegative("max_rotation_deg", self.max_rotation_deg)
        _require_positive("radius_scale_range", min(self.radius_scale_range))

    @classmethod
    def from_dict(cls, doc: dict) -> "SuiteSpec":
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(doc) - known
        if unknown:
            raise ValueError(f"unknown phantom spec fields: {sorted(unknown)}")
        kwargs = {}
        for key, value in doc.items():
            kwargs[key] = tuple(value) if isinstance(value, list) else value
        return cls(**kwargs)


def _require_positive(name, value):
    if value <= 0:
        raise ValueError(f"{name} must be positive, got {value}")


def _require_nonnegative(name, value):
    if value < 0:
        raise ValueError(f"{name} must be >= 0, got {value}")


def _draw_patient_anatomy(suite: SuiteSpec, rng):
    dims = np.asarray(suite.dims, dtype=float)
    spacing = np.asarray(suite.spacing)
    extent = (dims - 1.0) * spacing
    radii = rng.uniform(*suite.tumor_radius_mm, size=3)
    # clamp to what provably fits after the worst-case translation, keeping
    # the 2-voxel margin plus slack for rotation-induced center drift
    feasible = extent / 2.0 - suite.max_translation_mm - 3.5 * spacing
    if np.any(feasible < 1.0):
        raise ValueError(
            f"grid {suite.dims} at spacing {suite.spacing} is too small for "
            f"translations up to {suite.max_translation_mm} mm"
        )
    rotated = suite.max_rotation_deg > 0
    radii = np.minimum(radii, feasible.min() if rotated else feasible)
    margin = radii.max() + 3.0 * spacing.max() + suite.max_translation_mm
    lo = np.minimum(margin, extent / 2.0)
    center = []
    for ax in range(3):
        hi_edge = max(extent[ax] - lo[ax], lo[ax])
        c = rng.uniform(lo[ax], hi_edge)
        # pull the center inward when the draw cannot honor the margins
        bound = radii.max() if rotated else radii[ax]
        reach = bound + suite.max_translation_mm + 2.5 * spacing[ax]
        if extent[ax] > 2 * reach:
            c = min(max(c, reach), extent[ax] - reach)
        else:
            c = extent[ax] / 2.0
        center.append(c)
    return tuple(center), tuple(radii)


def _draw_transform(suite: SuiteSpec, rng) -> RigidTransform:
    rot = np.deg2rad(rng.uniform(-suite.max_rotation_deg, suite.max_rotation_deg, 3))
    tra = rng.uniform(-suite.max_translation_mm, suite.max_translation_mm, 3)
    return RigidTransform(tuple(rot), tuple(tra))


def generate_manifest(suite: SuiteSpec, out_dir) -> DatasetManifest:
    """Write a phantom dataset to disk: per-patient simulation plus fractions.

    Fraction f's anatomy is the simulation anatomy moved by a per-fraction
    transform drawn from the seeded stream; every fraction ships its exact
    analytic mask as ground truth.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(suite.seed)
    cases = []
    for p in range(suite.n_patients):
        patient_id = f"phantom{p:03d}"
        pdir = out_dir / patient_id
        pdir.mkdir(exist_ok=True)
        center, radii = _draw_patient_anatomy(suite, rng)
        for f in range(suite.fractions_per_patient + 1):
            if f == 0:
                transform = RigidTransform()
                scale = 1.0
            else:
                transform = _draw_transform(suite, rng)
                scale = float(rng.uniform(*suite.radius_scale_range))
            spec = PhantomSpec(
                dims=suite.dims,
                spacing=suite.spacing,
                tumor_center_mm=center,
                tumor_radii_mm=radii,
                contrast=suite.contrast,
                ramp_offset=suite.ramp_offset,
                ramp_gradient=suite.ramp_gradient,
                noise_sigma=suite.noise_sigma,
                transform=transform,
                radius_scale=scale,
                edge_width_voxels=suite.edge_width_voxels,
                seed=int(rng.integers(0, 2**63 - 1)),
            )
            case = generate_case(spec)
            img_path = pdir / f"f{f}_img.nii"
            mask_path = pdir / f"f{f}_mask.nii"
            write_nifti(case.current_image, img_path, dtype="float32")
            write_nifti(case.current_mask, mask_path, dtype="uint8")
            cases.append(
                CaseEntry(
                    patient_id=patient_id,
                    fraction_index=f,
                    image=img_path.resolve(),
                    mask=mask_path.resolve(),
                )
            )
    manifest = DatasetManifest(cases=cases, root=out_dir.resolve())
    manifest.validate()
    manifest.save(out_dir / "manifest.json")
    return manifest
