"""Synthetic PET/CT/ground-truth/ensemble cases with known geometry.

A phantom is an analytic sphere or ellipsoid rasterized by voxel-center
test: PET gets a two-level contrast plus seeded Gaussian noise, CT gets a
smoothed intensity step across the lesion boundary plus noise, and each
ensemble member is the heat-blurred indicator of a perturbed copy of the
lesion (shifted center, scaled radii). Noise comes from a counter-based
Philox stream keyed by the seed, so identical specs generate bitwise
identical cases regardless of execution order.
"""

from dataclasses import dataclass

import numpy as np

from .errors import BadSpecError
from .gauss import convolve_array
from .grid import GridMeta, Indicator, ProbabilityMap, Volume3

# mm std-dev of the smoothing that turns the lesion step into a CT edge
CT_EDGE_SIGMA_MM = 1.0


@dataclass(frozen=True)
class MemberPerturbation:
    """Lesion jitter applied to one ensemble member."""

    shift_mm: tuple = (0.0, 0.0, 0.0)
    radius_scale: float = 1.0

    def __post_init__(self):
        shift = tuple(float(s) for s in self.shift_mm)
        if len(shift) != 3:
            raise BadSpecError(f"shift_mm must have 3 entries, got {self.shift_mm!r}")
        if not self.radius_scale > 0:
            raise BadSpecError(f"radius_scale must be positive, got {self.radius_scale}")
        object.__setattr__(self, "shift_mm", shift)
        object.__setattr__(self, "radius_scale", float(self.radius_scale))


@dataclass(frozen=True)
class PhantomSpec:
    shape: tuple = (64, 64, 64)
    spacing: tuple = (1.0, 1.0, 1.0)
    center_mm: tuple = (31.5, 31.5, 31.5)
    radii_mm: tuple = (12.0, 12.0, 12.0)
    pet_contrast: tuple = (4.0, 1.0)
    noise_sigma: float = 0.2
    ct_edge_strength: float = 1.0
    prob_blur_sigma: float = 1.5
    member_perturbations: tuple = tuple(MemberPerturbation() for _ in range(5))
    seed: int = 0

    def __post_init__(self):
        shape = tuple(int(n) for n in self.shape)
        spacing = tuple(float(s) for s in self.spacing)
        center = tuple(float(c) for c in self.center_mm)
        radii = np.asarray(self.radii_mm, dtype=np.float64).reshape(-1)
        if radii.size == 1:
            radii = np.repeat(radii, 3)
        radii = tuple(float(r) for r in radii)
        if len(radii) != 3:
            raise BadSpecError(f"radii_mm must be scalar or length 3, got {self.radii_mm!r}")
        if any(r <= 2.0 * max(spacing) for r in radii):
            raise BadSpecError(
                f"radii {radii} must exceed twice the largest spacing {max(spacing)}"
            )
        for a in range(3):
            lo_ok = center[a] - radii[a] >= 3.0 * spacing[a]
            hi_ok = center[a] + radii[a] <= (shape[a] - 1 - 3) * spacing[a]
            if not (lo_ok and hi_ok):
                raise BadSpecError(
                    f"lesion leaves less than a 3-voxel margin on axis {a}"
                )
        perts = tuple(self.member_perturbations)
        if len(perts) != 5:
            raise BadSpecError(f"exactly 5 member perturbations required, got {len(perts)}")
        if not self.prob_blur_sigma > 0:
            raise BadSpecError("prob_blur_sigma must be positive")
        if self.noise_sigma < 0:
            raise BadSpecError("noise_sigma must be >= 0")
        object.__setattr__(self, "shape", shape)
        object.__setattr__(self, "spacing", spacing)
        object.__setattr__(self, "center_mm", center)
        object.__setattr__(self, "radii_mm", radii)
        object.__setattr__(self, "pet_contrast", tuple(float(v) for v in self.pet_contrast))
        object.__setattr__(self, "member_perturbations", perts)

    @property
    def meta(self):
        return GridMeta(self.shape, self.spacing, (0.0, 0.0, 0.0))


@dataclass(frozen=True)
class PhantomCase:
    pet: Volume3
    ct: Volume3
    gt: Indicator
    members: tuple


def _rasterize(meta, center, radii):
    axes = [
        ((np.arange(meta.shape[a], dtype=np.float64) * meta.spacing[a]) - center[a])
        / radii[a]
        for a in range(3)
    ]
    quad = (
        axes[0][:, None, None] ** 2
        + axes[1][None, :, None] ** 2
        + axes[2][None, None, :] ** 2
    )
    return (quad <= 1.0).astype(np.uint8)


def make_phantom(spec: PhantomSpec) -> PhantomCase:
    """Generate one deterministic case from the spec."""
    meta = spec.meta
    gt_data = _rasterize(meta, spec.center_mm, spec.radii_mm)
    gt = Indicator(meta, gt_data)
    gt_f = gt_data.astype(np.float64)

    rng = np.random.Generator(np.random.Philox(spec.seed))
    inside, outside = spec.pet_contrast
    pet = inside * gt_f + outside * (1.0 - gt_f)
    pet = pet + spec.noise_sigma * rng.standard_normal(meta.shape)

    edge_sigma_vox = tuple(CT_EDGE_SIGMA_MM / s for s in meta.spacing)
    ct = spec.ct_edge_strength * convolve_array(gt_f, edge_sigma_vox, 4.0)
    ct = ct + spec.noise_sigma * rng.standard_normal(meta.shape)

    blur_vox = tuple(spec.prob_blur_sigma / s for s in meta.spacing)
    members = []
    for pert in spec.member_perturbations:
        center = tuple(c + d for c, d in zip(spec.center_mm, pert.shift_mm))
        radii = tuple(r * pert.radius_scale for r in spec.radii_mm)
        lesion = _rasterize(meta, center, radii).astype(np.float64)
        blurred = np.clip(convolve_array(lesion, blur_vox, 4.0), 0.0, 1.0)
        members.append(ProbabilityMap(meta, blurred))

    return PhantomCase(
        pet=Volume3(meta, pet), ct=Volume3(meta, ct), gt=gt, members=tuple(members)
    )
