"""Hybrid active-contour energy and its convolution-thresholding solver.

The energy over a binary mask u combines three terms:

  pet term   local Gaussian-window fitting of PET intensity: each voxel x
             pays the kernel-weighted squared misfit of pet(x) against the
             local mean field of its region,
             sum_x u(x) r1(x) + (1-u(x)) r2(x), with
             r_j(x) = pet(x)^2 - 2 pet(x) (K*f_j)(x) + (K*f_j^2)(x)
  ct term    edge-weighted perimeter via the heat kernel,
             sqrt(pi/tau) * sum_x sqrt(g) u * G_tau*(sqrt(g) (1-u)),
             where g is near zero on strong (smoothed) CT edges
  cnn term   two-phase fit of the CNN probability map against its inside
             and outside means c1, c2

All sums carry the voxel volume in mm^3, so with g == 1 the ct term
approximates the surface area of u in mm^2. Minimization alternates exact
coefficient updates (f1, f2, c1, c2) with a pointwise threshold of the
linearized energy difference; both steps decrease the energy, which is
the solver's monotone-descent contract.
"""

import math
from dataclasses import dataclass, replace

import numpy as np

from .errors import CollapseError, EmptyMaskError
from .gauss import (
    HeatKernelSpec,
    KernelSpec,
    convolve_array,
    heat_convolve_array,
)
from .grid import Indicator, ProbabilityMap, Volume3, masked_mean, require_same_meta


@dataclass(frozen=True)
class HybridACParams:
    """Energy weights, kernel widths and solver controls.

    Defaults reproduce the unweighted three-term sum. ``fixed_c`` pins the
    probability means instead of recomputing them from the evolving mask;
    it exists for the degenerate two-phase mode and for tests.
    """

    k_pet: KernelSpec = KernelSpec(sigma_vox=(3.0, 3.0, 3.0))
    heat: HeatKernelSpec = HeatKernelSpec(tau=1.0)
    edge_sigma: float = 1.0
    edge_beta: float = 1.0
    w_pet: float = 1.0
    w_ct: float = 1.0
    w_cnn: float = 1.0
    max_iter: int = 50
    eps: float = 1e-8
    fixed_c: tuple = None

    def __post_init__(self):
        weights = (self.w_pet, self.w_ct, self.w_cnn)
        if any(w < 0 for w in weights):
            raise ValueError(f"term weights must be >= 0, got {weights}")
        if all(w == 0 for w in weights):
            raise ValueError("at least one term weight must be positive")
        if self.max_iter < 1:
            raise ValueError(f"max_iter must be >= 1, got {self.max_iter}")
        if not self.eps > 0:
            raise ValueError(f"eps must be positive, got {self.eps}")
        if not self.edge_sigma > 0:
            raise ValueError(f"edge_sigma must be positive, got {self.edge_sigma}")
        if self.edge_beta < 0:
            raise ValueError(f"edge_beta must be >= 0, got {self.edge_beta}")
        if self.fixed_c is not None:
            object.__setattr__(self, "fixed_c", (float(self.fixed_c[0]), float(self.fixed_c[1])))


@dataclass(frozen=True)
class SolverState:
    """Mask plus the coefficient fields the energy was linearized around."""

    u: Indicator
    f1: Volume3
    f2: Volume3
    c1: float
    c2: float
    g: Volume3
    iter: int = 0
    energy_trace: tuple = ()


@dataclass(frozen=True)
class RefineDiagnostics:
    iterations: int
    converged: bool
    collapsed: bool
    energy_trace: tuple
    changed_voxels: tuple

    def to_dict(self):
        return {
            "iterations": self.iterations,
            "converged": self.converged,
            "collapsed": self.collapsed,
            "energy_trace": list(self.energy_trace),
            "final_energy": self.energy_trace[-1] if self.energy_trace else None,
            "changed_voxels": list(self.changed_voxels),
        }


def edge_indicator(ct: Volume3, sigma: float = 1.0, beta: float = 1.0) -> Volume3:
    """CT edge map g = 1 / (1 + beta * |grad(G_sigma * ct)|^2), in (0, 1].

    ``sigma`` is in mm; the gradient is central differences scaled by the
    voxel spacing (one-sided half steps at the volume faces).
    """
    spacing = ct.meta.spacing
    sigma_vox = tuple(sigma / s for s in spacing)
    smooth = convolve_array(ct.data, sigma_vox, 4.0)
    grad_sq = np.zeros_like(smooth)
    for axis in range(3):
        grad_sq += _central_diff(smooth, axis, spacing[axis]) ** 2
    return Volume3(ct.meta, 1.0 / (1.0 + beta * grad_sq))


def _central_diff(data, axis, step):
    out = np.empty_like(data)
    src = np.moveaxis(data, axis, 0)
    dst = np.moveaxis(out, axis, 0)
    n = src.shape[0]
    if n == 1:
        dst[:] = 0.0
        return out
    dst[1 : n - 1] = (src[2:] - src[: n - 2]) / (2.0 * step)
    # reflect boundary: the missing neighbor equals the edge sample
    dst[0] = (src[1] - src[0]) / (2.0 * step)
    dst[n - 1] = (src[n - 1] - src[n - 2]) / (2.0 * step)
    return out


def local_fit(pet: Volume3, u: Indicator, k: KernelSpec, eps: float = 1e-8):
    """Kernel-weighted mean fields of PET inside and outside the mask.

    f1 = K*(pet u) / (K*u + eps), f2 = K*(pet (1-u)) / (K*(1-u) + eps).
    """
    require_same_meta(pet, u)
    uf = u.data.astype(np.float64)
    f1 = convolve_array(pet.data * uf, k.sigma_vox, k.truncate) / (
        convolve_array(uf, k.sigma_vox, k.truncate) + eps
    )
    vf = 1.0 - uf
    f2 = convolve_array(pet.data * vf, k.sigma_vox, k.truncate) / (
        convolve_array(vf, k.sigma_vox, k.truncate) + eps
    )
    return Volume3(pet.meta, f1), Volume3(pet.meta, f2)


def global_means(p: ProbabilityMap, u: Indicator):
    """Mean probability inside and outside the mask.

    Degenerate sides fall back to the pull-toward-foreground convention:
    empty inside gives c1 = 1, empty outside gives c2 = 0, so the term
    keeps pushing toward the CNN foreground instead of failing.
    """
    require_same_meta(p, u)
    inv = Indicator(u.meta, 1 - u.data)
    try:
        c1 = masked_mean(p, u)
    except EmptyMaskError:
        c1 = 1.0
    try:
        c2 = masked_mean(p, inv)
    except EmptyMaskError:
        c2 = 0.0
    return c1, c2


def _fit_scores(pet_data, f1_data, f2_data, k: KernelSpec):
    """Pointwise misfit fields r1, r2 of the local-fitting term.

    K*1 = 1 for the normalized reflect-boundary kernel, so the leading
    term is just pet^2.
    """
    p2 = pet_data * pet_data
    r1 = (
        p2
        - 2.0 * pet_data * convolve_array(f1_data, k.sigma_vox, k.truncate)
        + convolve_array(f1_data * f1_data, k.sigma_vox, k.truncate)
    )
    r2 = (
        p2
        - 2.0 * pet_data * convolve_array(f2_data, k.sigma_vox, k.truncate)
        + convolve_array(f2_data * f2_data, k.sigma_vox, k.truncate)
    )
    return r1, r2


def score_field(state: SolverState, pet: Volume3, p_cnn: ProbabilityMap,
                params: HybridACParams) -> Volume3:
    """Linearized per-voxel energy difference; thresholding its sign at
    zero (negative -> foreground) is the descent step."""
    phi = np.zeros(pet.meta.shape, dtype=np.float64)
    uf = state.u.data.astype(np.float64)

    if params.w_pet > 0:
        r1, r2 = _fit_scores(pet.data, state.f1.data, state.f2.data, params.k_pet)
        phi += params.w_pet * (r1 - r2)

    if params.w_cnn > 0:
        p = p_cnn.data
        phi += params.w_cnn * ((p - state.c1) ** 2 - (p - state.c2) ** 2)

    if params.w_ct > 0:
        spacing = pet.meta.spacing
        sqrt_g = np.sqrt(state.g.data)
        blur_out = heat_convolve_array(sqrt_g * (1.0 - uf), params.heat, spacing)
        blur_in = heat_convolve_array(sqrt_g * uf, params.heat, spacing)
        factor = math.sqrt(math.pi / params.heat.tau)
        phi += params.w_ct * factor * sqrt_g * (blur_out - blur_in)

    return Volume3(pet.meta, phi)


def pet_energy(pet: Volume3, u: Indicator, f1: Volume3, f2: Volume3,
               k: KernelSpec) -> float:
    """Local-fitting energy in convolution form (includes voxel volume)."""
    r1, r2 = _fit_scores(pet.data, f1.data, f2.data, k)
    uf = u.data.astype(np.float64)
    return pet.meta.voxel_volume * float(np.sum(uf * r1 + (1.0 - uf) * r2))


def ct_energy(u: Indicator, g: Volume3, heat: HeatKernelSpec) -> float:
    """Edge-weighted heat-content perimeter; mm^2 for g == 1."""
    spacing = u.meta.spacing
    uf = u.data.astype(np.float64)
    sqrt_g = np.sqrt(g.data)
    blur_out = heat_convolve_array(sqrt_g * (1.0 - uf), heat, spacing)
    factor = math.sqrt(math.pi / heat.tau)
    return u.meta.voxel_volume * factor * float(np.sum(sqrt_g * uf * blur_out))


def cnn_energy(p: ProbabilityMap, u: Indicator, c1: float, c2: float) -> float:
    uf = u.data.astype(np.float64)
    fit = (p.data - c1) ** 2 * uf + (p.data - c2) ** 2 * (1.0 - uf)
    return p.meta.voxel_volume * float(np.sum(fit))


def total_energy(pet: Volume3, p_cnn: ProbabilityMap, u: Indicator, f1: Volume3,
                 f2: Volume3, c1: float, c2: float, g: Volume3,
                 params: HybridACParams) -> float:
    total = 0.0
    if params.w_pet > 0:
        total += params.w_pet * pet_energy(pet, u, f1, f2, params.k_pet)
    if params.w_ct > 0:
        total += params.w_ct * ct_energy(u, g, params.heat)
    if params.w_cnn > 0:
        total += params.w_cnn * cnn_energy(p_cnn, u, c1, c2)
    return total


def _coefficients(pet, p_cnn, u, params):
    f1, f2 = local_fit(pet, u, params.k_pet, params.eps)
    if params.fixed_c is not None:
        c1, c2 = params.fixed_c
    else:
        c1, c2 = global_means(p_cnn, u)
    return f1, f2, c1, c2


def init_state(pet: Volume3, ct: Volume3, p_cnn: ProbabilityMap, u0: Indicator,
               params: HybridACParams) -> SolverState:
    """Build the starting state: edge map plus coefficients for u0."""
    require_same_meta(pet, ct, p_cnn, u0)
    g = edge_indicator(ct, params.edge_sigma, params.edge_beta)
    f1, f2, c1, c2 = _coefficients(pet, p_cnn, u0, params)
    return SolverState(u=u0, f1=f1, f2=f2, c1=c1, c2=c2, g=g)


def ictm_step(state: SolverState, pet: Volume3, p_cnn: ProbabilityMap,
              params: HybridACParams) -> SolverState:
    """One solver sweep: refresh coefficients, threshold the score field.

    The appended energy is evaluated at the new mask with the refreshed
    coefficients; ties (score exactly zero) land in background.
    """
    f1, f2, c1, c2 = _coefficients(pet, p_cnn, state.u, params)
    scored = replace(state, f1=f1, f2=f2, c1=c1, c2=c2)
    phi = score_field(scored, pet, p_cnn, params)
    next_fg = phi.data < 0.0
    n_fg = int(np.count_nonzero(next_fg))
    if n_fg == 0 or n_fg == next_fg.size:
        which = "empty" if n_fg == 0 else "all-foreground"
        raise CollapseError(f"mask collapsed to {which} at iteration {state.iter + 1}")
    u_next = Indicator(state.u.meta, next_fg.astype(np.uint8))
    energy = total_energy(pet, p_cnn, u_next, f1, f2, c1, c2, state.g, params)
    return SolverState(
        u=u_next,
        f1=f1,
        f2=f2,
        c1=c1,
        c2=c2,
        g=state.g,
        iter=state.iter + 1,
        energy_trace=state.energy_trace + (energy,),
    )


def refine(pet: Volume3, ct: Volume3, p_cnn: ProbabilityMap, u0: Indicator,
           params: HybridACParams = HybridACParams()):
    """Iterate ictm_step from u0 until the mask stops changing.

    Returns (final mask, RefineDiagnostics). A collapse raises
    CollapseError with the diagnostics gathered so far attached.
    """
    if u0.count() == 0:
        raise EmptyMaskError("refine needs a nonempty initial mask")
    state = init_state(pet, ct, p_cnn, u0, params)
    changed = []
    for _ in range(params.max_iter):
        prev = state.u.data
        try:
            state = ictm_step(state, pet, p_cnn, params)
        except CollapseError as exc:
            diag = RefineDiagnostics(
                iterations=state.iter,
                converged=False,
                collapsed=True,
                energy_trace=state.energy_trace,
                changed_voxels=tuple(changed),
            )
            raise CollapseError(str(exc), diagnostics=diag) from None
        changed.append(int(np.count_nonzero(state.u.data != prev)))
        if changed[-1] == 0:
            break
    diag = RefineDiagnostics(
        iterations=state.iter,
        converged=bool(changed and changed[-1] == 0),
        collapsed=False,
        energy_trace=state.energy_trace,
        changed_voxels=tuple(changed),
    )
    return state.u, diag
