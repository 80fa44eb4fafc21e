import itertools

import numpy as np
import pytest

import oracles
from hac_refine.gauss import (
    HeatKernelSpec,
    KernelSpec,
    gaussian_convolve,
    gaussian_weights,
    heat_convolve,
)
from hac_refine.grid import GridMeta, Volume3


def vol(data, spacing=(1.0, 1.0, 1.0)):
    data = np.asarray(data, dtype=np.float64)
    return Volume3(GridMeta(data.shape, spacing, (0.0, 0.0, 0.0)), data)


def impulse(n=33):
    data = np.zeros((n, n, n))
    data[n // 2, n // 2, n // 2] = 1.0
    return vol(data)


class TestGaussianConvolve:
    def test_constant_preserved(self):
        v = vol(np.full((10, 12, 9), 3.25))
        out = gaussian_convolve(v, KernelSpec(sigma_vox=2.0))
        np.testing.assert_allclose(out.data, 3.25, rtol=0, atol=1e-6)

    def test_impulse_symmetric_and_mass_one(self):
        out = gaussian_convolve(impulse(), KernelSpec(sigma_vox=2.0))
        assert out.data.sum() == pytest.approx(1.0, abs=1e-6)
        for axis in range(3):
            np.testing.assert_allclose(
                out.data, np.flip(out.data, axis=axis), rtol=0, atol=1e-15
            )

    def test_impulse_second_moment(self):
        # oracle: the discrete moment of the truncated normalized taps
        sigma = 3.0
        want = oracles.discrete_second_moment(gaussian_weights(sigma, 4.0))
        assert want == pytest.approx(sigma**2, rel=0.02)
        out = gaussian_convolve(impulse(41), KernelSpec(sigma_vox=sigma, truncate=4.0))
        c = 20
        t = np.arange(41, dtype=np.float64) - c
        for axis in range(3):
            marginal = out.data.sum(axis=tuple(a for a in range(3) if a != axis))
            got = float((marginal * t * t).sum())
            assert got == pytest.approx(want, rel=1e-10)
            assert got == pytest.approx(sigma**2, rel=0.02)

    def test_spec_validation(self):
        with pytest.raises(ValueError):
            KernelSpec(sigma_vox=0.0)
        with pytest.raises(ValueError):
            KernelSpec(sigma_vox=1.0, truncate=1.5)

    def test_matches_scipy_reflect(self, rng):
        scipy_ndimage = pytest.importorskip("scipy.ndimage")
        data = rng.normal(size=(14, 11, 13))
        got = gaussian_convolve(vol(data), KernelSpec(sigma_vox=1.7, truncate=4.0))
        want = scipy_ndimage.gaussian_filter(data, 1.7, mode="reflect", truncate=4.0)
        np.testing.assert_allclose(got.data, want, rtol=0, atol=1e-12)


class TestHeatConvolve:
    def test_constant_preserved(self):
        v = vol(np.full((9, 9, 9), -1.5))
        out = heat_convolve(v, HeatKernelSpec(tau=1.0))
        np.testing.assert_allclose(out.data, -1.5, rtol=0, atol=1e-6)

    def test_impulse_second_moment_is_2tau(self):
        tau = 0.5
        out = heat_convolve(impulse(41), HeatKernelSpec(tau=tau))
        t = np.arange(41, dtype=np.float64) - 20
        for axis in range(3):
            marginal = out.data.sum(axis=tuple(a for a in range(3) if a != axis))
            got = float((marginal * t * t).sum())
            assert got == pytest.approx(2.0 * tau, rel=0.02)

    def test_anisotropic_spacing_isotropic_in_mm(self):
        # kernel must be isotropic in mm: moments in mm^2 agree across axes
        n = 41
        data = np.zeros((n, n, n))
        data[20, 20, 20] = 1.0
        spacing = (0.5, 1.0, 2.0)
        out = heat_convolve(vol(data, spacing), HeatKernelSpec(tau=2.0))
        for axis in range(3):
            marginal = out.data.sum(axis=tuple(a for a in range(3) if a != axis))
            t_mm = (np.arange(n, dtype=np.float64) - 20) * spacing[axis]
            got = float((marginal * t_mm * t_mm).sum())
            assert got == pytest.approx(4.0, rel=0.02)  # 2*tau

    def test_indicator_ball_boundary_strictly_interior(self):
        n = 24
        idx = np.indices((n, n, n)).astype(np.float64)
        r2 = sum((idx[a] - n / 2 + 0.5) ** 2 for a in range(3))
        ball = (r2 <= 6.0**2).astype(np.float64)
        out = heat_convolve(vol(ball), HeatKernelSpec(tau=1.0))
        shell = np.abs(np.sqrt(r2) - 6.0) < 1.0
        assert np.all(out.data[shell] > 0.0)
        assert np.all(out.data[shell] < 1.0)

    def test_linearity(self, rng):
        u = vol(rng.normal(size=(8, 9, 7)))
        w = vol(rng.normal(size=(8, 9, 7)))
        h = HeatKernelSpec(tau=0.8)
        lhs = heat_convolve(vol(2.0 * u.data + 3.0 * w.data), h)
        rhs = 2.0 * heat_convolve(u, h).data + 3.0 * heat_convolve(w, h).data
        np.testing.assert_allclose(lhs.data, rhs, rtol=0, atol=1e-6)

    def test_partition_of_unity(self, rng):
        u = vol((rng.random(size=(10, 8, 11)) < 0.4).astype(np.float64))
        h = HeatKernelSpec(tau=1.5)
        total = heat_convolve(u, h).data + heat_convolve(vol(1.0 - u.data), h).data
        np.testing.assert_allclose(total, 1.0, rtol=0, atol=1e-6)

    def test_commutes_with_axis_permutation(self, rng):
        data = rng.normal(size=(9, 9, 9))
        h = HeatKernelSpec(tau=1.0)
        base = heat_convolve(vol(data), h).data
        for perm in itertools.permutations(range(3)):
            permuted = heat_convolve(vol(np.transpose(data, perm)), h).data
            np.testing.assert_allclose(
                permuted, np.transpose(base, perm), rtol=0, atol=1e-12
            )
