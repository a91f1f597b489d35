import math

import numpy as np
import pytest
from scipy.integrate import quad

from maglab.errors import (
    GridMismatch,
    InvalidParameter,
    OrderTooHigh,
    PacketNearBoundary,
    PacketUnresolved,
    UnresolvedState,
    WeightOverflow,
    ZeroState,
)
from maglab.grid import (
    GridSpec,
    Wavefunction,
    boundary_mass,
    gaussian_packet,
    inner,
    iter_multi_indices,
    l2_norm,
    seminorm_pk,
    spectral_derivative,
    weighted_l2,
)

from conftest import grid1d, grid2d, random_bandlimited


class TestGridSpec:
    def test_spacing(self):
        spec = GridSpec(1, 16.0, 256)
        assert spec.spacing == 0.125

    def test_rejects_non_power_of_two(self):
        with pytest.raises(InvalidParameter):
            GridSpec(1, 8.0, 100)

    def test_rejects_small_n(self):
        with pytest.raises(InvalidParameter):
            GridSpec(1, 8.0, 4)

    def test_rejects_oversized_grid(self):
        with pytest.raises(InvalidParameter):
            GridSpec(4, 8.0, 1024)

    def test_coords_cover_half_open_box(self):
        spec = GridSpec(1, 4.0, 8)
        x = spec.axis_coords()
        assert x[0] == -4.0
        assert x[-1] == 4.0 - spec.spacing


class TestGaussianPacket:
    def test_normalized_1d(self):
        psi = gaussian_packet(grid1d(), [0.0], [0.0], 1.0, 0.1)
        assert abs(l2_norm(psi) - 1.0) < 1e-12

    def test_modulus_ignores_phase_2d(self):
        spec = GridSpec(2, 16.0, 256)
        psi = gaussian_packet(spec, [0.0, 0.0], [1.0, 0.0], 1.0, 0.1)
        r2 = spec.coord(1) ** 2 + spec.coord(2) ** 2
        expected = math.pi ** (-0.5) * np.exp(-r2 / 2.0)
        assert np.max(np.abs(np.abs(psi.values) - expected)) < 1e-12

    def test_unresolved_width_rejected(self):
        spec = grid1d()
        with pytest.raises(PacketUnresolved):
            gaussian_packet(spec, [0.0], [0.0], 2.0 * spec.spacing, 0.1)

    def test_near_boundary_rejected(self):
        spec = grid1d()
        with pytest.raises(PacketNearBoundary):
            gaussian_packet(spec, [15.0], [0.0], 1.0, 0.1)


class TestSpectralDerivative:
    def test_plane_wave_eigenfunction(self):
        spec = grid1d()
        x = spec.coord(1)
        psi = Wavefunction(spec, np.exp(1j * np.pi * x / spec.half_width))
        dpsi = spectral_derivative(psi, 1, 1)
        expected = (1j * np.pi / spec.half_width) * psi.values
        assert np.max(np.abs(dpsi.values - expected)) < 1e-13

    def test_constant_has_zero_derivative(self):
        spec = grid1d()
        psi = Wavefunction(spec, np.full(spec.shape, 2.0 + 0.5j))
        dpsi = spectral_derivative(psi, 1, 1)
        assert np.max(np.abs(dpsi.values)) < 1e-14

    def test_gaussian_matches_analytic(self):
        spec = grid1d()
        psi = gaussian_packet(spec, [0.0], [0.0], 1.0, 0.1)
        dpsi = spectral_derivative(psi, 1, 1)
        x = spec.coord(1)
        expected = -x * psi.values
        assert np.max(np.abs(dpsi.values - expected)) < 1e-10

    def test_mixed_partials_commute(self, rng):
        spec = grid2d()
        psi = random_bandlimited(spec, rng)
        d12 = spectral_derivative(spectral_derivative(psi, 1, 1), 2, 1)
        d21 = spectral_derivative(spectral_derivative(psi, 2, 1), 1, 1)
        assert np.max(np.abs(d12.values - d21.values)) < 1e-11


class TestInnerAndNorm:
    def test_self_inner_nonnegative(self, rng):
        psi = random_bandlimited(grid1d(), rng)
        val = inner(psi, psi)
        assert val.real >= 0.0
        assert abs(val.imag) < 1e-15 * val.real

    def test_gaussian_2d_norm(self):
        spec = GridSpec(2, 16.0, 256)
        r2 = spec.coord(1) ** 2 + spec.coord(2) ** 2
        psi = Wavefunction(spec, np.exp(-r2 / 2.0).astype(complex))
        assert abs(l2_norm(psi) - math.sqrt(math.pi)) < 1e-10

    def test_conjugate_symmetry_exact(self, rng):
        spec = grid1d()
        psi = random_bandlimited(spec, rng)
        phi = random_bandlimited(spec, rng)
        assert inner(psi, phi) == np.conj(inner(phi, psi))

    def test_grid_mismatch(self, rng):
        psi = random_bandlimited(grid1d(), rng)
        phi = random_bandlimited(grid1d(n=512), rng)
        with pytest.raises(GridMismatch):
            inner(psi, phi)

    def test_parseval(self, rng):
        spec = grid1d()
        psi = random_bandlimited(spec, rng)
        hat = np.fft.fftn(psi.values)
        fourier_norm = math.sqrt(
            spec.spacing**spec.d / spec.node_count * float(np.sum(np.abs(hat) ** 2))
        )
        assert abs(l2_norm(psi) - fourier_norm) < 1e-12


class TestSeminorm:
    def test_p0_of_gaussian(self):
        psi = gaussian_packet(grid1d(), [0.0], [0.0], 1.0, 0.1)
        # sup of (pi)^(-1/4) exp(-x^2/2) is (pi)^(-1/4)
        assert abs(seminorm_pk(psi, 0) - math.pi ** (-0.25)) < 1e-10

    def test_p1_of_unnormalized_gaussian(self):
        spec = grid1d()
        x = spec.coord(1)
        psi = Wavefunction(spec, np.exp(-(x**2) / 2.0).astype(complex))
        # sup|psi| = 1 dominates sup|x psi| = sup|psi'| = e^{-1/2}
        assert abs(seminorm_pk(psi, 0) - 1.0) < 1e-10
        assert abs(seminorm_pk(psi, 1) - 1.0) < 1e-10

    def test_monotone_in_k(self, rng):
        psi = gaussian_packet(grid1d(), [0.3], [0.5], 1.2, 0.2)
        values = [seminorm_pk(psi, k) for k in range(5)]
        assert all(b >= a - 1e-12 for a, b in zip(values, values[1:]))

    def test_absolute_homogeneity(self):
        psi = gaussian_packet(grid1d(), [0.0], [1.0], 1.0, 0.1)
        scaled = Wavefunction(psi.spec, (-2.0 + 1.5j) * psi.values)
        c = abs(-2.0 + 1.5j)
        for k in (0, 1, 2):
            assert abs(seminorm_pk(scaled, k) - c * seminorm_pk(psi, k)) < 1e-9

    def test_order_cap(self):
        psi = gaussian_packet(grid1d(), [0.0], [0.0], 1.0, 0.1)
        with pytest.raises(OrderTooHigh):
            seminorm_pk(psi, 7)

    def test_unresolved_state_rejected(self):
        spec = grid1d()
        psi = Wavefunction(spec, np.ones(spec.shape, dtype=complex))
        with pytest.raises(UnresolvedState):
            seminorm_pk(psi, 1)


class TestWeightedL2:
    def test_beta_zero_equals_norm(self, rng):
        psi = random_bandlimited(grid1d(), rng)
        assert weighted_l2(psi, 0.0) == l2_norm(psi)

    def test_monotone_in_beta(self):
        psi = gaussian_packet(grid1d(), [0.0], [0.0], 1.0, 0.1)
        vals = [weighted_l2(psi, b) for b in (0.0, 0.3, 0.7, 1.2)]
        assert all(b >= a for a, b in zip(vals, vals[1:]))
        assert all(v >= l2_norm(psi) for v in vals)

    def test_quadrature_oracle(self):
        spec = GridSpec(1, 16.0, 512)
        x = spec.coord(1)
        psi = Wavefunction(spec, np.exp(-(x**2) / 2.0).astype(complex))
        level = quad(
            lambda t: math.exp(2.0 * math.sqrt(1.0 + t * t)) * math.exp(-(t * t)),
            -16.0, 16.0, epsabs=1e-13, epsrel=1e-13, limit=200, points=[-2.0, 0.0, 2.0],
        )[0]
        assert abs(weighted_l2(psi, 1.0) - math.sqrt(level)) < 1e-8

    def test_overflow_guard(self):
        psi = gaussian_packet(grid1d(), [0.0], [0.0], 1.0, 0.1)
        with pytest.raises(WeightOverflow):
            weighted_l2(psi, 50.0)


class TestBoundaryMass:
    def test_centered_gaussian_negligible(self):
        psi = gaussian_packet(grid1d(), [0.0], [0.0], 1.0, 0.1)
        assert boundary_mass(psi, 0.1) < 1e-30

    def test_constant_state_exact_fraction(self):
        spec = grid1d()
        psi = Wavefunction(spec, np.ones(spec.shape, dtype=complex))
        assert abs(boundary_mass(psi, 0.1) - 0.1) < 1e-12

    def test_constant_state_2d(self):
        spec = grid2d()
        psi = Wavefunction(spec, np.ones(spec.shape, dtype=complex))
        expected = 1.0 - 0.9**2
        assert abs(boundary_mass(psi, 0.1) - expected) < 1e-12

    def test_zero_state(self):
        spec = grid1d()
        psi = Wavefunction(spec, np.zeros(spec.shape, dtype=complex))
        with pytest.raises(ZeroState):
            boundary_mass(psi, 0.1)

    def test_margin_range_validated(self, rng):
        psi = random_bandlimited(grid1d(), rng)
        with pytest.raises(InvalidParameter):
            boundary_mass(psi, 0.7)


def test_multi_index_enumeration():
    idx = list(iter_multi_indices(2, 2))
    assert (0, 0) in idx and (2, 0) in idx and (1, 1) in idx
    assert len(idx) == 6
    assert all(sum(a) <= 2 for a in idx)
