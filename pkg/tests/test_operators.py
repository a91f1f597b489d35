import math

import numpy as np
import pytest

from maglab.errors import (
    InvalidParameter,
    OrderTooHigh,
    ResolutionTooCoarse,
    UnresolvedState,
    ZeroDenominator,
    ZeroState,
)
from maglab.fields import constant2d, free, from_potential, perturbed2d
from maglab.fields import SeparableField
from maglab.grid import GridSpec, Wavefunction, gaussian_packet, inner, l2_norm
from maglab.operators import (
    MagOperatorContext,
    apply_H,
    apply_H_power,
    apply_L,
    apply_word,
    elliptic_ratio,
    energy_identity_residual,
    enumerate_words,
    lowest_eigenvalue,
    solve_H,
)

from conftest import random_bandlimited


@pytest.fixture(scope="module")
def landau():
    spec = GridSpec(2, 8.0, 128)
    return MagOperatorContext(constant2d(1.0), spec, 0.1)


@pytest.fixture()
def packet(landau):
    return gaussian_packet(landau.spec, [0.0, 0.0], [0.3, 0.0], 0.8, landau.h)


def test_enumerate_words_counts():
    words = enumerate_words(2, 2)
    assert words[0] == ()
    assert len(words) == 1 + 2 + 4
    assert len(enumerate_words(3, 3)) == 1 + 3 + 9 + 27


class TestApplyL:
    def test_plane_wave_eigenfunction_free(self):
        spec = GridSpec(1, 16.0, 256)
        ctx = MagOperatorContext(free(1), spec, 0.1)
        x = spec.coord(1)
        psi = Wavefunction(spec, np.exp(1j * np.pi * x / 16.0))
        out = apply_L(ctx, 1, psi)
        expected = (0.1 * np.pi / 16.0) * psi.values
        assert np.max(np.abs(out.values - expected)) < 1e-14

    def test_zero_state(self, landau):
        psi = Wavefunction(landau.spec, np.zeros(landau.spec.shape, dtype=complex))
        assert np.all(apply_L(landau, 1, psi).values == 0.0)

    def test_formal_self_adjointness(self, landau, rng):
        psi = gaussian_packet(landau.spec, [0.3, 0.0], [0.5, -0.2], 0.8, landau.h)
        phi = gaussian_packet(landau.spec, [-0.2, 0.4], [0.0, 0.3], 0.9, landau.h)
        for j in (1, 2):
            lhs = inner(apply_L(landau, j, psi), phi)
            rhs = inner(psi, apply_L(landau, j, phi))
            assert abs(lhs - rhs) < 1e-10


class TestApplyWord:
    def test_empty_word_is_identity(self, landau, packet):
        out = apply_word(landau, (), packet)
        assert np.all(out.values == packet.values)

    def test_word_composition_order(self, landau, packet):
        direct = apply_L(landau, 1, apply_L(landau, 1, packet))
        viaword = apply_word(landau, (1, 1), packet)
        assert np.all(direct.values == viaword.values)

    def test_commutation_defect_is_field_multiplication(self, landau, packet):
        w12 = apply_word(landau, (1, 2), packet)
        w21 = apply_word(landau, (2, 1), packet)
        diff = w12.values - w21.values
        expected = 1j * landau.h * 1.0 * packet.values  # i h B_12, B_12 = 1
        err = np.linalg.norm(diff - expected) / np.linalg.norm(expected)
        assert err < 1e-9

    def test_word_length_cap(self, landau, packet):
        with pytest.raises(OrderTooHigh):
            apply_word(landau, (1,) * 9, packet)


class TestMagneticLaplacian:
    def test_free_plane_wave_eigenvalue(self):
        spec = GridSpec(1, 16.0, 256)
        ctx = MagOperatorContext(free(1), spec, 0.1)
        x = spec.coord(1)
        psi = Wavefunction(spec, np.exp(1j * np.pi * x / 16.0))
        out = apply_H(ctx, psi)
        expected = (0.1 * np.pi / 16.0) ** 2 * psi.values
        assert np.max(np.abs(out.values - expected)) < 1e-14

    def test_quadratic_form_real_nonnegative(self, landau, rng):
        for _ in range(5):
            psi = random_bandlimited(landau.spec, rng)
            q = inner(apply_H(landau, psi), psi)
            assert q.real >= 0.0
            assert abs(q.imag) <= 1e-10 * max(q.real, 1e-30)

    def test_power_composition(self, landau, packet):
        twice = apply_H(landau, apply_H(landau, packet))
        power = apply_H_power(landau, 2, packet)
        assert np.all(twice.values == power.values)
        ident = apply_H_power(landau, 0, packet)
        assert np.all(ident.values == packet.values)

    def test_energy_identity_on_random_states(self, landau, rng):
        for _ in range(20):
            psi = random_bandlimited(landau.spec, rng)
            assert energy_identity_residual(landau, psi) < 1e-9

    def test_energy_identity_single_mode_free(self):
        spec = GridSpec(1, 16.0, 256)
        ctx = MagOperatorContext(free(1), spec, 0.1)
        x = spec.coord(1)
        psi = Wavefunction(spec, np.exp(2j * np.pi * x / 16.0))
        assert energy_identity_residual(ctx, psi) < 1e-13

    def test_energy_identity_zero_state(self, landau):
        psi = Wavefunction(landau.spec, np.zeros(landau.spec.shape, dtype=complex))
        with pytest.raises(ZeroState):
            energy_identity_residual(landau, psi)

    def test_graph_norm_inequalities(self, landau, rng):
        # sum ||L_j psi||^2 <= ||psi|| ||H psi|| <= (||psi||^2 + ||H psi||^2)/2
        for _ in range(10):
            psi = random_bandlimited(landau.spec, rng)
            total = sum(l2_norm(apply_L(landau, j, psi)) ** 2 for j in (1, 2))
            npsi = l2_norm(psi)
            nh = l2_norm(apply_H(landau, psi))
            assert total <= npsi * nh * (1.0 + 1e-12)
            assert npsi * nh <= 0.5 * (npsi**2 + nh**2) + 1e-12


class TestSolve:
    def test_round_trip(self, landau):
        psi = gaussian_packet(landau.spec, [0.0, 0.0], [0.0, 0.0], 0.8, landau.h)
        f = apply_H(landau, psi)
        u = solve_H(landau, f, 1e-10)
        rel = l2_norm(Wavefunction(landau.spec, u.values - psi.values)) / l2_norm(psi)
        assert rel < 1e-9

    def test_inverse_bounded_by_gap(self, landau):
        f = gaussian_packet(landau.spec, [0.0, 0.0], [0.0, 0.0], 0.7, landau.h)
        u = solve_H(landau, f, 1e-8)
        bound = 1.0 / (landau.h * 1.0)  # 1/(h b), the lowest Landau level
        assert l2_norm(u) <= bound * l2_norm(f) * (1.0 + 5e-8)

    def test_tolerance_guard(self, landau, packet):
        with pytest.raises(InvalidParameter):
            solve_H(landau, packet, 1e-20)

    def test_free_model_rejected(self):
        spec = GridSpec(1, 16.0, 256)
        ctx = MagOperatorContext(free(1), spec, 0.1)
        psi = gaussian_packet(spec, [0.0], [0.0], 1.0, 0.1)
        with pytest.raises(InvalidParameter):
            solve_H(ctx, psi, 1e-8)


class TestLowestEigenvalue:
    def test_landau_level_b1(self):
        spec = GridSpec(2, 4.0, 256)
        ctx = MagOperatorContext(constant2d(1.0), spec, 0.1)
        lam = lowest_eigenvalue(ctx, 1e-6)
        assert abs(lam - 0.1) / 0.1 < 5e-3

    def test_landau_level_b2(self):
        spec = GridSpec(2, 4.0, 256)
        ctx = MagOperatorContext(constant2d(2.0), spec, 0.1)
        lam = lowest_eigenvalue(ctx, 1e-6)
        assert abs(lam - 0.2) / 0.2 < 5e-3

    def test_resolution_guard(self):
        spec = GridSpec(2, 12.0, 256)  # spacing 0.09375 > sqrt(0.1)/4
        ctx = MagOperatorContext(constant2d(1.0), spec, 0.1)
        with pytest.raises(ResolutionTooCoarse):
            lowest_eigenvalue(ctx, 1e-6)


class TestEllipticRatio:
    def test_order_zero_is_one(self, landau, packet):
        assert elliptic_ratio(landau, 0, packet) == pytest.approx(1.0)

    def test_positive_finite_n1(self, landau):
        psi = gaussian_packet(landau.spec, [0.0, 0.0], [0.0, 0.0],
                              math.sqrt(landau.h), landau.h)
        r = elliptic_ratio(landau, 1, psi)
        assert np.isfinite(r) and r > 0.0

    def test_gauge_covariance(self):
        # A -> A + grad chi with chi = c x1 x2 and psi -> exp(i chi / h) psi
        # leaves the ratio invariant
        spec = GridSpec(2, 6.0, 256)
        h = 0.1
        c = 0.2
        base = MagOperatorContext(constant2d(1.0), spec, h)
        chi_grad = [
            SeparableField.monomial(2, (0, 1), -1.0 / 2.0 + c),  # -x2/2 + c x2
            SeparableField.monomial(2, (1, 0), 1.0 / 2.0 + c),   # x1/2 + c x1
        ]
        gauged_model = from_potential(2, chi_grad, b0=1.0)
        gauged = MagOperatorContext(gauged_model, spec, h)
        psi = gaussian_packet(spec, [0.0, 0.0], [0.0, 0.0], math.sqrt(h), h)
        chi = c * spec.coord(1) * spec.coord(2)
        psi_gauged = Wavefunction(spec, np.exp(1j * chi / h) * psi.values)
        r1 = elliptic_ratio(base, 1, psi)
        r2 = elliptic_ratio(gauged, 1, psi_gauged)
        assert abs(r1 - r2) / r1 < 1e-8

    def test_order_cap(self, landau, packet):
        with pytest.raises(OrderTooHigh):
            elliptic_ratio(landau, 5, packet)

    def test_zero_denominator(self, landau):
        psi = Wavefunction(landau.spec, np.zeros(landau.spec.shape, dtype=complex))
        with pytest.raises((ZeroDenominator, ZeroState, UnresolvedState)):
            elliptic_ratio(landau, 1, psi)
