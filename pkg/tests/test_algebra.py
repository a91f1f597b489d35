import math
from fractions import Fraction

import numpy as np
import pytest

from maglab.algebra import (
    FuncSymbol,
    H_poly,
    L,
    M,
    SymPoly,
    X,
    a_symbol,
    b_symbol,
    check_H_Lsigma_structure,
    check_xalpha_commutator,
    classify,
    commutator,
    evaluate_sympoly,
    format_poly,
    grade,
    h_commutator_expansion,
    m_left_form,
    normal_form,
    numeric_symbolic_crosscheck,
    one,
    random_sympoly,
    word_poly,
    x_power_poly,
)
from maglab.errors import DerivativeCapExceeded, InvalidParameter, NotNormalForm
from maglab.fields import constant2d, perturbed2d
from maglab.grid import GridSpec, gaussian_packet, l2_norm
from maglab.operators import MagOperatorContext, apply_L, enumerate_words


def ih(k=1):
    """(i h)^k as a SymPoly scalar."""
    re, im = Fraction(1), Fraction(0)
    for _ in range(k):
        re, im = -im, re
    return SymPoly.unit(re=re, im=im, h_power=k)


class TestRingBasics:
    def test_one_is_neutral(self):
        p = L(1) * X(2) + M(a_symbol(1))
        assert one() * p == p
        assert p * one() == p

    def test_commutator_with_self_vanishes(self):
        p = L(1) * L(2) + X(1)
        assert commutator(p, p).is_zero

    def test_free_commutator_has_both_orders(self):
        c = commutator(L(1), L(2))
        words = {w for (w, _) in c.terms}
        assert (("L", 1), ("L", 2)) in words
        assert (("L", 2), ("L", 1)) in words

    def test_b_symbol_antisymmetry(self):
        s1, sym1 = b_symbol(1, 2)
        s2, sym2 = b_symbol(2, 1)
        assert sym1 == sym2 and s1 == -s2
        assert b_symbol(1, 1) == (0, None)


class TestNormalForm:
    def test_magnetic_derivative_commutator(self):
        nf = normal_form(commutator(L(1), L(2)))
        expected = ih() * M(FuncSymbol("B", (1, 2)))
        assert nf == expected

    def test_position_derivative_commutator(self):
        nf = normal_form(commutator(X(1), L(1)))
        assert nf == ih()

    def test_position_laplacian_commutator(self):
        nf = normal_form(commutator(X(1), H_poly(2)))
        assert nf == SymPoly.unit(re=Fraction(0), im=Fraction(2), h_power=1,
                                  word=(("L", 1),))

    def test_x_squared_laplacian_commutator(self):
        nf = normal_form(commutator(x_power_poly((2, 0)), H_poly(2)))
        expected = (
            SymPoly.unit(re=Fraction(4) * 0 + Fraction(0), im=Fraction(4), h_power=1,
                         word=(("X", 1), ("L", 1)))
            + SymPoly.unit(re=Fraction(2), h_power=2)
        )
        assert nf == expected

    def test_multiplier_derivative_generated(self):
        # L_1 M(B_12) = M(B_12) L_1 - i h M(d1 B_12)
        nf = normal_form(L(1) * M(FuncSymbol("B", (1, 2))))
        words = {w for (w, _) in nf.terms}
        assert (("M", FuncSymbol("B", (1, 2))), ("L", 1)) in words
        assert ((("M", FuncSymbol("B", (1, 2), (1,)))),) in words

    def test_derivative_cap(self):
        sym = FuncSymbol("B", (1, 2), (1,) * 8)
        with pytest.raises(DerivativeCapExceeded):
            normal_form(L(1) * M(sym))

    def test_idempotent(self, rng):
        for _ in range(30):
            p = random_sympoly(rng)
            nf = normal_form(p)
            assert normal_form(nf) == nf

    def test_field_squared_term_under_full_sorting(self):
        # full L-sorting of [L_2^2, L_1^2] manufactures an M(B)^2 term, which
        # is exactly why the structural check uses the multiplier-left form
        nf = normal_form(commutator(L(2) * L(2), L(1) * L(1)))
        sym = FuncSymbol("B", (1, 2))
        assert ((("M", sym), ("M", sym)), 2) in nf.terms


class TestAlgebraProperties:
    def test_jacobi_identity(self, rng):
        for _ in range(200):
            p, q, r = (random_sympoly(rng) for _ in range(3))
            jac = (
                commutator(commutator(p, q), r)
                + commutator(commutator(q, r), p)
                + commutator(commutator(r, p), q)
            )
            assert normal_form(jac).is_zero

    def test_confluence_under_random_rule_order(self, rng):
        for _ in range(200):
            p = random_sympoly(rng)
            assert normal_form(p, rng=rng) == normal_form(p)

    def test_grading_conserved(self, rng):
        for _ in range(200):
            p = random_sympoly(rng)
            in_grades = {grade(w, h) for (w, h) in p.terms}
            out_grades = {grade(w, h) for (w, h) in normal_form(p).terms}
            assert out_grades <= in_grades

    def test_canonical_equality_after_shuffle(self, rng):
        for _ in range(200):
            p = random_sympoly(rng)
            items = list(p.terms.items())
            rng.shuffle(items)
            q = SymPoly(dict(items))
            assert normal_form(q) == normal_form(p)

    def test_exact_coefficients_stay_rational(self, rng):
        for _ in range(50):
            p = random_sympoly(rng)
            for (w, h), (re, im) in normal_form(p).terms.items():
                assert isinstance(re, Fraction) and isinstance(im, Fraction)

    def test_leibniz_expansion_matches_free_commutator(self):
        for d in (2, 3):
            for sigma in enumerate_words(d, 3):
                lhs = normal_form(h_commutator_expansion(d, sigma))
                rhs = normal_form(commutator(H_poly(d), word_poly(sigma)))
                assert lhs == rhs, f"mismatch for sigma={sigma}, d={d}"


class TestClassify:
    def test_counts(self):
        word = (("M", FuncSymbol("B", (1, 2))), ("X", 1), ("L", 2), ("L", 2))
        assert classify(word, 1) == (1, 2, 1, 1)

    def test_identity_term(self):
        assert classify((), 0) == (0, 0, 0, 0)

    def test_rejects_unordered_word(self):
        with pytest.raises(NotNormalForm):
            classify((("L", 1), ("X", 1)), 0)
        with pytest.raises(NotNormalForm):
            classify((("L", 2), ("L", 1)), 0)


class TestStructureChecks:
    def test_single_field_factor_d2_n1(self):
        report = check_H_Lsigma_structure(2, 1)
        assert report.passed
        assert report.max_l_count == 2  # realized by |sigma| = 2 words
        assert not report.l_bound_quoted_holds  # the quoted 2n-2 undercounts

    def test_hand_check_H_L1(self):
        # [L_2^2, L_1] = -i h (M(B_12) L_2 + L_2 M(B_12)); multiplier-left form
        # gives -2 i h M(B_12) L_2 - h^2 M(d2 B_12)
        expansion = m_left_form(h_commutator_expansion(2, (1,)))
        b = FuncSymbol("B", (1, 2))
        b2 = FuncSymbol("B", (1, 2), (2,))
        assert expansion.terms[((("M", b), ("L", 2)), 1)] == (Fraction(0), Fraction(-2))
        assert expansion.terms[((("M", b2),), 2)] == (Fraction(-1), Fraction(0))

    def test_equal_index_words_commute(self):
        # [L_j^2, L_j] = 0: the expansion over sigma=(j, j) has no k = j seeds
        expansion = h_commutator_expansion(1, (1, 1))
        assert expansion.is_zero

    def test_structure_d3(self):
        report = check_H_Lsigma_structure(3, 1)
        assert report.passed

    def test_caps(self):
        with pytest.raises(InvalidParameter):
            check_H_Lsigma_structure(4, 1)
        with pytest.raises(InvalidParameter):
            check_H_Lsigma_structure(2, 4)


class TestXalpha:
    def test_single_position(self):
        report = check_xalpha_commutator(2, (1, 0))
        assert report.passed
        assert report.decomposition == "(2)·i·h·L_1"

    def test_double_position(self):
        report = check_xalpha_commutator(2, (2, 0))
        assert report.passed
        assert report.kappa_max == 1 and report.lambda_max == 1

    def test_zero_alpha(self):
        report = check_xalpha_commutator(2, (0, 0))
        assert report.passed and report.terms == 0

    def test_mixed_alpha_class_membership(self):
        for alpha in ((1, 1), (2, 1), (2, 2), (3, 1)):
            report = check_xalpha_commutator(2, alpha)
            assert report.passed
            assert report.kappa_max <= sum(alpha) - 1
            assert report.lambda_max <= 1


class TestNumericCrosscheck:
    @pytest.fixture(scope="class")
    def landau_ctx(self):
        spec = GridSpec(2, 8.0, 128)
        return MagOperatorContext(constant2d(1.0), spec, 0.1)

    @pytest.fixture(scope="class")
    def landau_psi(self, landau_ctx):
        return gaussian_packet(landau_ctx.spec, [0.0, 0.0], [0.3, 0.0], 0.9, 0.1)

    def test_lj_lk_commutator_on_grid(self, landau_ctx, landau_psi):
        resid = numeric_symbolic_crosscheck(landau_ctx, commutator(L(1), L(2)), landau_psi)
        assert resid < 1e-9

    def test_xj_h_commutator_on_grid(self, landau_ctx, landau_psi):
        resid = numeric_symbolic_crosscheck(
            landau_ctx, commutator(X(1), H_poly(2)), landau_psi
        )
        assert resid < 1e-9

    def test_zero_poly(self, landau_ctx, landau_psi):
        assert numeric_symbolic_crosscheck(landau_ctx, SymPoly.zero(), landau_psi) == 0.0

    def test_identity_set_perturbed_model(self):
        spec = GridSpec(2, 8.0, 128)
        ctx = MagOperatorContext(perturbed2d(1.0, 0.3, 1.0, 8.0), spec, 0.1)
        psi = gaussian_packet(spec, [0.0, 0.0], [0.2, -0.1], 0.9, 0.1)
        identities = [commutator(L(1), L(2)), commutator(X(2), L(2)),
                      commutator(X(1), H_poly(2))]
        for sigma in enumerate_words(2, 3):
            if sigma:
                identities.append(commutator(H_poly(2), word_poly(sigma)))
        for p in identities:
            assert numeric_symbolic_crosscheck(ctx, p, psi) < 1e-8

    def test_commutation_relation_against_field_multiplication(self, landau_ctx, landau_psi):
        # [L_1, L_2] psi applied on the grid equals i h B_12 psi
        lhs = apply_L(landau_ctx, 1, apply_L(landau_ctx, 2, landau_psi)).values
        lhs = lhs - apply_L(landau_ctx, 2, apply_L(landau_ctx, 1, landau_psi)).values
        rhs = 1j * landau_ctx.h * 1.0 * landau_psi.values
        spec = landau_ctx.spec
        num = math.sqrt(float(np.vdot(lhs - rhs, lhs - rhs).real))
        den = math.sqrt(float(np.vdot(rhs, rhs).real))
        assert num / den < 1e-9


class TestFormatting:
    def test_zero(self):
        assert format_poly(SymPoly.zero()) == "0"

    def test_simple_terms(self):
        assert format_poly(ih()) == "(1)·i·h"
        p = SymPoly.unit(re=Fraction(-1, 2), h_power=2,
                         word=(("M", FuncSymbol("B", (1, 2), (1, 2))), ("X", 1)))
        assert format_poly(p) == "(-1/2)·h^2·M[dB_{1,2}/dx^(1,2)]·X_1"

    def test_deterministic_order(self, rng):
        p = random_sympoly(rng, max_terms=5)
        assert format_poly(p) == format_poly(SymPoly(dict(p.terms)))
