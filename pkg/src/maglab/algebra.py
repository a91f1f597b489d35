"""Exact noncommutative algebra over the generators L_j (magnetic derivatives),
X_j (positions) and M_f (multiplication by a field component or one of its
derivatives), with the magnetic commutation relations

    L_j L_k = L_k L_j + i h M(B_jk)          (j > k)
    L_j X_k = X_k L_j - i h delta_jk
    L_j M(f) = M(f) L_j - i h M(d_j f)
    X, M and the M's among themselves commute.

Ground-truth convention: L_j = -i h d_j - A_j and B_jk = d_j A_k - d_k A_j,
which gives [L_j, L_k] = i h M(B_jk) and [x_k, L_j] = i h delta_kj.  All
coefficients are exact Gaussian rationals times integer powers of h; no
floating point enters before grid evaluation.

`normal_form` orders every word as (multipliers, positions, magnetic
derivatives), each block sorted; it is the unique canonical form.
`m_left_form` only commutes multipliers/positions to the left and preserves
the relative order of the L's, which is the ordering the structural analysis
of [H, L_sigma] relies on (full L-sorting would manufacture extra
field-squared terms via the L-L relation).
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .errors import (
    DerivativeCapExceeded,
    InvalidParameter,
    NotNormalForm,
    StructureViolation,
)

DEFAULT_DERIVATIVE_CAP = 8

_RANK = {"M": 0, "X": 1, "L": 2}

_ZERO = Fraction(0)
_ONE = Fraction(1)


@dataclass(frozen=True)
class FuncSymbol:
    """A formal multiplier: component of A or B, differentiated along `deriv` axes."""

    kind: str              # "A" or "B"
    base: tuple            # (j,) for A_j, (j, k) with j < k for B_jk
    deriv: tuple = ()      # sorted 1-based axes, e.g. (1, 1, 2)

    def derived(self, axis):
        return FuncSymbol(self.kind, self.base, tuple(sorted(self.deriv + (axis,))))


def a_symbol(j):
    return FuncSymbol("A", (int(j),))


def b_symbol(j, k):
    """Canonical B symbol with sorted indices; returns (sign, symbol) or (0, None) if j == k."""
    if j == k:
        return 0, None
    if j < k:
        return 1, FuncSymbol("B", (int(j), int(k)))
    return -1, FuncSymbol("B", (int(k), int(j)))


def canonical_b_expansion(sym):
    """Express a differentiated B symbol in the canonical basis.

    Closedness of B ties the first derivatives together,
    d_i B_jk - d_j B_ik + d_k B_ij = 0 (i < j < k), so derivative symbols are
    only independent once every differentiation axis is >= the first base
    index.  Violations reduce in one step:
    d_i B_jk = d_j B_ik - d_k B_ij.  Returns [(sign, symbol), ...].
    """
    if sym.kind != "B" or not sym.deriv:
        return [(1, sym)]
    j, k = sym.base
    i = sym.deriv[0]  # deriv is sorted, so this is the smallest axis
    if i >= j:
        return [(1, sym)]
    rest = sym.deriv[1:]
    out = []
    for sign, base, extra in ((1, (i, k), j), (-1, (i, j), k)):
        new = FuncSymbol("B", base, tuple(sorted(rest + (extra,))))
        for s2, reduced in canonical_b_expansion(new):
            out.append((sign * s2, reduced))
    return out


def _gen_key(g):
    if g[0] == "M":
        sym = g[1]
        return (0, sym.kind, sym.base, sym.deriv)
    return (_RANK[g[0]], g[1])


class SymPoly:
    """Canonical multiset of terms: dict (word, h_power) -> Gaussian-rational coefficient."""

    __slots__ = ("terms",)

    def __init__(self, terms=None):
        clean = {}
        for key, (re, im) in (terms or {}).items():
            if re or im:
                clean[key] = (re, im)
        self.terms = clean

    # -- constructors --------------------------------------------------------

    @classmethod
    def zero(cls):
        return cls()

    @classmethod
    def unit(cls, re=_ONE, im=_ZERO, h_power=0, word=()):
        return cls({(tuple(word), int(h_power)): (Fraction(re), Fraction(im))})

    # -- ring operations -----------------------------------------------------

    def __add__(self, other):
        out = dict(self.terms)
        for key, (re, im) in other.terms.items():
            r0, i0 = out.get(key, (_ZERO, _ZERO))
            out[key] = (r0 + re, i0 + im)
        return SymPoly(out)

    def __sub__(self, other):
        return self + other.scaled(-_ONE, _ZERO)

    def __neg__(self):
        return self.scaled(-_ONE, _ZERO)

    def __mul__(self, other):
        out = {}
        for (w1, h1), (r1, i1) in self.terms.items():
            for (w2, h2), (r2, i2) in other.terms.items():
                key = (w1 + w2, h1 + h2)
                re = r1 * r2 - i1 * i2
                im = r1 * i2 + i1 * r2
                r0, i0 = out.get(key, (_ZERO, _ZERO))
                out[key] = (r0 + re, i0 + im)
        return SymPoly(out)

    def scaled(self, re, im=_ZERO, h_shift=0):
        out = {}
        for (w, h), (r, i) in self.terms.items():
            out[(w, h + h_shift)] = (r * re - i * im, r * im + i * re)
        return SymPoly(out)

    def __eq__(self, other):
        return isinstance(other, SymPoly) and self.terms == other.terms

    def __hash__(self):
        return hash(frozenset(self.terms.items()))

    @property
    def is_zero(self):
        return not self.terms

    def sorted_terms(self):
        """Deterministic term order: by word length, word keys, then h power."""
        def key(item):
            (word, h), _ = item
            return (len(word), tuple(_gen_key(g) for g in word), h)

        return sorted(self.terms.items(), key=key)

    def __repr__(self):
        return f"SymPoly({format_poly(self)})"


def L(j):
    return SymPoly.unit(word=(("L", int(j)),))


def X(j):
    return SymPoly.unit(word=(("X", int(j)),))


def M(sym):
    return SymPoly.unit(word=(("M", sym),))


def one():
    return SymPoly.unit()


def H_poly(d):
    """The magnetic Laplacian sum_j L_j^2 as a free-algebra element."""
    out = SymPoly.zero()
    for j in range(1, d + 1):
        out = out + L(j) * L(j)
    return out


def word_poly(sigma):
    """Free product L_{sigma(1)} ... L_{sigma(p)}."""
    out = one()
    for j in sigma:
        out = out * L(j)
    return out


def x_power_poly(alpha):
    """Free product X_1^a1 ... X_d^ad for a multi-index alpha."""
    out = one()
    for j, a in enumerate(alpha, start=1):
        for _ in range(a):
            out = out * X(j)
    return out


def commutator(p, q):
    return p * q - q * p


# -- rewriting ----------------------------------------------------------------


def _rewrite_pair(g1, g2, cap):
    """Rewrite the adjacent pair g1 g2 (g1 misordered before g2).

    Returns a list of (re, im, h_add, replacement_words) pieces where the
    replacement substitutes for the pair in place.
    """
    k1, k2 = g1[0], g2[0]
    if k1 == "L" and k2 == "M":
        sym = g2[1].derived(g1[1])
        if len(sym.deriv) > cap:
            raise DerivativeCapExceeded(
                f"multiplier derivative order {len(sym.deriv)} exceeds cap {cap}"
            )
        pieces = [(_ONE, _ZERO, 0, (g2, g1))]
        for sign, reduced in canonical_b_expansion(sym):
            pieces.append((_ZERO, -Fraction(sign), 1, (("M", reduced),)))
        return pieces
    if k1 == "L" and k2 == "X":
        pieces = [(_ONE, _ZERO, 0, (g2, g1))]
        if g1[1] == g2[1]:
            pieces.append((_ZERO, -_ONE, 1, ()))
        return pieces
    if k1 == "L" and k2 == "L":
        sign, sym = b_symbol(g1[1], g2[1])
        return [
            (_ONE, _ZERO, 0, (g2, g1)),
            (_ZERO, Fraction(sign), 1, (("M", sym),)),
        ]
    # X past M, or same-rank commuting sort: plain swap
    return [(_ONE, _ZERO, 0, (g2, g1))]


def _misordered_positions(word, sort_same_rank_l):
    out = []
    for i in range(len(word) - 1):
        r1, r2 = _RANK[word[i][0]], _RANK[word[i + 1][0]]
        if r1 > r2:
            out.append(i)
        elif r1 == r2:
            if r1 == _RANK["L"] and not sort_same_rank_l:
                continue
            if _gen_key(word[i]) > _gen_key(word[i + 1]):
                out.append(i)
    return out


def _expand_symbols(re, im, h, word):
    """Rewrite every multiplier symbol of a term into the canonical B basis."""
    terms = [(re, im, h, ())]
    for g in word:
        if g[0] == "M" and g[1].kind == "B" and g[1].deriv and g[1].deriv[0] < g[1].base[0]:
            expansion = canonical_b_expansion(g[1])
            terms = [
                (r * sign, i * sign, hh, w + (("M", sym),))
                for (r, i, hh, w) in terms
                for sign, sym in expansion
            ]
        else:
            terms = [(r, i, hh, w + (g,)) for (r, i, hh, w) in terms]
    return terms


def _reduce(p, cap, rng, sort_same_rank_l):
    out = {}
    stack = [
        term
        for (w, h), (re, im) in p.terms.items()
        for term in _expand_symbols(re, im, h, w)
    ]
    while stack:
        re, im, h, word = stack.pop()
        positions = _misordered_positions(word, sort_same_rank_l)
        if not positions:
            r0, i0 = out.get((word, h), (_ZERO, _ZERO))
            out[(word, h)] = (r0 + re, i0 + im)
            continue
        i = positions[0] if rng is None else positions[rng.integers(len(positions))]
        for pre, pim, h_add, repl in _rewrite_pair(word[i], word[i + 1], cap):
            nre = re * pre - im * pim
            nim = re * pim + im * pre
            stack.append((nre, nim, h + h_add, word[:i] + repl + word[i + 2:]))
    return SymPoly(out)


def normal_form(p, cap=DEFAULT_DERIVATIVE_CAP, rng=None):
    """Unique canonical form: every word ordered as sorted Ms, sorted Xs, sorted Ls.

    `rng` randomizes which misordered pair is rewritten first; the result is
    independent of that choice (confluence), which the test suite exercises.
    """
    return _reduce(p, cap, rng, sort_same_rank_l=True)


def m_left_form(p, cap=DEFAULT_DERIVATIVE_CAP):
    """Commute multipliers and positions to the left of the L's, keeping the
    relative order of the L's (no L-L relation is applied)."""
    return _reduce(p, cap, None, sort_same_rank_l=False)


# -- classification and structure checks --------------------------------------


def classify(term_word, h_power=0):
    """Counts (x_count, l_count, m_count, h_power) of a normal-form word."""
    ranks = [_RANK[g[0]] for g in term_word]
    if ranks != sorted(ranks):
        raise NotNormalForm(f"word {term_word} is not in normal form")
    for i in range(len(term_word) - 1):
        if ranks[i] == ranks[i + 1] and _gen_key(term_word[i]) > _gen_key(term_word[i + 1]):
            raise NotNormalForm(f"word {term_word} has an unsorted block")
    kappa = sum(1 for g in term_word if g[0] == "X")
    lam = sum(1 for g in term_word if g[0] == "L")
    mu = sum(1 for g in term_word if g[0] == "M")
    return kappa, lam, mu, h_power


def grade(term_word, h_power):
    """Conserved weight: X and L count 1, M(d^gamma B) counts -|gamma|,
    M(d^gamma A) counts 1-|gamma|, and each power of h counts 2."""
    total = 2 * h_power
    for g in term_word:
        if g[0] in ("X", "L"):
            total += 1
        else:
            sym = g[1]
            total += (1 if sym.kind == "A" else 0) - len(sym.deriv)
    return total


def h_commutator_expansion(d, sigma):
    """[H, L_sigma] expanded by the Leibniz rule down to primitive commutators,
    with [L_k, L_s] replaced by i h M(B_ks):

        sum_p L_sigma(<p) ( L_k * ihM(B_k,sigma(p)) + ihM(B_k,sigma(p)) * L_k ) L_sigma(>p)
    """
    out = {}
    sigma = tuple(sigma)
    for p, s in enumerate(sigma):
        prefix = tuple(("L", j) for j in sigma[:p])
        suffix = tuple(("L", j) for j in sigma[p + 1:])
        for k in range(1, d + 1):
            sign, sym = b_symbol(k, s)
            if sign == 0:
                continue
            m = ("M", sym)
            lk = ("L", k)
            for word in (prefix + (lk, m) + suffix, prefix + (m, lk) + suffix):
                r0, i0 = out.get((word, 1), (_ZERO, _ZERO))
                out[(word, 1)] = (r0, i0 + Fraction(sign))
    return SymPoly(out)


@dataclass
class StructureRow:
    sigma: tuple
    term_count: int
    max_l_count: int
    single_field_factor: bool
    h_power_ok: bool


@dataclass
class StructureReport:
    d: int
    n: int
    rows: list
    max_l_count: int
    l_bound_quoted: int        # the 2n-2 figure the expansion is often quoted with
    l_bound_quoted_holds: bool
    max_word_length: int       # the enumerated bound: max |sigma| = 2n
    passed: bool


def check_H_Lsigma_structure(d, n):
    """For every word sigma of length <= 2n, expand [H, L_sigma] with the
    multipliers commuted to the left and assert each term carries exactly one
    B-derived multiplier and at least one power of h; reports the maximal
    L-count against both |sigma| and the quoted 2n-2 figure."""
    if d > 3 or n > 3:
        raise InvalidParameter("structure check capped at d <= 3, n <= 3")
    from .operators import enumerate_words

    rows = []
    max_l = 0
    for sigma in enumerate_words(d, 2 * n):
        expanded = m_left_form(h_commutator_expansion(d, sigma))
        row_max_l = 0
        for (word, h_power), _ in expanded.terms.items():
            mu_syms = [g[1] for g in word if g[0] == "M"]
            l_count = sum(1 for g in word if g[0] == "L")
            if len(mu_syms) != 1 or mu_syms[0].kind != "B":
                raise StructureViolation(
                    f"term without exactly one field factor in [H, L_{sigma}]",
                    sigma=sigma,
                    term=format_term(word, h_power, _ONE, _ZERO),
                )
            if h_power < 1:
                raise StructureViolation(
                    f"term without h factor in [H, L_{sigma}]", sigma=sigma,
                    term=format_term(word, h_power, _ONE, _ZERO),
                )
            row_max_l = max(row_max_l, l_count)
        rows.append(
            StructureRow(
                sigma=sigma,
                term_count=len(expanded.terms),
                max_l_count=row_max_l,
                single_field_factor=True,
                h_power_ok=True,
            )
        )
        max_l = max(max_l, row_max_l)
    quoted = max(2 * n - 2, 0)
    return StructureReport(
        d=d,
        n=n,
        rows=rows,
        max_l_count=max_l,
        l_bound_quoted=quoted,
        l_bound_quoted_holds=max_l <= quoted,
        max_word_length=2 * n,
        passed=True,
    )


@dataclass
class XalphaReport:
    d: int
    alpha: tuple
    terms: int
    kappa_max: int
    lambda_max: int
    decomposition: str
    passed: bool


def check_xalpha_commutator(d, alpha):
    """Expand [X^alpha, H] and assert every term factors as h * (composition of
    at most |alpha|-1 positions and at most one magnetic derivative)."""
    alpha = tuple(int(a) for a in alpha)
    if len(alpha) != d:
        raise InvalidParameter("alpha must have d entries")
    if sum(alpha) > 4:
        raise InvalidParameter("|alpha| capped at 4")
    nf = normal_form(commutator(x_power_poly(alpha), H_poly(d)))
    kappa_max = 0
    lambda_max = 0
    for (word, h_power), _ in nf.terms.items():
        kappa, lam, mu, _ = classify(word, h_power)
        if mu != 0:
            raise StructureViolation(
                f"[x^{alpha}, H] produced a multiplier term", term=format_poly(nf)
            )
        if h_power < 1:
            raise StructureViolation(
                f"[x^{alpha}, H] produced an h-free term", term=format_poly(nf)
            )
        if kappa > max(sum(alpha) - 1, 0) or lam > 1:
            raise StructureViolation(
                f"[x^{alpha}, H] term outside the position/derivative class",
                term=format_term(word, h_power, _ONE, _ZERO),
            )
        kappa_max = max(kappa_max, kappa)
        lambda_max = max(lambda_max, lam)
    return XalphaReport(
        d=d,
        alpha=alpha,
        terms=len(nf.terms),
        kappa_max=kappa_max,
        lambda_max=lambda_max,
        decomposition=format_poly(nf),
        passed=True,
    )


# -- grid evaluation -----------------------------------------------------------


def evaluate_sympoly(ctx, p, psi):
    """Evaluate a symbolic operator on a wavefunction: L and X via the grid
    operators, M via pointwise multiplication by the model's field samples,
    coefficients as complex scalars with the context's h."""
    from .grid import Wavefunction
    from .operators import apply_L

    total = np.zeros(ctx.spec.shape, dtype=np.complex128)
    for (word, h_power), (re, im) in p.terms.items():
        state = psi
        for g in reversed(word):
            if g[0] == "L":
                state = apply_L(ctx, g[1], state)
            elif g[0] == "X":
                state = Wavefunction(ctx.spec, ctx.coord(g[1]) * state.values)
            else:
                state = Wavefunction(ctx.spec, ctx.multiplier_grid(g[1]) * state.values)
        coeff = (float(re) + 1j * float(im)) * ctx.h**h_power
        total = total + coeff * state.values
    return Wavefunction(ctx.spec, total)


def numeric_symbolic_crosscheck(ctx, p, psi):
    """Relative L2 discrepancy between evaluating p as given and evaluating its
    normal form; both paths share the same grid primitives."""
    from .grid import l2_norm

    direct = evaluate_sympoly(ctx, p, psi)
    reduced = evaluate_sympoly(ctx, normal_form(p), psi)
    na = l2_norm(direct)
    nb = l2_norm(reduced)
    scale = max(na, nb)
    if scale == 0.0:
        return 0.0
    from .grid import Wavefunction

    diff = Wavefunction(ctx.spec, direct.values - reduced.values)
    return l2_norm(diff) / scale


# -- formatting and random inputs ----------------------------------------------


def _format_coeff(re, im, h_power):
    if im == 0:
        body = f"({re})"
    elif re == 0:
        body = f"({im})·i" if im != 1 else "(1)·i"
    else:
        body = f"({re}{'+' if im > 0 else '-'}{abs(im)}·i)"
    if h_power == 1:
        body += "·h"
    elif h_power > 1:
        body += f"·h^{h_power}"
    return body


def _format_gen(g):
    if g[0] == "L":
        return f"L_{g[1]}"
    if g[0] == "X":
        return f"X_{g[1]}"
    sym = g[1]
    base = ",".join(str(b) for b in sym.base)
    name = f"{sym.kind}_{{{base}}}"
    if not sym.deriv:
        return f"M[{name}]"
    axes = ",".join(str(a) for a in sym.deriv)
    return f"M[d{name}/dx^({axes})]"


def format_term(word, h_power, re, im):
    parts = [_format_coeff(re, im, h_power)]
    parts.extend(_format_gen(g) for g in word)
    return "·".join(parts) if len(parts) > 1 or word else parts[0]


def format_poly(p):
    """Stable text form: terms in canonical order, exact coefficients."""
    if p.is_zero:
        return "0"
    chunks = []
    for (word, h), (re, im) in p.sorted_terms():
        chunks.append(format_term(word, h, re, im))
    return " + ".join(chunks)


def random_sympoly(rng, d=2, max_terms=3, max_len=3, max_deriv=1):
    """Small random element for property suites (seeded numpy Generator)."""
    terms = {}
    for _ in range(rng.integers(1, max_terms + 1)):
        word = []
        for _ in range(rng.integers(0, max_len + 1)):
            kind = rng.integers(0, 3)
            j = int(rng.integers(1, d + 1))
            if kind == 0:
                word.append(("L", j))
            elif kind == 1:
                word.append(("X", j))
            else:
                if d >= 2 and rng.integers(0, 2):
                    k = int(rng.integers(1, d + 1))
                    sign, sym = b_symbol(j, k if k != j else (j % d) + 1)
                else:
                    sym = a_symbol(j)
                for _ in range(rng.integers(0, max_deriv + 1)):
                    sym = sym.derived(int(rng.integers(1, d + 1)))
                word.append(("M", sym))
        re = Fraction(int(rng.integers(-3, 4)), int(rng.integers(1, 4)))
        im = Fraction(int(rng.integers(-3, 4)), int(rng.integers(1, 4)))
        h = int(rng.integers(0, 2))
        key = (tuple(word), h)
        r0, i0 = terms.get(key, (_ZERO, _ZERO))
        terms[key] = (r0 + re, i0 + im)
    return SymPoly(terms)
