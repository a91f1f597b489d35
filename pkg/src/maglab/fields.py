"""Magnetic field models: closed 2-forms B, gauge potentials A with dA = B.

Conventions: B is identified with the antisymmetric matrix
``B[j,k] = dA_k/dx_j - dA_j/dx_k`` (1-based axes, upper triangle stored),
and ``trace_plus`` is the sum of the moduli of the eigenvalues of B(x) with
positive imaginary part, computed as half the sum of singular values.

Scalar components are finite sums of per-axis product terms
``coeff * prod_j x_j^p * sin(freq*x_j + phase)``, which is closed under
differentiation, so every model carries exact closed-form derivatives up to
the cap ``derivative_cap`` (default 6).  Gauge potentials are produced by the
radial (Poincare) gauge ``A_j(x) = sum_k x_k * int_0^1 t B_{kj}(t x) dt``:
in closed form for polynomial B, by Gauss-Legendre quadrature otherwise.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import (
    DerivativeOrderExceeded,
    InvalidParameter,
    NotAntisymmetric,
    NotClosed,
)
from .grid import iter_multi_indices

DEFAULT_DERIVATIVE_CAP = 6
_GAUGE_QUAD_NODES = 32


@dataclass(frozen=True)
class AxisFactor:
    """Single-axis factor x^power * sin(freq*x + phase); pure power when freq == 0."""

    power: int = 0
    freq: float = 0.0
    phase: float = 0.0

    def evaluate(self, x):
        out = x**self.power if self.power else np.ones_like(x)
        if self.freq != 0.0:
            out = out * np.sin(self.freq * x + self.phase)
        return out

    def derivative(self):
        """d/dx as a list of (scale, AxisFactor) pairs."""
        parts = []
        if self.power > 0:
            parts.append((float(self.power), AxisFactor(self.power - 1, self.freq, self.phase)))
        if self.freq != 0.0:
            # sin(c x + phi)' = c sin(c x + phi + pi/2)
            parts.append((self.freq, AxisFactor(self.power, self.freq, self.phase + math.pi / 2.0)))
        return parts


class SeparableField:
    """Finite sum of separable product terms over d axes; exact derivatives."""

    def __init__(self, d, terms):
        self.d = d
        # terms: list of (coeff, tuple[AxisFactor]*d)
        self.terms = [(float(c), tuple(f)) for c, f in terms if c != 0.0]

    @classmethod
    def zero(cls, d):
        return cls(d, [])

    @classmethod
    def constant(cls, d, c):
        return cls(d, [(c, tuple(AxisFactor() for _ in range(d)))])

    @classmethod
    def monomial(cls, d, exponents, coeff=1.0):
        return cls(d, [(coeff, tuple(AxisFactor(power=p) for p in exponents))])

    @classmethod
    def sin_product(cls, d, coeff, freqs):
        """coeff * prod over axes with freq != 0 of sin(freq * x_j)."""
        return cls(d, [(coeff, tuple(AxisFactor(freq=f) for f in freqs))])

    def __add__(self, other):
        return SeparableField(self.d, self.terms + other.terms)

    def scaled(self, s):
        return SeparableField(self.d, [(c * s, f) for c, f in self.terms])

    @property
    def is_zero(self):
        return not self.terms

    @property
    def is_polynomial(self):
        return all(f.freq == 0.0 for _, fs in self.terms for f in fs)

    def evaluate(self, coords):
        """Evaluate on a tuple of broadcastable coordinate arrays (one per axis)."""
        out = 0.0
        for c, factors in self.terms:
            term = c
            for x, f in zip(coords, factors):
                if f.power or f.freq != 0.0:
                    term = term * f.evaluate(np.asarray(x, dtype=float))
            out = out + term
        return np.asarray(out, dtype=float)

    def derivative(self, axis):
        """Exact partial derivative along a 1-based axis."""
        j = axis - 1
        terms = []
        for c, factors in self.terms:
            for scale, df in factors[j].derivative():
                new = list(factors)
                new[j] = df
                terms.append((c * scale, tuple(new)))
        return SeparableField(self.d, terms)

    def derive_multi(self, alpha):
        field = self
        for j, m in enumerate(alpha):
            for _ in range(m):
                field = field.derivative(j + 1)
        return field

    def radial_profile_integral(self, extra_power):
        """Closed form of int_0^1 t^extra_power * F(t x) dt for polynomial F (else None)."""
        if not self.is_polynomial:
            return None
        terms = []
        for c, factors in self.terms:
            total_deg = sum(f.power for f in factors)
            terms.append((c / (extra_power + total_deg + 1.0), factors))
        return SeparableField(self.d, terms)


def _gauss_legendre_01(n):
    nodes, weights = np.polynomial.legendre.leggauss(n)
    return 0.5 * (nodes + 1.0), 0.5 * weights


class FieldModel:
    """Concrete magnetic model: exact B components plus a gauge potential A with dA = B.

    A is either a list of exact SeparableFields or the radial-gauge quadrature
    evaluator built from B.  All evaluations are pure; derivative fields are
    cached per (component, multi-index).
    """

    def __init__(self, d, b_fields, a_fields=None, b0=0.0, name="custom", params=None,
                 derivative_cap=DEFAULT_DERIVATIVE_CAP, quad_nodes=_GAUGE_QUAD_NODES,
                 _skip_checks=False):
        if d < 1:
            raise InvalidParameter("dimension must be >= 1")
        self.d = d
        self.b0 = float(b0)
        self.name = name
        self.params = dict(params or {})
        self.derivative_cap = int(derivative_cap)
        self.quad_nodes = int(quad_nodes)
        # upper-triangle storage, keys (j, k) with 1 <= j < k <= d
        self._B = {}
        for (j, k), field in (b_fields or {}).items():
            if not 1 <= j < k <= d:
                raise InvalidParameter(f"B component index ({j},{k}) must satisfy 1<=j<k<=d")
            self._B[(j, k)] = field
        self._A = list(a_fields) if a_fields is not None else None
        if self._A is not None and len(self._A) != d:
            raise InvalidParameter("gauge potential must have d components")
        self._quad = _gauss_legendre_01(self.quad_nodes)
        self._dA_cache = {}
        self._dB_cache = {}
        if not _skip_checks:
            if d >= 3:
                self._check_closed()
            self._check_gauge_consistency()

    @property
    def gauge_fields(self):
        """Closed-form gauge components, or None when A is the quadrature radial gauge."""
        return self._A

    # -- internal field lookup ------------------------------------------------

    def _b_field(self, j, k):
        """Signed B_{jk} as a SeparableField (antisymmetry by construction)."""
        if j == k:
            return SeparableField.zero(self.d)
        if j < k:
            return self._B.get((j, k), SeparableField.zero(self.d))
        return self._B.get((k, j), SeparableField.zero(self.d)).scaled(-1.0)

    def _db_field(self, j, k, alpha):
        key = (j, k, tuple(alpha))
        if key not in self._dB_cache:
            if sum(alpha) > self.derivative_cap:
                raise DerivativeOrderExceeded(
                    f"|alpha|={sum(alpha)} exceeds derivative cap {self.derivative_cap}"
                )
            self._dB_cache[key] = self._b_field(j, k).derive_multi(alpha)
        return self._dB_cache[key]

    def _check_closed(self, rng_seed=20240811, samples=50, tol=1e-10):
        rng = np.random.default_rng(rng_seed)
        pts = rng.uniform(-1.0, 1.0, size=(samples, self.d))
        for i, j, k in _cyclic_triples(self.d):
            total = np.zeros(samples)
            for (a, b, c) in ((i, j, k), (j, k, i), (k, i, j)):
                field = self._b_field(b, c).derivative(a)
                total = total + np.array([field.evaluate(tuple(p)) for p in pts])
            if np.max(np.abs(total)) > tol:
                raise NotClosed(f"cyclic derivative sum of B exceeds {tol:g}")

    def _check_gauge_consistency(self, rng_seed=20240812, samples=40, tol=1e-9):
        rng = np.random.default_rng(rng_seed)
        pts = rng.uniform(-1.0, 1.0, size=(samples, self.d))
        for j in range(1, self.d + 1):
            for k in range(j + 1, self.d + 1):
                ej = tuple(1 if a == j - 1 else 0 for a in range(self.d))
                ek = tuple(1 if a == k - 1 else 0 for a in range(self.d))
                for p in pts:
                    lhs = self.eval_dA(p, ej, k) - self.eval_dA(p, ek, j)
                    rhs = float(self._b_field(j, k).evaluate(tuple(p)))
                    if abs(lhs - rhs) > tol * max(1.0, abs(rhs)):
                        raise NotClosed(
                            f"gauge potential inconsistent with B at {p.tolist()}"
                        )

    # -- evaluation on coordinate arrays --------------------------------------

    def dA_on_coords(self, coords, alpha, j):
        """d^alpha A_j evaluated on broadcastable coordinate arrays (1-based j)."""
        alpha = tuple(int(a) for a in alpha)
        if len(alpha) != self.d:
            raise InvalidParameter("alpha must have d entries")
        if sum(alpha) > self.derivative_cap:
            raise DerivativeOrderExceeded(
                f"|alpha|={sum(alpha)} exceeds derivative cap {self.derivative_cap}"
            )
        if not 1 <= j <= self.d:
            raise InvalidParameter(f"component must be in 1..{self.d}")
        if self._A is not None:
            key = (j, alpha)
            if key not in self._dA_cache:
                self._dA_cache[key] = self._A[j - 1].derive_multi(alpha)
            return self._dA_cache[key].evaluate(coords)
        return self._radial_gauge_dA(coords, alpha, j)

    def _radial_gauge_dA(self, coords, alpha, j):
        """Leibniz rule under the radial-gauge integral:

        d^alpha A_j = sum_k [ x_k * Q(d^alpha B_{kj}, 1+|alpha|)
                              + alpha_k * Q(d^(alpha-e_k) B_{kj}, |alpha|) ]
        with Q(F, p)(x) = int_0^1 t^p F(t x) dt by Gauss-Legendre quadrature.
        """
        nodes, weights = self._quad
        m = sum(alpha)
        shape = np.broadcast_shapes(*(np.shape(c) for c in coords))
        out = np.zeros(shape)
        for k in range(1, self.d + 1):
            bkj = self._db_field(k, j, alpha)
            if not bkj.is_zero:
                q = self._radial_quad(bkj, m + 1, coords, nodes, weights)
                out = out + np.asarray(coords[k - 1], dtype=float) * q
            if alpha[k - 1] > 0:
                reduced = list(alpha)
                reduced[k - 1] -= 1
                bkj_red = self._db_field(k, j, tuple(reduced))
                if not bkj_red.is_zero:
                    out = out + alpha[k - 1] * self._radial_quad(
                        bkj_red, m, coords, nodes, weights
                    )
        return out

    @staticmethod
    def _radial_quad(field, power, coords, nodes, weights):
        acc = 0.0
        for t, w in zip(nodes, weights):
            scaled = tuple(np.asarray(c, dtype=float) * t for c in coords)
            acc = acc + (w * t**power) * field.evaluate(scaled)
        return acc

    def dB_on_coords(self, coords, alpha, j, k):
        """d^alpha B_{jk} on broadcastable coordinate arrays (signed, 1-based)."""
        alpha = tuple(int(a) for a in alpha)
        field = self._db_field(j, k, alpha)
        out = field.evaluate(coords)
        if np.isscalar(out) or out.shape == ():
            shape = np.broadcast_shapes(*(np.shape(c) for c in coords))
            return np.broadcast_to(out, shape).astype(float)
        return out

    # -- point API -------------------------------------------------------------

    def eval_A(self, x):
        """Gauge potential A(x) as a length-d vector."""
        x = np.asarray(x, dtype=float).reshape(self.d)
        zero = (0,) * self.d
        return np.array([float(self.dA_on_coords(tuple(x), zero, j)) for j in range(1, self.d + 1)])

    def eval_dA(self, x, alpha, j):
        """d^alpha A_j at point x; alpha = (0,..,0) reduces to the component of eval_A."""
        x = np.asarray(x, dtype=float).reshape(self.d)
        return float(self.dA_on_coords(tuple(x), tuple(alpha), j))

    def eval_B(self, x):
        """Antisymmetric d x d matrix B(x)."""
        x = np.asarray(x, dtype=float).reshape(self.d)
        mat = np.zeros((self.d, self.d))
        for (j, k), field in self._B.items():
            v = float(field.evaluate(tuple(x)))
            mat[j - 1, k - 1] = v
            mat[k - 1, j - 1] = -v
        return mat

    def eval_dB(self, x, alpha, j, k):
        """d^alpha B_{jk} at point x (signed by index order)."""
        x = np.asarray(x, dtype=float).reshape(self.d)
        return float(self.dB_on_coords(tuple(x), tuple(alpha), j, k))

    def b_matrix_on_grid(self, coords):
        """Stack of B(x) over the given coordinate arrays, shape grid + (d, d)."""
        shape = np.broadcast_shapes(*(np.shape(c) for c in coords))
        mats = np.zeros(shape + (self.d, self.d))
        for (j, k), field in self._B.items():
            v = np.broadcast_to(field.evaluate(coords), shape)
            mats[..., j - 1, k - 1] = v
            mats[..., k - 1, j - 1] = -v
        return mats


def _cyclic_triples(d):
    for i in range(1, d + 1):
        for j in range(i + 1, d + 1):
            for k in range(j + 1, d + 1):
                yield i, j, k


def trace_plus(mat, tol=1e-12):
    """Sum of the moduli of the eigenvalues of an antisymmetric matrix with
    positive imaginary part, computed as half the sum of singular values."""
    mat = np.asarray(mat, dtype=float)
    if mat.ndim != 2 or mat.shape[0] != mat.shape[1]:
        raise InvalidParameter("trace_plus expects a square matrix")
    scale = max(1.0, float(np.max(np.abs(mat))))
    if float(np.max(np.abs(mat + mat.T))) > tol * scale:
        raise NotAntisymmetric("matrix is not antisymmetric within 1e-12")
    return 0.5 * float(np.linalg.svd(mat, compute_uv=False).sum())


def trace_plus_batch(mats):
    """trace_plus over a stack of antisymmetric matrices (no per-item checks)."""
    return 0.5 * np.linalg.svd(mats, compute_uv=False).sum(axis=-1)


def gauge_from_field(d, b_fields, quad_nodes=_GAUGE_QUAD_NODES, b0=0.0, name="gauged"):
    """Build the radial-gauge model of a closed antisymmetric matrix of fields.

    The gauge is A_j(x) = sum_k x_k * int_0^1 t B_{kj}(t x) dt, in closed form
    when every component is polynomial and by Gauss-Legendre quadrature
    otherwise.  dA = B is verified at random sample points; the returned
    model's `gauge_fields` is the list of closed-form components (or None for
    the quadrature gauge).
    """
    probe = FieldModel(d, b_fields, a_fields=None, quad_nodes=quad_nodes, _skip_checks=True)
    if d >= 3:
        probe._check_closed()
    a_fields = None
    if all(f.is_polynomial for f in b_fields.values()):
        a_fields = []
        for j in range(1, d + 1):
            acc = SeparableField.zero(d)
            for k in range(1, d + 1):
                bkj = probe._b_field(k, j)
                if bkj.is_zero:
                    continue
                profile = bkj.radial_profile_integral(1)
                ek = tuple(1 if a == k - 1 else 0 for a in range(d))
                xk = SeparableField.monomial(d, ek)
                acc = acc + _field_product(xk, profile)
            a_fields.append(acc)
    return FieldModel(d, b_fields, a_fields=a_fields, quad_nodes=quad_nodes,
                      b0=b0, name=name)


def _field_product(f, g):
    """Product of two SeparableFields (factors multiply axis-wise; powers add).

    Only valid when at most one factor per axis carries a trig part.
    """
    terms = []
    for c1, fs1 in f.terms:
        for c2, fs2 in g.terms:
            factors = []
            for a, b in zip(fs1, fs2):
                if a.freq != 0.0 and b.freq != 0.0:
                    raise InvalidParameter("cannot multiply two trig factors on one axis")
                trig = a if a.freq != 0.0 else b
                factors.append(AxisFactor(a.power + b.power, trig.freq, trig.phase))
            terms.append((c1 * c2, tuple(factors)))
    return SeparableField(f.d, terms)


# -- builtin models -----------------------------------------------------------


def constant2d(b):
    """Constant field B_12 = b in the symmetric gauge A = (-b x2/2, b x1/2)."""
    if b <= 0:
        raise InvalidParameter("constant2d requires b > 0")
    a1 = SeparableField.monomial(2, (0, 1), -b / 2.0)
    a2 = SeparableField.monomial(2, (1, 0), b / 2.0)
    b12 = SeparableField.constant(2, b)
    return FieldModel(2, {(1, 2): b12}, [a1, a2], b0=b, name="constant2d",
                      params={"b": b})


def perturbed2d(b, eps, omega, half_width, quad_nodes=_GAUGE_QUAD_NODES):
    """B_12(x) = b*(1 + eps*sin(omega*pi*x1/L)*sin(omega*pi*x2/L)), radial gauge for A.

    Frequencies are box-commensurate so B is smooth and periodic on [-L, L)^2.
    """
    if b <= 0:
        raise InvalidParameter("perturbed2d requires b > 0")
    if not abs(eps) < 1.0:
        raise InvalidParameter("perturbed2d requires |eps| < 1")
    if half_width <= 0:
        raise InvalidParameter("half_width must be positive")
    c = omega * math.pi / half_width
    b12 = SeparableField.constant(2, b) + SeparableField.sin_product(2, b * eps, (c, c))
    model = FieldModel(2, {(1, 2): b12}, a_fields=None, b0=b * (1.0 - abs(eps)),
                       name="perturbed2d",
                       params={"b": b, "eps": eps, "omega": omega, "half_width": half_width},
                       quad_nodes=quad_nodes)
    return model


def constant4d(b1, b2):
    """Block-diagonal constant field: B_12 = b1, B_34 = b2, symmetric gauge blocks."""
    if b1 <= 0 or b2 <= 0:
        raise InvalidParameter("constant4d requires b1, b2 > 0")
    a = [
        SeparableField.monomial(4, (0, 1, 0, 0), -b1 / 2.0),
        SeparableField.monomial(4, (1, 0, 0, 0), b1 / 2.0),
        SeparableField.monomial(4, (0, 0, 0, 1), -b2 / 2.0),
        SeparableField.monomial(4, (0, 0, 1, 0), b2 / 2.0),
    ]
    b_fields = {
        (1, 2): SeparableField.constant(4, b1),
        (3, 4): SeparableField.constant(4, b2),
    }
    return FieldModel(4, b_fields, a, b0=b1 + b2, name="constant4d",
                      params={"b1": b1, "b2": b2})


def free(d=2):
    """Zero field, zero potential; control model for field-free runs (b0 = 0)."""
    a = [SeparableField.zero(d) for _ in range(d)]
    return FieldModel(d, {}, a, b0=0.0, name="free", params={"d": d})


def from_potential(d, a_fields, b0=0.0, name="custom"):
    """Model from an explicit polynomial/trig gauge potential; B derived as dA."""
    b_fields = {}
    for j in range(1, d + 1):
        for k in range(j + 1, d + 1):
            bjk = a_fields[k - 1].derivative(j) + a_fields[j - 1].derivative(k).scaled(-1.0)
            if not bjk.is_zero:
                b_fields[(j, k)] = bjk
    return FieldModel(d, b_fields, list(a_fields), b0=b0, name=name)


@dataclass
class AssumptionReport:
    """Grid survey of the field-intensity lower bound and derivative/field ratios."""

    b0_observed: float
    ratio_bounds: dict
    passed: bool


def check_assumption(model, spec, max_order):
    """Survey Tr+ B >= b0 and ||d^alpha B||_F / ||B||_F over the grid nodes."""
    if max_order > model.derivative_cap:
        raise DerivativeOrderExceeded(
            f"max_order {max_order} exceeds derivative cap {model.derivative_cap}"
        )
    coords = spec.coords()
    mats = model.b_matrix_on_grid(coords)
    tr = trace_plus_batch(mats)
    b0_observed = float(tr.min())
    base = np.linalg.norm(mats, axis=(-2, -1))
    safe_base = np.where(base > 0.0, base, np.inf)
    ratio_bounds = {}
    for alpha in iter_multi_indices(model.d, max_order):
        if sum(alpha) == 0:
            continue
        dmats = np.zeros_like(mats)
        nonzero = False
        for (j, k) in model._B:
            v = model.dB_on_coords(coords, alpha, j, k)
            v = np.broadcast_to(v, mats.shape[:-2])
            if np.any(v):
                nonzero = True
            dmats[..., j - 1, k - 1] = v
            dmats[..., k - 1, j - 1] = -v
        if nonzero:
            ratio = np.linalg.norm(dmats, axis=(-2, -1)) / safe_base
            ratio_bounds[alpha] = float(ratio.max())
        else:
            ratio_bounds[alpha] = 0.0
    return AssumptionReport(b0_observed=b0_observed, ratio_bounds=ratio_bounds,
                            passed=b0_observed > 0.0)
