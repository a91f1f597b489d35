"""Grid realizations of the magnetic derivatives L_j = -i h d_j - A_j, their
compositions, the magnetic Laplacian H = sum_j L_j^2, the inverse solve and a
smallest-eigenvalue estimator.

All operators act on `Wavefunction` values; the discrete L_j is exactly
skew-symmetric-plus-multiplication, so H is Hermitian positive semidefinite
on the grid and the energy identity <H psi, psi> = sum_j ||L_j psi||^2 holds
to rounding for any grid state.
"""

from __future__ import annotations

import math

import numpy as np

from .errors import (
    GridMismatch,
    InvalidParameter,
    NoConvergence,
    OrderTooHigh,
    ResolutionTooCoarse,
    UnresolvedState,
    ZeroDenominator,
    ZeroState,
)
from .grid import (
    RESOLVED_THRESHOLD,
    Wavefunction,
    boundary_mass,
    ensure_resolved,
    inner,
    l2_norm,
    spectral_derivative,
)

MAX_WORD_HALF_LENGTH = 4  # words up to length 2 * this


def enumerate_words(d, k):
    """All index words over {1..d} of length 0..k, shortest first, lexicographic."""
    if k < 0:
        raise InvalidParameter("word length bound must be >= 0")
    words = [()]
    layer = [()]
    for _ in range(k):
        layer = [w + (j,) for w in layer for j in range(1, d + 1)]
        words.extend(layer)
    return words


class MagOperatorContext:
    """Immutable bundle (model, grid, h) with cached potential and coordinate grids."""

    def __init__(self, model, spec, h):
        if h <= 0:
            raise InvalidParameter("h must be positive")
        if model.d != spec.d:
            raise GridMismatch(f"model dimension {model.d} != grid dimension {spec.d}")
        self.model = model
        self.spec = spec
        self.h = float(h)
        zero = (0,) * spec.d
        coords = spec.coords()
        self.a_grids = [
            np.asarray(model.dA_on_coords(coords, zero, j)) for j in range(1, spec.d + 1)
        ]
        self._func_cache = {}

    def coord(self, j):
        return self.spec.coord(j)

    def a_squared_max(self):
        """Grid max of |A|^2, used for conservative spectral-radius bounds."""
        total = 0.0
        for g in self.a_grids:
            total = total + np.asarray(g, dtype=float) ** 2
        return float(np.max(total))

    def spectral_radius_bound(self):
        """Upper bound 2*(d*(h*pi/spacing)^2 + max|A|^2) for the grid operator."""
        kin = self.spec.d * (self.h * math.pi / self.spec.spacing) ** 2
        return 2.0 * (kin + self.a_squared_max())

    def multiplier_grid(self, symbol):
        """Grid samples of a multiplier function (see algebra.FuncSymbol), cached."""
        key = (symbol.kind, symbol.base, symbol.deriv)
        if key not in self._func_cache:
            alpha = [0] * self.spec.d
            for ax in symbol.deriv:
                alpha[ax - 1] += 1
            coords = self.spec.coords()
            if symbol.kind == "A":
                arr = self.model.dA_on_coords(coords, tuple(alpha), symbol.base[0])
            elif symbol.kind == "B":
                j, k = symbol.base
                arr = self.model.dB_on_coords(coords, tuple(alpha), j, k)
            else:
                raise InvalidParameter(f"unknown multiplier kind {symbol.kind!r}")
            self._func_cache[key] = np.asarray(arr)
        return self._func_cache[key]


def apply_L(ctx, j, psi):
    """Magnetic derivative L_j psi = -i h d_j psi - A_j * psi (1-based axis)."""
    if psi.spec != ctx.spec:
        raise GridMismatch("wavefunction grid does not match context")
    if not 1 <= j <= ctx.spec.d:
        raise InvalidParameter(f"axis must be in 1..{ctx.spec.d}, got {j}")
    dpsi = spectral_derivative(psi, j, 1)
    return Wavefunction(ctx.spec, -1j * ctx.h * dpsi.values - ctx.a_grids[j - 1] * psi.values)


def apply_word(ctx, sigma, psi, check_boundary=False):
    """Composition L_sigma = L_{sigma(1)} ... L_{sigma(p)}, right-to-left; empty word is the identity."""
    if len(sigma) > 2 * MAX_WORD_HALF_LENGTH:
        raise OrderTooHigh(f"word length {len(sigma)} exceeds cap {2 * MAX_WORD_HALF_LENGTH}")
    out = psi
    for j in reversed(sigma):
        out = apply_L(ctx, j, out)
    if check_boundary and l2_norm(out) > 0.0:
        bm = boundary_mass(out, 0.1)
        if bm > RESOLVED_THRESHOLD:
            raise UnresolvedState(
                f"L_sigma result has boundary mass {bm:.3e} for sigma={tuple(sigma)}"
            )
    return out


def apply_H(ctx, psi):
    """Magnetic Laplacian H psi = sum_j L_j(L_j psi)."""
    out = None
    for j in range(1, ctx.spec.d + 1):
        term = apply_word(ctx, (j, j), psi)
        out = term.values if out is None else out + term.values
    return Wavefunction(ctx.spec, out)


def apply_H_power(ctx, n, psi):
    """n-fold composition of the magnetic Laplacian; n = 0 is the identity."""
    if n < 0:
        raise InvalidParameter("power must be >= 0")
    out = psi
    for _ in range(n):
        out = apply_H(ctx, out)
    return out


def energy_identity_residual(ctx, psi):
    """Relative defect of <H psi, psi> = sum_j ||L_j psi||^2 on the grid."""
    total = 0.0
    for j in range(1, ctx.spec.d + 1):
        total += l2_norm(apply_L(ctx, j, psi)) ** 2
    if total == 0.0:
        raise ZeroState("energy identity undefined: all magnetic derivatives vanish")
    quad = inner(apply_H(ctx, psi), psi)
    return abs(quad - total) / total


def sobolev_h_norm(ctx, psi):
    """Graph norm sqrt(||psi||^2 + ||H psi||^2)."""
    return math.sqrt(l2_norm(psi) ** 2 + l2_norm(apply_H(ctx, psi)) ** 2)


def _fourier_preconditioner(ctx):
    """Diagonal-in-Fourier inverse of (-h^2 Lap + h*b0); None when b0 = 0."""
    if ctx.model.b0 <= 0.0:
        return None
    spec = ctx.spec
    freqs = spec.angular_freqs()
    k2 = np.zeros(spec.shape)
    for j in range(spec.d):
        shape = [1] * spec.d
        shape[j] = spec.points_per_axis
        k2 = k2 + (freqs**2).reshape(shape)
    diag = 1.0 / (ctx.h**2 * k2 + ctx.h * ctx.model.b0)

    from .grid import _fftn, _ifftn

    def apply(r):
        return _ifftn(_fftn(r) * diag)

    return apply


def _cg(matvec, b, x0, rtol, max_iter, precond=None):
    """Conjugate gradients on complex arrays for a Hermitian positive operator.

    Returns (x, relative_residual, iterations); convergence means
    ||b - A x|| <= rtol * ||b||.
    """
    bnorm = math.sqrt(float(np.vdot(b, b).real))
    if bnorm == 0.0:
        return np.zeros_like(b), 0.0, 0
    x = x0.copy()
    r = b - matvec(x)
    z = precond(r) if precond is not None else r
    p = z.copy()
    rz = np.vdot(r, z).real
    for it in range(1, max_iter + 1):
        res = math.sqrt(float(np.vdot(r, r).real))
        if res <= rtol * bnorm:
            return x, res / bnorm, it - 1
        ap = matvec(p)
        denom = np.vdot(p, ap).real
        if denom <= 0.0:
            break  # lost positivity to rounding; report current residual
        alpha = rz / denom
        x = x + alpha * p
        r = r - alpha * ap
        z = precond(r) if precond is not None else r
        rz_new = np.vdot(r, z).real
        p = z + (rz_new / rz) * p
        rz = rz_new
    res = math.sqrt(float(np.vdot(b - matvec(x), b - matvec(x)).real))
    return x, res / bnorm, max_iter


def solve_H(ctx, f, tol, x0=None, check_resolved=True):
    """Solve H u = f by conjugate gradients to ||H u - f|| <= tol * ||f||.

    Runs unpreconditioned first; if that has not converged after N iterations
    a diagonal Fourier preconditioner (-h^2 Lap + h b0)^{-1} takes over.  The
    total iteration budget is 20 * N * d.  `check_resolved=False` skips the
    boundary guard (internal eigen-iterates own their validity).
    """
    if not 1e-14 < tol < 1e-4:
        raise InvalidParameter(f"tol must lie in (1e-14, 1e-4), got {tol:g}")
    if ctx.model.b0 <= 0.0:
        raise InvalidParameter("solve_H requires a model with b0 > 0 (invertible H)")
    if check_resolved:
        ensure_resolved(f)

    def matvec(arr):
        return apply_H(ctx, Wavefunction(ctx.spec, arr)).values

    n = ctx.spec.points_per_axis
    budget = 20 * n * ctx.spec.d
    start = x0.values.copy() if x0 is not None else np.zeros_like(f.values)
    x, rel, used = _cg(matvec, f.values, start, tol, n)
    if rel > tol:
        precond = _fourier_preconditioner(ctx)
        x, rel, _ = _cg(matvec, f.values, x, tol, budget - used, precond=precond)
    if rel > tol:
        raise NoConvergence(
            f"CG stalled at relative residual {rel:.3e} (tol {tol:g}); "
            "h may be out of range for this grid or f unresolved",
            residual=rel,
        )
    return Wavefunction(ctx.spec, x)


def _ground_start_vector(ctx):
    """Sum of Gaussians seeded at the grid minima of the field intensity.

    The true ground state concentrates where Tr+ B is smallest; an
    origin-centered start can have (numerically) zero overlap with it and
    stall the inverse iteration.  For fields whose minimum is delocalized
    (constant models) the origin Gaussian is used.
    """
    from .fields import trace_plus_batch

    spec = ctx.spec
    tr = trace_plus_batch(ctx.model.b_matrix_on_grid(spec.coords()))
    tr = np.broadcast_to(tr, spec.shape)
    tr_min = float(tr.min())
    mask = tr <= tr_min * (1.0 + 1e-9) + 1e-300
    centers = np.argwhere(mask)
    if len(centers) > 16:
        centers = np.zeros((1, spec.d), dtype=int)
        centers[0, :] = spec.points_per_axis // 2  # node at the origin
    x = spec.axis_coords()
    # keep each bump five widths inside the boundary-guard ring
    ring = 0.9 * spec.half_width
    clearance = min(
        ring - abs(float(x[idx[j]])) for idx in centers for j in range(spec.d)
    )
    width = min(math.sqrt(2.0 * ctx.h / ctx.model.b0), max(clearance, 0.0) / 5.0)
    width = max(width, 4.0 * spec.spacing)
    values = np.zeros(spec.shape, dtype=np.complex128)
    for idx in centers:
        center = np.array([float(x[idx[j]]) for j in range(spec.d)])
        # local gauge phase: without it an off-center bump carries kinetic
        # energy |A(center)|^2 and sits dozens of Landau levels up
        momentum = ctx.model.eval_A(center)
        bump = np.ones(spec.shape, dtype=np.complex128)
        for j in range(spec.d):
            shape = [1] * spec.d
            shape[j] = spec.points_per_axis
            dx = x - center[j]
            axis = np.exp(1j * momentum[j] * dx / ctx.h - dx**2 / (2.0 * width**2))
            bump = bump * axis.reshape(shape)
        values += bump
    v = Wavefunction(spec, values)
    n = l2_norm(v)
    return Wavefunction(spec, values / n)


def lowest_eigenvalue(ctx, tol, max_iterations=60):
    """Smallest eigenvalue of the grid operator H by Krylov-accelerated inverse
    iteration: a Lanczos space is built with H^{-1} (each application one
    conjugate-gradient solve) and the top Ritz pair is refined until the
    eigenresidual ||H u - lambda u|| <= tol * lambda.

    The subspace acceleration matters for fields with localized intensity
    wells, whose spectrum starts with a dense ladder just above the ground
    state; plain power iteration would need thousands of solves there.
    Requires the grid to resolve the magnetic length: spacing <= sqrt(h/b0)/4.
    """
    if not 0 < tol < 1e-2:
        raise InvalidParameter("tol must lie in (0, 1e-2)")
    b0 = ctx.model.b0
    if b0 <= 0.0:
        raise InvalidParameter("lowest_eigenvalue requires b0 > 0")
    mag_len = math.sqrt(ctx.h / b0)
    if ctx.spec.spacing > mag_len / 4.0:
        raise ResolutionTooCoarse(
            f"spacing {ctx.spec.spacing:g} > sqrt(h/b0)/4 = {mag_len / 4.0:g}"
        )
    from scipy.linalg import eigh_tridiagonal

    def matvec(arr):
        return apply_H(ctx, Wavefunction(ctx.spec, arr)).values

    precond = _fourier_preconditioner(ctx)
    budget = 20 * ctx.spec.points_per_axis * ctx.spec.d
    cg_tol = max(2e-14, min(1e-5, tol * 1e-2))

    def inverse_apply(arr):
        # short unpreconditioned burst catches eigenvector-aligned right-hand
        # sides in O(1) iterations; generic ones switch to the Fourier
        # preconditioner early instead of after a full N iterations
        x, rel, used = _cg(matvec, arr, np.zeros_like(arr), cg_tol, 48)
        if rel > cg_tol:
            x, rel, _ = _cg(matvec, arr, x, cg_tol, budget - used, precond=precond)
        if rel > cg_tol:
            raise NoConvergence(
                f"inner solve stalled at relative residual {rel:.3e}", residual=rel
            )
        return x

    # the Lanczos basis is orthonormal in the plain array dot product, which
    # is the weighted L2 product up to a constant factor
    start = _ground_start_vector(ctx).values
    start = start / math.sqrt(float(np.vdot(start, start).real))
    basis = [start]
    alphas, betas = [], []
    resid = math.inf
    for m in range(1, max_iterations + 1):
        w = inverse_apply(basis[-1])
        a = float(np.vdot(basis[-1], w).real)
        alphas.append(a)
        w = w - a * basis[-1]
        if betas:
            w = w - betas[-1] * basis[-2]
        for u in basis:
            w = w - np.vdot(u, w) * u
        beta = math.sqrt(float(np.vdot(w, w).real))
        if m == 1:
            evals = np.array(alphas)
            evecs = np.ones((1, 1))
        else:
            evals, evecs = eigh_tridiagonal(alphas, betas)
        top = int(np.argmax(evals))  # largest Ritz value of H^{-1} <-> smallest of H
        y = evecs[:, top]
        vec = np.zeros_like(basis[0])
        for coeff, u in zip(y, basis):
            vec = vec + coeff * u
        vec = vec / math.sqrt(float(np.vdot(vec, vec).real))
        hvec = apply_H(ctx, Wavefunction(ctx.spec, vec)).values
        lam = float(np.vdot(vec, hvec).real)
        resid = math.sqrt(float(np.vdot(hvec - lam * vec, hvec - lam * vec).real)) / abs(lam)
        if resid <= tol:
            return lam
        if beta < 1e-14 * max(1.0, abs(a)):
            break  # invariant subspace reached; residual is what it is
        basis.append(w / beta)
        betas.append(beta)
    raise NoConvergence(
        f"inverse iteration residual {resid:.3e} above tol {tol:g}", residual=resid
    )


def elliptic_ratio(ctx, n, psi):
    """(sum over words sigma of length <= 2n of ||L_sigma psi||) / ||H^n psi||.

    Words share prefixes, so the sweep costs one magnetic derivative per word.
    Every intermediate composition must stay resolved on the box.
    """
    if n < 0:
        raise InvalidParameter("n must be >= 0")
    if n > MAX_WORD_HALF_LENGTH:
        raise OrderTooHigh(f"n={n} exceeds cap {MAX_WORD_HALF_LENGTH}")
    if ctx.spec.d > 2:
        raise InvalidParameter("numerical word sweeps are capped at d <= 2")
    ensure_resolved(psi)

    def guard(state, word):
        if l2_norm(state) == 0.0:
            return
        bm = boundary_mass(state, 0.1)
        if bm > RESOLVED_THRESHOLD:
            raise UnresolvedState(
                f"composition {word} has boundary mass {bm:.3e}; box too small"
            )

    total = l2_norm(psi)
    # depth-first prefix tree: node at depth p holds L_{w} psi for |w| = p
    stack = [((), psi)]
    while stack:
        word, state = stack.pop()
        if len(word) == 2 * n:
            continue
        for j in range(1, ctx.spec.d + 1):
            child = apply_L(ctx, j, state)
            new_word = (j,) + word
            guard(child, new_word)
            total += l2_norm(child)
            stack.append((new_word, child))
    den = l2_norm(apply_H_power(ctx, n, psi))
    if den == 0.0:
        raise ZeroDenominator("||H^n psi|| vanishes")
    return total / den
