"""Unitary time evolution psi(t) = exp(+i t H / h) psi0 and the Duhamel
residual for the position observable.

The sign convention is fixed by the evolution equation
``-i h d_t psi = H psi``, i.e. the propagator is ``exp(+i t H / h)``; the
free-field single-mode test pins it.  Each substep applies a Lanczos
(Hermitian Krylov) approximation of the exponential; the projected step is
exactly norm-preserving, so unitarity drift is rounding-level regardless of
the truncation tolerance.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import eigh_tridiagonal

from .errors import InvalidParameter, NoConvergence, UnresolvedState
from .grid import Wavefunction, boundary_mass, l2_norm
from .operators import apply_H, apply_L
from .algebra import H_poly, X, commutator, normal_form, evaluate_sympoly

SNAPSHOT_BOUNDARY_THRESHOLD = 1e-6


@dataclass
class PropagatorConfig:
    """Krylov substep parameters.  dt = None picks 10*h/lambda_max_bound."""

    krylov_dim: int = 30
    dt: float | None = None
    tol: float = 1e-10
    max_steps: int = 200000

    def __post_init__(self):
        if self.krylov_dim < 8:
            raise InvalidParameter("krylov_dim must be >= 8")
        if not 1e-14 < self.tol < 1e-4:
            raise InvalidParameter("tol must lie in (1e-14, 1e-4)")
        if self.dt is not None and self.dt <= 0:
            raise InvalidParameter("dt must be positive")
        if self.max_steps < 1:
            raise InvalidParameter("max_steps must be >= 1")


@dataclass
class FlowTrace:
    """Snapshots of one evolution run; times[0] = 0 and states[0] = psi0."""

    times: list
    states: list
    norm_drift: list = field(default_factory=list)


def default_dt(ctx, cfg):
    if cfg.dt is not None:
        return cfg.dt
    return 10.0 * ctx.h / ctx.spectral_radius_bound()


def _lanczos_step(ctx, values, tau, cfg):
    """One Krylov step of exp(+i tau H / h) applied to `values`.

    Lanczos with full reorthogonalization; stops when the standard a
    posteriori estimate beta_m * |[exp(i tau T / h)]_{m,1}| drops below
    tol * ||psi||.
    """
    norm0 = math.sqrt(float(np.vdot(values, values).real))
    if norm0 == 0.0:
        return values.copy()
    theta = tau / ctx.h
    basis = [values / norm0]
    alphas = []
    betas = []
    for m in range(1, cfg.krylov_dim + 1):
        w = apply_H(ctx, Wavefunction(ctx.spec, basis[-1])).values
        a = float(np.vdot(basis[-1], w).real)
        alphas.append(a)
        w = w - a * basis[-1]
        if betas:
            w = w - betas[-1] * basis[-2]
        # full reorthogonalization; cheap next to the operator applications
        for u in basis:
            w = w - np.vdot(u, w) * u
        beta = math.sqrt(float(np.vdot(w, w).real))
        if m == 1:
            evals = np.array(alphas)
            evecs = np.ones((1, 1))
        else:
            evals, evecs = eigh_tridiagonal(alphas, betas)
        y = evecs @ (np.exp(1j * theta * evals) * evecs[0, :].conj())
        err = beta * abs(y[-1]) * min(1.0, abs(theta))
        if err <= cfg.tol or beta < 1e-13 * max(1.0, abs(a)):
            out = np.zeros_like(values)
            for coeff, u in zip(y, basis):
                out = out + coeff * u
            return norm0 * out
        if m == cfg.krylov_dim:
            raise NoConvergence(
                f"Krylov step stalled: estimate {err:.3e} above tol {cfg.tol:g} "
                f"at dimension {cfg.krylov_dim}",
                residual=err,
            )
        basis.append(w / beta)
        betas.append(beta)
    raise AssertionError("unreachable")


def evolve(ctx, psi0, t_final, cfg=None, snapshot_times=None):
    """Propagate psi0 to t_final, recording snapshots.

    Snapshots are hit exactly (the substep is shortened when needed).  A
    snapshot with boundary mass above 1e-6 aborts with UnresolvedState: the
    packet reached the box edge and the run is invalid.  The escape guard
    only applies when the initial state is itself localized away from the
    boundary; delocalized data (an exact torus mode, say) has no edge to hit.
    """
    cfg = cfg or PropagatorConfig()
    if t_final < 0:
        raise InvalidParameter("t_final must be >= 0")
    if snapshot_times is None:
        snapshot_times = [t_final]
    snaps = sorted(set(float(t) for t in snapshot_times))
    if snaps and (snaps[0] < 0 or snaps[-1] > t_final):
        raise InvalidParameter("snapshot times must lie in [0, t_final]")
    if not snaps or snaps[-1] < t_final:
        snaps.append(float(t_final))
    norm0 = l2_norm(psi0)
    guard_boundary = (
        norm0 > 0.0 and boundary_mass(psi0, 0.1) <= SNAPSHOT_BOUNDARY_THRESHOLD
    )
    times = [0.0]
    states = [psi0.copy()]
    drift = [0.0]
    dt = default_dt(ctx, cfg)
    current = psi0.values.copy()
    t = 0.0
    steps = 0
    for target in snaps:
        if target == 0.0:
            continue
        while t < target - 1e-13 * max(1.0, target):
            tau = min(dt, target - t)
            current = _lanczos_step(ctx, current, tau, cfg)
            t += tau
            steps += 1
            if steps > cfg.max_steps:
                raise NoConvergence(
                    f"evolution exceeded max_steps={cfg.max_steps}", residual=None
                )
        t = target
        state = Wavefunction(ctx.spec, current.copy())
        if guard_boundary and l2_norm(state) > 0:
            bm = boundary_mass(state, 0.1)
            if bm > SNAPSHOT_BOUNDARY_THRESHOLD:
                raise UnresolvedState(
                    f"snapshot at t={target:g} has boundary mass {bm:.3e}; "
                    "the packet hit the box edge"
                )
        times.append(t)
        states.append(state)
        drift.append(abs(l2_norm(state) - norm0))
    return FlowTrace(times=times, states=states, norm_drift=drift)


def unitarity_drift(trace):
    """Largest per-snapshot deviation of the norm from its initial value."""
    return max(trace.norm_drift, default=0.0)


def _position_commutator_source(ctx, j):
    """The Duhamel source operator (i/h) [x_j, H], with the commutator taken
    from the symbolic engine's normal form rather than any quoted constant."""
    poly = normal_form(commutator(X(j), H_poly(ctx.spec.d)))
    return poly


def duhamel_residual(ctx, psi0, j, t, cfg=None, quadrature_nodes=32):
    """Relative L2 defect of the variation-of-constants identity

        x_j psi(t) = U(t)(x_j psi0) + int_0^t U(t-s) (i/h)[x_j, H] psi(s) ds

    with U(t) = exp(+i t H / h) and Gauss-Legendre quadrature of the integral.
    """
    cfg = cfg or PropagatorConfig()
    if quadrature_nodes < 2:
        raise InvalidParameter("quadrature_nodes must be >= 2")
    if t < 0:
        raise InvalidParameter("t must be >= 0")
    if t == 0.0:
        return 0.0
    source_poly = _position_commutator_source(ctx, j)
    xj = ctx.coord(j)

    nodes, weights = np.polynomial.legendre.leggauss(quadrature_nodes)
    s_nodes = 0.5 * t * (nodes + 1.0)
    s_weights = 0.5 * t * weights
    order = np.argsort(s_nodes)
    s_nodes = s_nodes[order]
    s_weights = s_weights[order]

    # single forward pass with snapshots at the quadrature nodes and at t
    trace = evolve(ctx, psi0, t, cfg, snapshot_times=list(s_nodes) + [t])
    by_time = {round(tt, 12): st for tt, st in zip(trace.times, trace.states)}
    psi_t = by_time[round(t, 12)]

    # accumulate int_0^t U(t-s) g(s) ds by propagating the running sum forward
    acc = np.zeros_like(psi0.values)
    prev = None
    for s, w in zip(s_nodes, s_weights):
        if prev is not None and s > prev:
            acc = _evolve_values(ctx, acc, s - prev, cfg)
        state = by_time[round(float(s), 12)]
        g = evaluate_sympoly(ctx, source_poly, state).values * (1j / ctx.h)
        acc = acc + w * g
        prev = s
    if t > prev:
        acc = _evolve_values(ctx, acc, t - prev, cfg)

    carried = evolve(ctx, Wavefunction(ctx.spec, xj * psi0.values), t, cfg).states[-1]
    lhs = xj * psi_t.values
    rhs = carried.values + acc
    num = np.sqrt(float(np.vdot(lhs - rhs, lhs - rhs).real))
    den = np.sqrt(float(np.vdot(lhs, lhs).real))
    if den == 0.0:
        return 0.0
    return num / den


def _evolve_values(ctx, values, tau, cfg):
    dt = default_dt(ctx, cfg)
    out = values
    t = 0.0
    while t < tau - 1e-13 * max(1.0, tau):
        step = min(dt, tau - t)
        out = _lanczos_step(ctx, out, step, cfg)
        t += step
    return out
