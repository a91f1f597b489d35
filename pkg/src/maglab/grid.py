"""Uniform periodic grid, wavefunction storage, spectral calculus and norms.

Conventions used throughout the package:

* the box is ``[-L, L)^d`` sampled at ``N`` nodes per axis (``N`` a power of
  two), node coordinates ``x_i = -L + i * spacing`` with ``spacing = 2L/N``;
* Fourier modes carry symmetric integer frequencies ``k in {-N/2..N/2-1}``
  and angular wavenumber ``pi*k/L``; the Nyquist mode is zeroed for odd
  derivative orders so that derivatives of real inputs stay real;
* the L2 inner product is the Riemann sum ``spacing^d * sum(conj(psi)*phi)``,
  which is exact (trapezoidal) on a periodic grid.
"""

from __future__ import annotations

import functools
import math
from dataclasses import dataclass

import numpy as np
from scipy import fft as _sfft

from .errors import (
    GridMismatch,
    InvalidParameter,
    OrderTooHigh,
    PacketNearBoundary,
    PacketUnresolved,
    UnresolvedState,
    WeightOverflow,
    ZeroState,
)

_FFT_WORKERS = 1

# boundary-mass fraction above which sup-type quantities are rejected
RESOLVED_THRESHOLD = 1e-8
_GUARD_MARGIN = 0.1


def set_fft_workers(n):
    """Set the number of worker threads scipy's FFT may use (results are bitwise identical)."""
    global _FFT_WORKERS
    _FFT_WORKERS = max(1, int(n))


def _fft(a, axis):
    return _sfft.fft(a, axis=axis, workers=_FFT_WORKERS)


def _ifft(a, axis):
    return _sfft.ifft(a, axis=axis, workers=_FFT_WORKERS)


def _fftn(a):
    return _sfft.fftn(a, workers=_FFT_WORKERS)


def _ifftn(a):
    return _sfft.ifftn(a, workers=_FFT_WORKERS)


@dataclass(frozen=True)
class GridSpec:
    """Uniform periodic grid on [-half_width, half_width)^d."""

    d: int
    half_width: float
    points_per_axis: int

    def __post_init__(self):
        if not 1 <= self.d <= 4:
            raise InvalidParameter(f"dimension must be in 1..4, got {self.d}")
        if self.half_width <= 0:
            raise InvalidParameter("half_width must be positive")
        n = self.points_per_axis
        if n < 8 or (n & (n - 1)) != 0:
            raise InvalidParameter(f"points_per_axis must be a power of two >= 8, got {n}")
        if n**self.d > 2**28:
            raise InvalidParameter(f"grid too large: {n}^{self.d} nodes exceeds 2^28")

    @property
    def spacing(self):
        return 2.0 * self.half_width / self.points_per_axis

    @property
    def node_count(self):
        return self.points_per_axis**self.d

    @property
    def shape(self):
        return (self.points_per_axis,) * self.d

    def axis_coords(self):
        """1-d node coordinates, shared by every axis."""
        return _axis_coords(self)

    def coord(self, j):
        """Coordinate array for 1-based axis j, broadcastable over the grid."""
        if not 1 <= j <= self.d:
            raise InvalidParameter(f"axis must be in 1..{self.d}, got {j}")
        x = self.axis_coords()
        shape = [1] * self.d
        shape[j - 1] = self.points_per_axis
        return x.reshape(shape)

    def coords(self):
        """Tuple of broadcastable coordinate arrays, one per axis."""
        return tuple(self.coord(j) for j in range(1, self.d + 1))

    def angular_freqs(self):
        """Angular wavenumbers pi*k/L in FFT order, shared by every axis."""
        return _angular_freqs(self)


@functools.lru_cache(maxsize=None)
def _axis_coords(spec):
    return -spec.half_width + spec.spacing * np.arange(spec.points_per_axis)


@functools.lru_cache(maxsize=None)
def _angular_freqs(spec):
    return 2.0 * np.pi * np.fft.fftfreq(spec.points_per_axis, d=spec.spacing)


@dataclass
class Wavefunction:
    """Complex field sampled on a GridSpec, stored as a (N,)*d array (row-major)."""

    spec: GridSpec
    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.complex128)
        if self.values.shape != self.spec.shape:
            raise GridMismatch(
                f"values shape {self.values.shape} does not match grid {self.spec.shape}"
            )

    def copy(self):
        return Wavefunction(self.spec, self.values.copy())


def _same_spec(psi, phi):
    if psi.spec != phi.spec:
        raise GridMismatch("wavefunctions live on different grids")


def iter_multi_indices(d, max_total):
    """All multi-indices alpha in N^d with |alpha| <= max_total, lexicographic."""
    if d == 0:
        yield ()
        return
    for first in range(max_total + 1):
        for rest in iter_multi_indices(d - 1, max_total - first):
            yield (first,) + rest


def gaussian_packet(spec, center, momentum, width, h):
    """Sample the normalized coherent packet

        (pi*width^2)^(-d/4) * exp(i momentum.(x-center)/h) * exp(-|x-center|^2/(2 width^2))

    on the grid.  Guards: width >= 4*spacing, center at least 4*width from the boundary.
    """
    center = np.asarray(center, dtype=float).reshape(spec.d)
    momentum = np.asarray(momentum, dtype=float).reshape(spec.d)
    if h <= 0:
        raise InvalidParameter("h must be positive")
    if width <= 0:
        raise InvalidParameter("width must be positive")
    if width < 4.0 * spec.spacing:
        raise PacketUnresolved(
            f"width {width:g} < 4*spacing {4 * spec.spacing:g}; refine the grid"
        )
    margin = spec.half_width - np.abs(center)
    if np.any(margin < 4.0 * width):
        raise PacketNearBoundary(
            f"center {center.tolist()} closer than 4*width to the box boundary"
        )
    amp = (math.pi * width**2) ** (-spec.d / 4.0)
    values = np.full(spec.shape, amp, dtype=np.complex128)
    x = spec.axis_coords()
    for j in range(spec.d):
        dx = x - center[j]
        axis_factor = np.exp(1j * momentum[j] * dx / h - dx**2 / (2.0 * width**2))
        shape = [1] * spec.d
        shape[j] = spec.points_per_axis
        values = values * axis_factor.reshape(shape)
    return Wavefunction(spec, values)


def spectral_derivative(psi, axis, order=1):
    """m-th partial derivative along a 1-based axis via the discrete Fourier transform.

    Multiplies mode k by (i*pi*k/L)^order; exact for band-limited input.
    """
    spec = psi.spec
    if not 1 <= axis <= spec.d:
        raise InvalidParameter(f"axis must be in 1..{spec.d}, got {axis}")
    if order < 1:
        raise InvalidParameter("derivative order must be >= 1")
    mult = (1j * spec.angular_freqs()) ** order
    if order % 2 == 1:
        mult = mult.copy()
        mult[spec.points_per_axis // 2] = 0.0  # Nyquist mode has no well-defined sign
    shape = [1] * spec.d
    shape[axis - 1] = spec.points_per_axis
    hat = _fft(psi.values, axis=axis - 1)
    return Wavefunction(spec, _ifft(hat * mult.reshape(shape), axis=axis - 1))


def inner(psi, phi):
    """L2 inner product spacing^d * sum(conj(psi) * phi)."""
    _same_spec(psi, phi)
    return psi.spec.spacing**psi.spec.d * np.vdot(psi.values, phi.values)


def l2_norm(psi):
    """L2 norm of psi on the grid."""
    v = psi.values
    return math.sqrt(psi.spec.spacing**psi.spec.d * float(np.vdot(v, v).real))


def boundary_mass(psi, margin_fraction):
    """Fraction of |psi|^2 mass in the frame ||x||_inf >= (1-m)*L.

    Node cells are clipped against the frame so the measure of the region is
    exact; a constant state yields exactly 1-(1-m)^d.
    """
    if not 0.0 < margin_fraction < 0.5:
        raise InvalidParameter("margin_fraction must lie in (0, 0.5)")
    spec = psi.spec
    density = np.abs(psi.values) ** 2
    total = float(density.sum())
    if total == 0.0:
        raise ZeroState("boundary_mass undefined for the zero state")
    a = (1.0 - margin_fraction) * spec.half_width
    x = spec.axis_coords()
    half = spec.spacing / 2.0
    # fraction of each node's cell [x-h/2, x+h/2) inside the interior interval (-a, a)
    u = np.clip(
        (np.minimum(x + half, a) - np.maximum(x - half, -a)) / spec.spacing, 0.0, 1.0
    )
    interior = np.ones((), dtype=float)
    for j in range(spec.d):
        shape = [1] * spec.d
        shape[j] = spec.points_per_axis
        interior = interior * u.reshape(shape)
    mass = float((density * (1.0 - interior)).sum())
    return mass / total


def ensure_resolved(psi, threshold=RESOLVED_THRESHOLD, margin_fraction=_GUARD_MARGIN):
    """Raise UnresolvedState if psi carries more than `threshold` relative mass near the boundary."""
    bm = boundary_mass(psi, margin_fraction)
    if bm > threshold:
        raise UnresolvedState(
            f"boundary mass {bm:.3e} exceeds {threshold:.1e}; state not resolved on this box"
        )
    return bm


def seminorm_pk(psi, k):
    """Schwartz semi-norm: max over |alpha|+|beta| <= k of the grid sup of |x^alpha d^beta psi|.

    Derivatives are spectral; sups are grid maxima (valid for resolved,
    band-limited states).
    """
    if k < 0:
        raise InvalidParameter("k must be >= 0")
    if k > 6:
        raise OrderTooHigh(f"semi-norm order {k} exceeds the cost cap 6")
    ensure_resolved(psi)
    spec = psi.spec
    x = spec.axis_coords()
    abs_x_pows = [np.abs(x) ** a for a in range(k + 1)]
    freqs = 1j * spec.angular_freqs()
    nyq = spec.points_per_axis // 2
    hat = _fftn(psi.values)
    best = 0.0
    for beta in iter_multi_indices(spec.d, k):
        if sum(beta) == 0:
            field = np.abs(psi.values)
        else:
            mult_hat = hat
            for j, m in enumerate(beta):
                if m == 0:
                    continue
                mult = freqs**m
                if m % 2 == 1:
                    mult = mult.copy()
                    mult[nyq] = 0.0
                shape = [1] * spec.d
                shape[j] = spec.points_per_axis
                mult_hat = mult_hat * mult.reshape(shape)
            field = np.abs(_ifftn(mult_hat))
        rem = k - sum(beta)
        for alpha in iter_multi_indices(spec.d, rem):
            weighted = field
            for j, a in enumerate(alpha):
                if a == 0:
                    continue
                shape = [1] * spec.d
                shape[j] = spec.points_per_axis
                weighted = weighted * abs_x_pows[a].reshape(shape)
            best = max(best, float(weighted.max()))
    return best


def weighted_l2(psi, beta):
    """Exponentially weighted norm ||exp(beta*<x>) psi|| with <x> = sqrt(1+|x|^2)."""
    if beta < 0:
        raise InvalidParameter("beta must be >= 0")
    spec = psi.spec
    if beta * spec.half_width * math.sqrt(spec.d) > 700.0:
        raise WeightOverflow(
            f"beta={beta:g} would overflow exp on a box of half-width {spec.half_width:g}"
        )
    if beta == 0.0:
        return l2_norm(psi)
    r2 = np.zeros(spec.shape, dtype=float)
    for j in range(1, spec.d + 1):
        r2 = r2 + spec.coord(j) ** 2
    weight = np.exp(beta * np.sqrt(1.0 + r2))
    dens = weight**2 * np.abs(psi.values) ** 2
    return math.sqrt(spec.spacing**spec.d * float(dens.sum()))
