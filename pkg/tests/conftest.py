import numpy as np
import pytest

from maglab.grid import GridSpec, Wavefunction, l2_norm


@pytest.fixture
def rng():
    return np.random.default_rng(20240810)


def random_bandlimited(spec, rng, band_fraction=0.125, normalize=True):
    """Random state with Fourier support in the lowest band_fraction of modes."""
    n = spec.points_per_axis
    keep = max(2, int(n * band_fraction))
    hat = np.zeros(spec.shape, dtype=np.complex128)
    block = (slice(0, keep),) * spec.d
    hat[block] = rng.normal(size=(keep,) * spec.d) + 1j * rng.normal(size=(keep,) * spec.d)
    psi = Wavefunction(spec, np.fft.ifftn(hat))
    if normalize:
        psi = Wavefunction(spec, psi.values / l2_norm(psi))
    return psi


def grid1d(half_width=16.0, n=256):
    return GridSpec(1, half_width, n)


def grid2d(half_width=8.0, n=128):
    return GridSpec(2, half_width, n)
