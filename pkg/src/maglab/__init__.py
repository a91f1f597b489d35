"""maglab: a desk-scale numerical and symbolic laboratory for magnetic
Schrodinger operators (-i h grad - A)^2 on periodic grids.

Subpackages: `grid` (spectral calculus and norms), `fields` (field models and
gauges), `operators` (magnetic derivatives, solves, eigenvalues),
`propagator` (Krylov flow and Duhamel checks), `algebra` (exact commutator
engine), `harness` (experiments, fits, reports) and `cli`.
"""

__version__ = "0.1.0"

from .grid import (  # noqa: E402,F401
    GridSpec,
    Wavefunction,
    boundary_mass,
    gaussian_packet,
    inner,
    l2_norm,
    seminorm_pk,
    set_fft_workers,
    spectral_derivative,
    weighted_l2,
)
from .fields import (  # noqa: F401
    FieldModel,
    check_assumption,
    constant2d,
    constant4d,
    free,
    gauge_from_field,
    perturbed2d,
    trace_plus,
)
from .operators import (  # noqa: F401
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
from .propagator import (  # noqa: F401
    FlowTrace,
    PropagatorConfig,
    duhamel_residual,
    evolve,
    unitarity_drift,
)
