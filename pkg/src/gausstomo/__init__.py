"""Simulation and certified tomography of bosonic Gaussian states."""

from .bounds import (
    SamplePlan,
    derivative_bound,
    empirical_trace_inv_bound,
    framed_perturbation_bound,
    perturbation_bound,
    plan_samples,
    symmetric_perturbation_bound,
)
from .estimation import (
    AdaptiveTomography,
    HeterodyneTomography,
    StateHandle,
    TomographyResult,
    TransposeTomography,
    adaptive_round,
    adaptive_tomography,
    confidence,
    empirical_moments,
    heterodyne_tomography,
    recurrence_check,
    transpose_tomography,
)
from .measurement import (
    SampleBatch,
    euler_variant_unsqueeze,
    passive_unsqueeze_heterodyne,
    sample_gaussian,
    sample_generaldyne,
    sample_heterodyne,
    sample_homodyne,
    sample_transpose_scheme,
)
from .state import (
    GaussianState,
    StateDiagnostics,
    apply_symplectic,
    diagnostics,
    energy,
    from_williamson,
    new_state,
    squeezed,
    squeezed_thermal,
    tensor,
    thermal,
    transpose_state,
    vacuum,
)
from .symplectic import (
    euler,
    geometric_mean,
    is_symplectic,
    matrix_abs,
    omega,
    random_covariance,
    random_symplectic,
    symplectic_eigenvalues,
    williamson,
)

__version__ = "0.1.0"

__all__ = [name for name in dir() if not name.startswith("_")]
