from .discrete import hold_discretization, hold_drive, linear_recurrence
from .filters import (
    LtiFilter,
    filter_signal,
    frequency_response,
    low_pass,
    make_filter,
    step_filter,
)
from .integrate import (
    Trajectory,
    first_non_finite,
    integrate_rk4,
    propagate_affine,
    rk4_affine_maps,
    rk4_step,
    stage_index,
    steps_between,
)
from .linalg import (
    ExponentialPropagator,
    adjugate,
    cramer_numerators,
    determinant,
    exponential_samples,
    is_detectable,
    is_hurwitz,
    matrix_exponential,
    numerical_rank,
    observability_decomposition,
    observability_matrix,
    pole_place,
    spectral_abscissa,
)

__all__ = [
    "ExponentialPropagator",
    "LtiFilter",
    "Trajectory",
    "adjugate",
    "cramer_numerators",
    "determinant",
    "exponential_samples",
    "filter_signal",
    "first_non_finite",
    "frequency_response",
    "hold_discretization",
    "hold_drive",
    "integrate_rk4",
    "is_detectable",
    "is_hurwitz",
    "linear_recurrence",
    "low_pass",
    "make_filter",
    "matrix_exponential",
    "numerical_rank",
    "observability_decomposition",
    "observability_matrix",
    "pole_place",
    "propagate_affine",
    "rk4_affine_maps",
    "rk4_step",
    "spectral_abscissa",
    "stage_index",
    "step_filter",
    "steps_between",
]
