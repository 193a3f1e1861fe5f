"""Standing waves of the defocusing NLS with a point interaction.

Construct the unique positive radial profile for frequencies below the
bound-state threshold by action minimization and by ODE shooting, verify
the structural identities of the extended quadratic form, analyze the
zero-mass algebraic decay, and demonstrate orbital stability by
conservative time evolution.
"""

from .errors import (
    BracketFailureError,
    InvariantViolation,
    NoDescentError,
    NonlinearSolveError,
    SolverError,
    WindowTooSmallError,
)
from .special import (
    EULER_GAMMA,
    InteractionParams,
    alpha_for_omega,
    bessel_k0,
    bessel_k1,
    beta,
    chi_alpha_value,
    e_alpha,
    green_inner,
    green_l2_norm_sq,
    green_value,
    omega_alpha,
)
from .grid import (
    DecomposedField,
    RadialGrid,
    build_grid,
    default_grid,
    estimate_tail_bound,
    field_from_values,
    inner_l2,
    kernel_weights,
    lp1_inner_with_green,
    lq_norm,
    mass,
    radial_gradient_norm_sq,
    read_field,
    rebase,
    write_field,
)
from .forms import (
    FormAssembly,
    FormEvaluation,
    action,
    action_gradient,
    bilinear_form,
    canonical_lambda,
    euler_lagrange_residual,
    quadratic_form,
)
from .solver import (
    SolveResult,
    SolverOptions,
    TailFit,
    boundary_defect_from_dense,
    boundary_defect_from_profile,
    comparison_sandwich_check,
    cross_validate,
    discrete_ground_pair,
    fit_tail_exponent,
    gauge_fix,
    l2_threshold_experiment,
    log_derivative_at,
    minimize_action,
    shoot_profile,
    veron_constant,
    veron_exact_residual,
)
from .evolve import (
    EvolutionConfig,
    EvolutionTrace,
    Propagator,
    conserve_report,
    default_evolution_grid,
    orbital_distance,
    run_evolution,
    stability_experiment,
    step,
)

__all__ = [name for name in dir() if not name.startswith("_")]
__version__ = "0.1.0"
