"""Quasiuniformly convex integrands: catalogue, analysis, regularisation,
2-D Dirichlet solves and quantitative estimate verification."""

__version__ = "0.1.0"

from .integrand import (
    Integrand,
    IntegrandError,
    IsotropicEnvelope,
    combine,
    isotropic_envelope,
    make_anisotropic_quadratic,
    make_blend,
    make_finsler,
    make_power,
    make_uhlenbeck,
    normalise,
    power_profile,
    power_sum_profile,
    with_fd_derivatives,
)
from .qc_analysis import (
    DilatationEstimate,
    EtaProfile,
    H_from_delta,
    cassels_oracle,
    delta_from_H,
    estimate_H,
    eta,
    eta_H,
    eta_identities_check,
    eta_inv,
    matrix_inequality_check,
    measure_delta_monotonicity,
    quasisymmetry_check,
)
from .regularize import (
    MollifierSpec,
    mollify_plus_quadratic,
    moreau_yosida,
    strongly_elliptic_approx,
)
from .dual_geometry import (
    G_eval,
    GaugeSample,
    df_inverse,
    gauge,
    gauge_bounds,
    gauge_level_gap,
    star_shape_check,
)
from .solver import (
    GridProblem,
    GridSolution,
    Mesh,
    assemble_energy,
    solve,
    stress_field,
)
from .estimates import (
    DeGiorgiResult,
    VerificationReport,
    caccioppoli_check,
    caccioppoli_l1_check,
    degiorgi_iterate,
    degiorgi_threshold,
    lipschitz_check,
    sobolev_stress_check,
)
from .config import ExperimentConfig, build_integrand, compile_boundary_expression, parse_config
