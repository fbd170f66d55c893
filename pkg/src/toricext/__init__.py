"""Extremal metrics, K-energy, and Bergman-type quantization on toric surfaces."""

from .errors import (
    BasisMismatch,
    BudgetExceeded,
    EmptyInterior,
    InvalidTruncation,
    NotDelzant,
    NotPositiveDefinite,
    PolytopeMismatch,
    SingularGram,
    ToleranceNotMet,
    ToricExtError,
    Unbounded,
)
from .polynomial import Polynomial
from .polytope import (
    AffineFunction,
    DelzantPolytope,
    PLConvexFunction,
    blowup_polytope,
    build_polytope,
    interval,
    standard_simplex,
    triangulate,
    unit_square,
)
from .quadrature import (
    IntegralResult,
    QuadratureRule,
    graded_rule,
    integrate_boundary_poly,
    integrate_numeric,
    integrate_poly,
    line_log_integral,
    poly_log_integral,
    smooth_rule,
)
from .invariants import (
    ExtremalData,
    StabilityReport,
    canonical_report,
    extremal_affine,
    futaki_character,
    futaki_linear,
    relative_df,
    stability_scan,
)
from .kenergy import (
    EnergyReport,
    SymplecticPotential,
    TorusSubgroup,
    abreu_scalar,
    average_scalar_value,
    chen_check,
    energy_report,
    extremal_field_potential,
    kenergy_gradient,
    mabuchi_distance,
    modified_calabi,
    modified_kenergy,
    random_perturbation,
    reduced_scalar,
)
from .quantization import (
    AsymptoticReport,
    BalancedResult,
    DiagonalGram,
    FSPotential,
    LatticeBasis,
    SigmaAction,
    asymptotic_suite,
    balanced_iterate,
    bergman,
    bergman_trace,
    bk_distance,
    bk_geodesic,
    chen_quantized_margin,
    complex_laplacian,
    fs,
    grad_z,
    hilb,
    lattice_basis,
    path_energy,
    psi_sigma,
    sigma_density,
    sigma_rule,
    z_energy,
)

__version__ = "0.1.0"

__all__ = [name for name in dir() if not name.startswith("_")]
