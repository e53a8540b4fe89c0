"""Numerics for derivatives of measure functionals on discretized Wiener space.

The package builds weighted path pools on a time grid, moves probability
mass around with density curves and Girsanov reweighting, differentiates
cylindrical and nested functionals of the induced laws, extracts predictable
integrands, and pushes a density through the staged approximation pipeline
(conditioning, truncation, mollification, normalization, integrand
extraction, step freezing). The cli module exposes the same batteries as the
``wcalc`` command.
"""

__version__ = "0.1.0"

from .wiener_grid import TimeGrid, PathPool, make_grid, sample_paths, \
    brownian_at, dyadic_coarsen, bridge_resample, save_csv, load_csv
from .rng import substream
from .measure_ops import EmpiricalLaw, pushforward_law, wasserstein1, \
    weighted_expectation, kernel_regression, conditional_expectation
from .functionals import CylindricalFn, NestedFn, make_functional, eval_cyl, \
    lions_derivative, eval_nested, partial_mu_G_nested, lifted_derivative_fd
from .numerics import gauss_hermite, antiderivative_at, binned_gaussian_smooth, \
    bump_quad_1d, capped_identity, capped_identity_deriv, radial_cutoff, \
    radial_cutoff_deriv
from .density_deriv import DensityCurve, validate_curve, \
    exponential_family_curve, scalar_exponential_curve, mixture_curve, \
    constant_curve, DerivativeProfile, density_derivative_profile, \
    recenter_to_base, recenter_to_density, chain_rule_rhs, chain_rule_lhs_fd, \
    second_order_check_1d, second_order_check_multidim, \
    multidim_derivative_repr, nested_derivative_check
from .girsanov import StepProcess, CurveFamily, constant_process, \
    deterministic_process, table_process, history_process, \
    doleans_exponential, shift_forward, shift_backward, girsanov_check, \
    relative_exponential, relative_exponential_shifted
from .clark_ocone import SmoothFunctional, scalar_functional, \
    malliavin_derivative, gaussian_smooth, clark_ocone_decompose, \
    reconstruction_error
from .approx_pipeline import PipelineConfig, StageReport, PipelineReport, \
    ConditionedDensity, stage1_dyadic_condition, TruncatedDensity, \
    stage3_truncate, MollifiedDensity, stage4_mollify, stage5_normalize, \
    stage5_derivative, stage6_clark_ocone, stage7_stepify, pipeline_run, \
    pipeline_ladders, final_errors_at, DEFAULT_THRESHOLDS
from .density_functional import GridDensity, density_grid, kde_density, \
    DensityFunctionalPhi, dPhi_representer, representer_x_derivative, \
    bensoussan_check
from .checks import CheckRecord, CHECKS, run_check
