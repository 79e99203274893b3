"""Numerical companion for sharp Sobolev inequalities on weighted intervals."""

__version__ = "0.1.0"

from ._validation import DegenerateInputError
from .concentration import SequenceDiagnostics, brezis_lieb_check, classify_sequence, concentration_density_bound
from .constants import (
    bonnet_myers_radius,
    comparison_volume,
    critical_exponent,
    distortion_sigma,
    distortion_tau,
    eucl_constant,
    eucl_constant_2,
    gamma,
    sobolev_conjugate,
    unit_ball_volume,
    unit_sphere_volume,
)
from .geometry import (
    DensityProfile,
    DiscreteMMS,
    ModelViolationError,
    avr_estimate,
    ball_mass,
    brunn_minkowski_check,
    density_profile,
    isoperimetric_constant,
    local_sobolev_check,
    minkowski_content,
    perimeter_superlevel,
)
from .grids import (
    SampledFunction,
    WeightedGrid,
    build_cone_model,
    build_custom_grid,
    build_sphere_model,
    dirichlet_energy,
    lp_norm,
    read_function,
    write_function,
)
from .rearrangement import (
    DistributionProfile,
    MonotoneRearrangement,
    distribution_function,
    euclidean_rearrange,
    generalized_inverse,
    monotone_rearrange_sphere,
    polya_szego_report,
)
from .sobolev import (
    QuotientReport,
    SobolevConstantEstimator,
    TruncationError,
    alpha_p_value,
    avr_lower_bound_from_sobolev,
    bliss_quotient,
    linearization_check,
    optimize_aopt,
    sobolev_quotient,
    tight_sobolev_check,
)
from .spectral import SpectralGap, SpectralGapResult, spectral_gap
from .yamabe import (
    ScalarField,
    YamabeMinimizer,
    YamabeReport,
    euler_lagrange_residual,
    lambda_continuity_trend,
    minimize_yamabe,
    yamabe_quotient,
    yamabe_upper_bound,
    yamabe_upper_bound_check,
)
