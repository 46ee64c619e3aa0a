"""Local proper scoring rules for density forecasts."""

from .analysis import (
    c_p_spread,
    divergence,
    euler_residual,
    expected_score,
    fisher_divergence,
    kl_divergence,
    propriety_scan,
    standard_family,
)
from .construction import (
    Kernel,
    concavity_report,
    construct_score,
    finite_difference_adaptor,
    get_kernel,
    log_cosh_kernel,
    log_kernel,
    phi,
    power_kernel,
    recover_kernel,
)
from .densities import (
    DensityModel,
    Logistic,
    Mixture,
    Normal,
    TwoPieceGamma,
    class_p_diagnostics,
    log_derivatives,
    mixture,
    pdf,
    sample,
)
from .grammar import format_density, parse_density
from .scores import (
    LocalScore,
    NonlocalScore,
    eval_local,
    get_score,
    hyvarinen,
    log_cosh,
    logarithmic,
    power_score,
    quadratic_score,
    spherical_score,
)

__version__ = "0.1.0"
