"""Alpha-stable random sheets and Bayesian inverse problems with stable priors."""

__version__ = "0.1.0"

from .lepage import (
    ArrivalSequence,
    Box,
    LePageState,
    draw_arrivals,
    draw_lepage_state,
    lepage_field,
    random_measure,
    series_tail,
    stochastic_integral,
    truncation_diagnostic,
)
from .norms import BLFamily, NormConfig, bl_functionals, lp_distance_coupled, lp_norm_grid, prolong, sobolev_norm
from .rng import stream
from .sheet import (
    GridSheet,
    discretize_lepage,
    eval_piecewise,
    lepage_sheet,
    read_sheets,
    reconstruct_increment,
    sample_increments,
    write_sheets,
)
from .stable import (
    QuadratureError,
    StableParams,
    c_alpha,
    c_alpha_quadrature,
    char_fn,
    ecf_standard_errors,
    empirical_char_fn,
    ks_distance,
    ks_distance_bracketed,
    sample_stable,
    stable_cdf_numeric,
)
