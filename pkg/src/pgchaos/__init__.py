"""Stochastic transient analysis of power grids with Hermite polynomial chaos."""
from .analysis import (
    ComparisonReport,
    McResult,
    Moments,
    PcResult,
    compare,
    pc_mean,
    pc_moment,
    pc_variance,
    run_mc,
    run_pc,
    run_quadrature,
    sample_distribution,
)
from .chaos import ChaosBasis, lognormal_coeffs, term_count
from .galerkin import assemble_augmented, assemble_rhs_only, residual_check
from .mna import assemble, combine_width_thickness, rhs_expansion
from .netlist import Grid, LoadSpec, VariationSpec, Waveform, format_netlist, generate_mesh, parse_netlist

__version__ = "0.1.0"
