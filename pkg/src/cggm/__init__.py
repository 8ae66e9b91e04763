"""Copula Gaussian graphical models for mixed binary, ordinal and continuous data."""

from .graph import UndirectedGraph, make_graph, toggle_edge, later_degree, graph_key
from .cholesky import (
    CholeskyFactor, free_elements, complete, assemble_precision, log_jacobian,
    correlation_from_precision, in_cone,
)
from .gwishart import (
    GWishartParams, NormConstCache, log_density_unnorm, log_norm_complete, log_norm_mc,
    log_norm_cached,
)
from .rank import ObservedData, latent_bounds, init_latents, sample_truncated_normal
from .estimators import (
    PosteriorSummary, EmpiricalMarginal, edge_inclusion_probs, mean_correlation,
    bayes_factor_upsilon, cell_probability_exact, table_probabilities_mc,
    expected_cell_counts, cramers_v, bayes_factor_rho, degree_and_association_summary,
)
from .sampler import SamplerConfig, run_chain, run_chains, copula_full_baseline
from .io import parse_contingency_table, parse_case_data, rochdale

__version__ = "0.1.0"
