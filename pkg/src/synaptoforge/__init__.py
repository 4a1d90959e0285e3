"""Genetic connectome models: networks whose weights are grown from gene expression."""

from .core import (
    CONSTRAINT_COEXPRESSION,
    CONSTRAINT_FREE,
    Genotype,
    MappedFactors,
    ModelDims,
    build_polarity_matrix,
    constrained_rules,
    expected_conductance,
    expected_conductance_matrix,
    expected_connectome,
    expected_synapse_count,
    init_genotype,
    map_params,
    mean_weight_matrix,
    mean_weights,
)
from .graddiff import backward, finite_diff_check, forward
from .policy import PolicyNetwork
from .sampler import SampledAgent, choose_alpha, sample_agent
from .envs import make_env, run_episode

__all__ = [
    "CONSTRAINT_COEXPRESSION", "CONSTRAINT_FREE", "Genotype", "MappedFactors", "ModelDims",
    "build_polarity_matrix", "constrained_rules", "expected_conductance",
    "expected_conductance_matrix", "expected_connectome", "expected_synapse_count",
    "init_genotype", "map_params", "mean_weight_matrix", "mean_weights",
    "backward", "finite_diff_check", "forward", "PolicyNetwork",
    "SampledAgent", "choose_alpha", "sample_agent", "make_env", "run_episode",
]
