"""Bio-plausible baseline: expression profiles from a lineage of cell divisions.

A zygote profile ``c ~ N(0, I)`` divides repeatedly; each daughter inherits
its parent's profile plus independent unit-normal noise. Leaves of the tree
become neurons, with each layer taking a contiguous run of leaves so that
neurons of one layer are close relatives. Profiles are raw (pre-map)
parameters ``[x_hat, q_hat, r_hat]``; rules and conductances come from a
trained genotype.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import Genotype, map_params
from .sampler import DEFAULT_TARGET_DEGREE, SampledAgent, choose_alpha, sample_agent


@dataclass
class LineageTree:
    zygote: np.ndarray
    depth: int
    leaves: np.ndarray  # (2**depth, profile_len), in division order


def grow_lineage(n_cells: int, profile_len: int, rng: np.random.Generator) -> LineageTree:
    """Divide from a single zygote until there are at least ``n_cells`` cells."""
    if n_cells < 1:
        raise ValueError("need at least one cell")
    zygote = rng.standard_normal(profile_len)
    cells = zygote[None, :]
    depth = 0
    while cells.shape[0] < n_cells:
        # daughters of cell k sit at 2k and 2k+1
        parents = np.repeat(cells, 2, axis=0)
        cells = parents + rng.standard_normal(parents.shape)
        depth += 1
    return LineageTree(zygote, depth, cells)


def lineal_init(n: int, profile_len: int, seed) -> np.ndarray:
    """``n`` raw profiles (rows) from one lineage, truncated and circularly rolled."""
    rng = np.random.default_rng(seed)
    tree = grow_lineage(n, profile_len, rng)
    profiles = tree.leaves[:n]
    return np.roll(profiles, int(rng.integers(n)), axis=0)


def split_layers(profiles: np.ndarray, layer_sizes) -> list:
    """Partition rows contiguously into ``[input | hidden ... | output]`` blocks."""
    bounds = np.cumsum((0,) + tuple(layer_sizes))
    if bounds[-1] != profiles.shape[0]:
        raise ValueError("profile count does not match the layer sizes")
    return [profiles[a:b] for a, b in zip(bounds[:-1], bounds[1:])]


def lineal_genotype(trained: Genotype, seed) -> Genotype:
    """Genotype with lineage-derived profiles and the trained rules/conductances."""
    dims = trained.dims
    G, L = dims.genes, dims.transmitters
    profiles = lineal_init(dims.n_neurons, G + L + dims.receptors, seed)
    layers = split_layers(profiles, dims.layer_sizes)
    return trained.with_blocks(
        X_hat=[p[:, :G] for p in layers],
        Q_hat=[p[:, G:G + L] for p in layers],
        R_hat=[p[:, G + L:] for p in layers],
    )


def bio_agent(trained: Genotype, seed: int, target_degree: float = DEFAULT_TARGET_DEGREE) -> SampledAgent:
    """Sample one baseline agent: lineal profiles, then synaptogenesis.

    ``seed`` feeds two child streams, one for the lineage and one for sampling.
    """
    lineage_seed, sample_seed = np.random.SeedSequence(seed).generate_state(2, np.uint64)
    genotype = lineal_genotype(trained, int(lineage_seed))
    factors = map_params(genotype)
    alpha = choose_alpha(factors, target_degree)
    return sample_agent(genotype, alpha, int(sample_seed), factors, provenance="lineal")
