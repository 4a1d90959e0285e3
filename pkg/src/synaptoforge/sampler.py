"""Stochastic synaptogenesis: integer synapse counts from a genotype.

For every gene pair ``(i, j)`` and neuron pair ``(u, v)`` the number of
attempts is ``round(alpha * X_pre[u, i] * X_post[v, j])`` and each attempt
succeeds with probability ``O[i, j]``. Counts from all gene pairs are summed,
and the realized weights are ``counts * Gbar / alpha``, which keeps the mean
weight independent of ``alpha``.

Random streams: an agent seed feeds ``numpy.random.SeedSequence``, which is
spawned into one child per layer. Each layer draws all gene-pair binomials in
a single call, ordered gene-pair-major ``(i, j, u, v)``. Binomials come from
numpy's exact generator (inversion for small means, BTPE above).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .core import Genotype, MappedFactors, map_params
from .graddiff import layer_matrices
from .policy import PolicyNetwork

_INT64_MAX = np.iinfo(np.int64).max
DEFAULT_TARGET_DEGREE = 1e4


def round_half_away(x):
    """Round to the nearest integer, ties away from zero."""
    x = np.asarray(x, dtype=np.float64)
    return np.sign(x) * np.floor(np.abs(x) + 0.5)


@dataclass
class SampledAgent:
    """One realized network: synapse counts and weights per layer."""

    counts: list
    weights: list
    alpha: float
    seed: int
    provenance: Optional[str] = None
    tonic_input: bool = False
    layer_sizes: tuple = field(init=False)

    def __post_init__(self):
        self.layer_sizes = (self.weights[0].shape[0],) + tuple(W.shape[1] for W in self.weights)

    def network(self) -> PolicyNetwork:
        return PolicyNetwork(self.weights, "sampled-agent", self.tonic_input)

    def mean_degree(self) -> float:
        return 2.0 * sum(float(B.sum()) for B in self.counts) / sum(self.layer_sizes)


def attempt_counts(X_pre, X_post, alpha):
    """Integer attempt counts, shape ``(G, G, N_pre, N_post)``."""
    raw = alpha * np.einsum("ui,vj->ijuv", X_pre, X_post)
    if not np.isfinite(raw).all() or raw.max(initial=0.0) >= _INT64_MAX:
        raise OverflowError("attempt count exceeds the 64-bit integer range; lower alpha")
    return round_half_away(raw).astype(np.int64)


def sample_layer(X_pre, X_post, O, Gbar, alpha: float, rng: np.random.Generator):
    """Sample synapse counts and realized weights for one layer.

    Returns ``(counts, W)`` with ``W = counts * Gbar / alpha``.
    """
    if not alpha > 0:
        raise ValueError(f"alpha must be positive, got {alpha}")
    X_pre = np.asarray(X_pre, dtype=np.float64)
    X_post = np.asarray(X_post, dtype=np.float64)
    O = np.asarray(O, dtype=np.float64)
    G = O.shape[0]
    if O.shape != (G, G) or X_pre.shape[1] != G or X_post.shape[1] != G:
        raise ValueError("factor shapes do not match")
    if Gbar.shape != (X_pre.shape[0], X_post.shape[0]):
        raise ValueError("conductance matrix shape does not match the layer")
    n = attempt_counts(X_pre, X_post, alpha)
    p = np.broadcast_to(np.clip(O, 0.0, 1.0)[:, :, None, None], n.shape)
    counts = rng.binomial(n, p).sum(axis=(0, 1))
    return counts, counts * (Gbar / alpha)


def layer_streams(seed: int, depth: int):
    return [np.random.Generator(np.random.PCG64(s)) for s in np.random.SeedSequence(seed).spawn(depth)]


def sample_agent(
    genotype: Genotype,
    alpha: float,
    seed: int,
    factors: Optional[MappedFactors] = None,
    provenance: Optional[str] = None,
) -> SampledAgent:
    """Realize one agent. The same ``(genotype, alpha, seed)`` always yields
    the same counts and weights."""
    if factors is None:
        factors = map_params(genotype)
    counts, weights = [], []
    for l, rng in enumerate(layer_streams(seed, factors.depth)):
        _, Gbar = layer_matrices(factors, l)
        B, W = sample_layer(factors.X[l], factors.X[l + 1], factors.O, Gbar, alpha, rng)
        counts.append(B)
        weights.append(W)
    return SampledAgent(
        counts, weights, float(alpha), int(seed), provenance, genotype.dims.tonic_input
    )


def corrected_mean_invariance(factors: MappedFactors, alpha: float) -> float:
    """Max deviation between the alpha-corrected mean weights and the model's.

    Scaling counts by ``alpha`` and conductances by ``1 / alpha`` cancels
    exactly in expectation; the return value is the floating-point residue.
    """
    if not alpha > 0:
        raise ValueError(f"alpha must be positive, got {alpha}")
    root = np.sqrt(alpha)
    worst = 0.0
    for l in range(factors.depth):
        B, Gbar = layer_matrices(factors, l)
        corrected = (root * (factors.X[l] @ factors.O @ factors.X[l + 1].T) * root) * (Gbar / alpha)
        worst = max(worst, float(np.abs(corrected - B * Gbar).max()))
    return worst


def quantization_bound(n, p, g, alpha):
    """Upper bound on the per-gene-pair weight error of the best agent.

    ``|g| / (2 alpha) * (p + 1)``; the two roundings (attempt count and
    synapse count) each contribute at most half a synapse.
    """
    return np.abs(g) / (2.0 * alpha) * (np.asarray(p) + 1.0)


def quantization_error(n, p, g, alpha):
    """Error of the best agent: ``|n p g - round(round(alpha n) p) g / alpha|``."""
    best = round_half_away(round_half_away(alpha * np.asarray(n)) * p)
    return np.abs(n * p * g - best * g / alpha)


def expected_mean_degree(factors: MappedFactors, alpha: float = 1.0) -> float:
    """Mean node degree ``2 * alpha * sum(Bbar) / N`` over all layers."""
    total = sum(float(layer_matrices(factors, l)[0].sum()) for l in range(factors.depth))
    n = sum(x.shape[0] for x in factors.X)
    return 2.0 * alpha * total / n


def choose_alpha(factors: MappedFactors, target_mean_degree: float = DEFAULT_TARGET_DEGREE) -> float:
    """Correction factor that sets the expected mean degree to the target."""
    if not target_mean_degree > 0:
        raise ValueError("target mean degree must be positive")
    base = expected_mean_degree(factors, 1.0)
    if not base > 0:
        raise ValueError("model expects no synapses at all; cannot scale to a target degree")
    return target_mean_degree / base
