"""Greedy policy networks built from expected or sampled weight matrices."""

from __future__ import annotations

import numpy as np

from .core import Genotype, mean_weights

SOURCE_TAGS = ("mean-agent", "sampled-agent", "dense-baseline")


def with_tonic(obs):
    """Append the constant tonic input to one observation or a batch."""
    obs = np.asarray(obs, dtype=np.float64)
    ones = np.ones(obs.shape[:-1] + (1,))
    return np.concatenate([obs, ones], axis=-1)


class PolicyNetwork:
    """Bias-free MLP with ReLU hidden layers and identity output.

    With ``tonic_input`` the network's last input neuron is held at 1 and
    observations fill the others. Immutable after construction, so one
    instance can be shared by many evaluation loops.
    """

    def __init__(self, weights, source: str = "dense-baseline", tonic_input: bool = False):
        if source not in SOURCE_TAGS:
            raise ValueError(f"unknown source tag {source!r}")
        mats = []
        for W in weights:
            W = np.array(W, dtype=np.float64)
            if W.ndim != 2:
                raise ValueError("weights must be matrices")
            if not np.isfinite(W).all():
                raise ValueError("weights must be finite")
            W.flags.writeable = False
            mats.append(W)
        if not mats:
            raise ValueError("need at least one weight matrix")
        for a, b in zip(mats, mats[1:]):
            if a.shape[1] != b.shape[0]:
                raise ValueError(f"non-conformal weights {a.shape} -> {b.shape}")
        self.weights = tuple(mats)
        self.source = source
        self.tonic_input = bool(tonic_input)
        self.layer_sizes = (mats[0].shape[0],) + tuple(W.shape[1] for W in mats)
        self.obs_dim = self.layer_sizes[0] - int(self.tonic_input)
        self.n_actions = self.layer_sizes[-1]

    @classmethod
    def mean_agent(cls, genotype: Genotype) -> "PolicyNetwork":
        return cls(mean_weights(genotype), "mean-agent", genotype.dims.tonic_input)

    def q_values(self, observation) -> np.ndarray:
        a = with_tonic(observation) if self.tonic_input else np.asarray(observation, dtype=np.float64)
        last = len(self.weights) - 1
        for l, W in enumerate(self.weights):
            a = a @ W
            if l < last:
                a = np.maximum(a, 0.0)
        return a

    def act(self, observation) -> int:
        """Greedy action; ties go to the lowest index."""
        obs = np.asarray(observation, dtype=np.float64)
        if obs.shape != (self.obs_dim,):
            raise ValueError(f"observation shape {obs.shape} != ({self.obs_dim},)")
        if not np.isfinite(obs).all():
            raise ValueError("non-finite observation")
        return int(np.argmax(self.q_values(obs)))
