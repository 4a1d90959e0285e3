"""Separable natural evolution strategy over flattened genotypes.

Offspring are drawn in mirrored pairs ``mu +/- sigma * s``. A genotype's
fitness is the mean score of ``m`` agents sampled from it, each scored over
ten episodes, so the optimizer only ever sees realized networks.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .core import Genotype, map_params
from .envs import make_env, run_episode
from .sampler import DEFAULT_TARGET_DEGREE, choose_alpha, sample_agent

log = logging.getLogger(__name__)

FITNESS_RAW = "raw"
FITNESS_UTILITY = "utility"
EPISODES_PER_AGENT = 10


def default_population(d: int) -> int:
    """Default offspring count ``4 + floor(3 ln d)``, rounded up to even."""
    lam = 4 + int(math.floor(3 * math.log(d)))
    return lam + lam % 2


def default_sigma_rate(d: int) -> float:
    return (3 + math.log(d)) / (5 * math.sqrt(d))


@dataclass
class SnesState:
    mu: np.ndarray
    sigma: np.ndarray
    popsize: int
    eta_mu: float = 1.0
    eta_sigma: Optional[float] = None
    env_steps: int = 0
    generation: int = 0

    def __post_init__(self):
        self.mu = np.asarray(self.mu, dtype=np.float64).copy()
        self.sigma = np.asarray(self.sigma, dtype=np.float64).copy()
        if self.mu.shape != self.sigma.shape or self.mu.ndim != 1:
            raise ValueError("mu and sigma must be vectors of equal length")
        if self.popsize < 2 or self.popsize % 2:
            raise ValueError(f"population size must be even and >= 2, got {self.popsize}")
        if not (self.sigma > 0).all():
            raise ValueError("sigma must be positive")
        if self.eta_sigma is None:
            self.eta_sigma = default_sigma_rate(self.mu.size)

    @classmethod
    def initial(cls, mu, popsize: Optional[int] = None, sigma0: float = 1.0, **kw) -> "SnesState":
        mu = np.asarray(mu, dtype=np.float64)
        if popsize is None:
            popsize = default_population(mu.size)
        return cls(mu, np.full(mu.size, float(sigma0)), popsize, **kw)


def utilities(fitness) -> np.ndarray:
    """Rank-based fitness shaping; weights sum to zero, best rank first."""
    lam = len(fitness)
    ranks = np.empty(lam, dtype=np.int64)
    ranks[np.argsort(-np.asarray(fitness), kind="stable")] = np.arange(1, lam + 1)
    raw = np.maximum(0.0, math.log(lam / 2 + 1) - np.log(ranks))
    return raw / raw.sum() - 1.0 / lam


@dataclass
class GenerationLog:
    generation: int
    fitness: np.ndarray
    best_fitness: float
    mean_fitness: float
    env_steps: int
    best_theta: np.ndarray = field(repr=False)
    fitness_center: float = 0.0


def snes_step(state: SnesState, fitness_fn: Callable, rng: np.random.Generator,
              shaping: str = FITNESS_RAW):
    """Run one generation and return ``(new_state, log)``.

    ``fitness_fn(theta) -> (fitness, env_steps)``. In raw mode the fitness is
    centred on the generation mean before it weights the noise vectors.
    """
    half = state.popsize // 2
    s = rng.standard_normal((half, state.mu.size))
    s = np.concatenate([s, -s])
    thetas = state.mu + state.sigma * s
    fitness = np.empty(state.popsize)
    steps = 0
    for k, theta in enumerate(thetas):
        f, n = fitness_fn(theta)
        if not math.isfinite(f):
            raise FloatingPointError(f"non-finite fitness for offspring {k} in generation {state.generation}")
        fitness[k] = f
        steps += n
    if shaping == FITNESS_UTILITY:
        weights = utilities(fitness)
        center = 0.0
    elif shaping == FITNESS_RAW:
        center = float(fitness.mean())
        weights = fitness - center
    else:
        raise ValueError(f"unknown fitness shaping {shaping!r}")
    grad_mu = weights @ s
    grad_sigma = weights @ (s * s - 1.0)
    with np.errstate(over="ignore", under="ignore"):
        mu = state.mu + state.eta_mu * state.sigma * grad_mu
        sigma = state.sigma * np.exp(0.5 * state.eta_sigma * grad_sigma)
    if not (np.isfinite(mu).all() and np.isfinite(sigma).all() and (sigma > 0).all()):
        raise FloatingPointError(
            f"search distribution diverged in generation {state.generation}; "
            "rescale the fitness or use utility shaping")
    new = SnesState(
        mu,
        sigma,
        state.popsize,
        state.eta_mu,
        state.eta_sigma,
        state.env_steps + steps,
        state.generation + 1,
    )
    best = int(np.argmax(fitness))
    entry = GenerationLog(state.generation, fitness, float(fitness[best]), float(fitness.mean()),
                          new.env_steps, thetas[best].copy(), center)
    return new, entry


@dataclass
class FitnessResult:
    fitness: float
    env_steps: int
    episode_rewards: np.ndarray  # (m, episodes)


def snes_fitness(theta, template: Genotype, env_id: str, m: int,
                 rng: np.random.Generator, alpha: Optional[float] = None,
                 target_degree: float = DEFAULT_TARGET_DEGREE,
                 episodes: int = EPISODES_PER_AGENT) -> FitnessResult:
    """Mean score of ``m`` agents sampled from the genotype encoded by ``theta``.

    Without an explicit ``alpha`` each genotype gets the one that sets its
    expected mean degree to ``target_degree``.
    """
    if m < 1:
        raise ValueError("need at least one agent per fitness evaluation")
    genotype = template.with_params(theta)
    factors = map_params(genotype)
    a = choose_alpha(factors, target_degree) if alpha is None else alpha
    env = make_env(env_id)
    rewards = np.empty((m, episodes))
    steps = 0
    seeds = rng.integers(0, 2**63, size=(m, episodes + 1))
    for i in range(m):
        net = sample_agent(genotype, a, int(seeds[i, 0]), factors).network()
        for e in range(episodes):
            r, n = run_episode(net, env, int(seeds[i, e + 1]), return_length=True)
            rewards[i, e] = r
            steps += n
    return FitnessResult(float(rewards.mean(axis=1).mean()), steps, rewards)


@dataclass
class SnesResult:
    best_genotype: Genotype
    best_fitness: float
    state: SnesState
    history: list


def snes_train(template: Genotype, env_id: str, popsize: Optional[int] = None, m: int = 10,
               budget: int = 500_000, seed: int = 0, sigma0: float = 1.0,
               shaping: str = FITNESS_RAW, alpha: Optional[float] = None,
               target_degree: float = DEFAULT_TARGET_DEGREE,
               on_generation: Optional[Callable] = None) -> SnesResult:
    """Evolve ``template``'s parameters until ``budget`` environment steps are used.

    The generation that crosses the budget is completed. Returns the best
    offspring ever evaluated; if no generation runs, the initial mean.
    """
    if budget <= 0:
        raise ValueError("budget must be positive")
    ss = np.random.SeedSequence([seed, 0x5E5])
    noise_rng, fit_rng = (np.random.Generator(np.random.PCG64(s)) for s in ss.spawn(2))
    state = SnesState.initial(template.flat, popsize, sigma0)
    best_theta, best_fitness = template.flat.copy(), -math.inf
    history = []

    def fitness_fn(theta):
        res = snes_fitness(theta, template, env_id, m, fit_rng, alpha, target_degree)
        return res.fitness, res.env_steps

    while state.env_steps < budget:
        state, entry = snes_step(state, fitness_fn, noise_rng, shaping)
        history.append(entry)
        if entry.best_fitness > best_fitness:
            best_fitness, best_theta = entry.best_fitness, entry.best_theta
        log.info("generation %d best %.2f mean %.2f steps %d", entry.generation,
                 entry.best_fitness, entry.mean_fitness, entry.env_steps)
        if on_generation:
            on_generation(entry)
    return SnesResult(template.with_params(best_theta), best_fitness, state, history)
