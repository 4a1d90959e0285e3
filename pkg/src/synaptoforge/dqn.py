"""DQN training of genotypes through the expected-weight network.

The online network is the mean agent of the genotype being trained; a frozen
copy of its weight matrices serves as the target network. Gradients of the
Huber TD loss flow through :func:`graddiff.backward` into the raw genotype
parameters, which Adam updates.
"""

from __future__ import annotations

import dataclasses
import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .core import Genotype, ModelDims, init_genotype, mean_weights
from .envs import env_spec, make_env, run_episode
from .graddiff import backward, forward
from .policy import PolicyNetwork, with_tonic

log = logging.getLogger(__name__)

LEARNING_RATE_GRID = (0.03, 0.003, 0.0003)
SEED_GRID = (0, 1, 2)


@dataclass
class TrainConfig:
    total_steps: int = 500_000
    validation_interval: int = 10_000
    validation_episodes: int = 10
    learning_rate: float = 0.003
    seed: int = 0
    gamma: float = 0.99
    buffer_capacity: int = 100_000
    batch_size: int = 64
    target_update_interval: int = 600  # gradient steps
    train_frequency: int = 4  # env steps between training rounds
    gradient_steps: int = 1  # gradient steps per training round
    learning_starts: int = 1000
    exploration_fraction: float = 0.1
    exploration_initial: float = 1.0
    exploration_final: float = 0.05
    max_grad_norm: Optional[float] = 10.0

    def __post_init__(self):
        counts = ("validation_interval", "validation_episodes", "buffer_capacity",
                  "batch_size", "target_update_interval", "train_frequency", "gradient_steps")
        for name in counts:
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be positive")
        if self.total_steps < 0 or self.learning_starts < 0:
            raise ValueError("step counts must be non-negative")
        if self.learning_rate < 0:
            raise ValueError("learning rate must be non-negative")

    def epsilon(self, step: int) -> float:
        horizon = self.exploration_fraction * self.total_steps
        if horizon <= 0 or step >= horizon:
            return self.exploration_final
        frac = step / horizon
        return self.exploration_initial + frac * (self.exploration_final - self.exploration_initial)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


class ReplayBuffer:
    """Fixed-capacity ring buffer of transitions; oldest entries are evicted."""

    def __init__(self, capacity: int, obs_dim: int):
        self.capacity = int(capacity)
        self.obs = np.zeros((capacity, obs_dim))
        self.next_obs = np.zeros((capacity, obs_dim))
        self.actions = np.zeros(capacity, dtype=np.int64)
        self.rewards = np.zeros(capacity)
        self.terminated = np.zeros(capacity)
        self.inserted = 0

    def __len__(self):
        return min(self.inserted, self.capacity)

    def add(self, obs, action, reward, next_obs, terminated):
        i = self.inserted % self.capacity
        self.obs[i] = obs
        self.actions[i] = action
        self.rewards[i] = reward
        self.next_obs[i] = next_obs
        self.terminated[i] = float(terminated)
        self.inserted += 1

    def sample(self, batch_size: int, rng: np.random.Generator):
        """Uniform batch without replacement."""
        if batch_size > len(self):
            raise ValueError(f"cannot sample {batch_size} from {len(self)} stored transitions")
        idx = rng.choice(len(self), size=batch_size, replace=False)
        return self.obs[idx], self.actions[idx], self.rewards[idx], self.next_obs[idx], self.terminated[idx]


@dataclass
class AdamState:
    m: np.ndarray
    v: np.ndarray
    t: int = 0

    @classmethod
    def zeros(cls, n: int) -> "AdamState":
        return cls(np.zeros(n), np.zeros(n), 0)


def adam_update(params, grads, state: AdamState, lr: float,
                beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
    """One bias-corrected Adam step. Returns ``(new_params, new_state)``."""
    grads = np.asarray(grads, dtype=np.float64)
    if grads.shape != np.shape(params):
        raise ValueError("gradient shape does not match parameters")
    if not np.isfinite(grads).all():
        raise FloatingPointError("non-finite gradient in Adam update")
    t = state.t + 1
    m = beta1 * state.m + (1.0 - beta1) * grads
    v = beta2 * state.v + (1.0 - beta2) * grads * grads
    m_hat = m / (1.0 - beta1**t)
    v_hat = v / (1.0 - beta2**t)
    new = np.asarray(params) - lr * m_hat / (np.sqrt(v_hat) + eps)
    return new, AdamState(m, v, t)


@dataclass
class Checkpoint:
    genotype: Genotype
    config: TrainConfig
    score: float
    step: int
    env_id: str = ""


@dataclass
class TrainResult:
    best: Checkpoint
    curve: list = field(default_factory=list)  # (step, validation_mean, loss)
    final: Optional[Genotype] = None


def validation_seeds(seed: int, n: int) -> list:
    ss = np.random.SeedSequence([seed, 0x5A11])
    return [int(s) for s in ss.generate_state(n, dtype=np.uint32)]


def validate(genotype: Genotype, env_id: str, seeds: Sequence[int]) -> float:
    """Mean reward of the mean agent over one episode per seed."""
    net = PolicyNetwork.mean_agent(genotype)
    env = make_env(env_id)
    return float(np.mean([run_episode(net, env, s) for s in seeds]))


def _huber_grad(td):
    return np.clip(td, -1.0, 1.0)


def _huber(td):
    a = np.abs(td)
    return np.where(a < 1.0, 0.5 * td * td, a - 0.5)


def _q(weights, obs):
    a = obs
    last = len(weights) - 1
    for l, W in enumerate(weights):
        a = a @ W
        if l < last:
            a = np.maximum(a, 0.0)
    return a


def check_conformal(genotype: Genotype, env_id: str):
    obs_dim, n_actions = env_spec(env_id)
    sizes = genotype.dims.layer_sizes
    if genotype.dims.obs_dim != obs_dim or sizes[-1] != n_actions:
        raise ValueError(
            f"genotype layers {sizes} do not fit {env_id} ({obs_dim} inputs, {n_actions} actions)"
        )


def _gradient_step(genotype, target, buffer, adam, cfg, rng, step):
    o, a, r, o2, term = buffer.sample(cfg.batch_size, rng)
    next_q = _q(target, o2).max(axis=1)
    y = r + cfg.gamma * (1.0 - term) * next_q
    q, trace = forward(genotype, o)
    rows = np.arange(cfg.batch_size)
    td = q[rows, a] - y
    loss = float(_huber(td).mean())
    if not math.isfinite(loss):
        raise FloatingPointError(
            f"non-finite TD loss at step {step} (lr={cfg.learning_rate}, seed={cfg.seed})"
        )
    dq = np.zeros_like(q)
    dq[rows, a] = _huber_grad(td) / cfg.batch_size
    grad = backward(trace, dq).flat
    if cfg.max_grad_norm is not None:
        norm = float(np.linalg.norm(grad))
        if norm > cfg.max_grad_norm:
            grad = grad * (cfg.max_grad_norm / norm)
    new_flat, adam = adam_update(genotype.flat, grad, adam, cfg.learning_rate)
    return genotype.with_params(new_flat), adam, loss


def train(genotype: Genotype, env_id: str, config: TrainConfig,
          on_validation: Optional[Callable] = None) -> TrainResult:
    """Train ``genotype`` with DQN; keep the best-validated checkpoint.

    Validation runs before the first step and every ``validation_interval``
    environment steps, scoring the mean agent on a fixed seed set.
    """
    check_conformal(genotype, env_id)
    cfg = config
    streams = np.random.SeedSequence([cfg.seed, 0xD09]).spawn(3)
    env_rng, explore_rng, batch_rng = (np.random.Generator(np.random.PCG64(s)) for s in streams)
    env = make_env(env_id, seed=int(env_rng.integers(2**63)))
    n_actions = env.n_actions
    tonic = genotype.dims.tonic_input
    prep = with_tonic if tonic else np.asarray
    buffer = ReplayBuffer(cfg.buffer_capacity, genotype.dims.layer_sizes[0])
    val_seeds = validation_seeds(cfg.seed, cfg.validation_episodes)

    adam = AdamState.zeros(genotype.n_params)
    online = mean_weights(genotype)
    target = online
    grad_steps = 0
    losses = []

    score = validate(genotype, env_id, val_seeds)
    best = Checkpoint(genotype, cfg, score, 0, env_id)
    curve = [(0, score, float("nan"))]
    if on_validation:
        on_validation(0, score)

    obs = prep(env.reset())
    for step in range(1, cfg.total_steps + 1):
        if explore_rng.random() < cfg.epsilon(step - 1):
            action = int(explore_rng.integers(n_actions))
        else:
            action = int(np.argmax(_q(online, obs)))
        res = env.step(action)
        next_obs = prep(res.observation)
        buffer.add(obs, action, res.reward, next_obs, res.terminated)
        obs = prep(env.reset()) if res.done else next_obs

        if step >= cfg.learning_starts and step % cfg.train_frequency == 0 and len(buffer) >= cfg.batch_size:
            for _ in range(cfg.gradient_steps):
                genotype, adam, loss = _gradient_step(genotype, target, buffer, adam, cfg, batch_rng, step)
                losses.append(loss)
                grad_steps += 1
                if grad_steps % cfg.target_update_interval == 0:
                    target = mean_weights(genotype)
            online = mean_weights(genotype)

        if step % cfg.validation_interval == 0:
            score = validate(genotype, env_id, val_seeds)
            mean_loss = float(np.mean(losses)) if losses else float("nan")
            losses = []
            curve.append((step, score, mean_loss))
            if score > best.score:
                best = Checkpoint(genotype, cfg, score, step, env_id)
            if on_validation:
                on_validation(step, score)
            log.info("step %d validation %.2f loss %.4f", step, score, mean_loss)

    return TrainResult(best, curve, genotype)


def default_dims(env_id: str, genes: int = 16, hidden: int = 128, transmitters: int = 3,
                 tonic_input: bool = True) -> ModelDims:
    obs_dim, n_actions = env_spec(env_id)
    n_in = obs_dim + int(tonic_input)
    return ModelDims((n_in, hidden, n_actions), genes, transmitters, tonic_input=tonic_input)


@dataclass
class GridCell:
    learning_rate: float
    seed: int
    score: float
    step: int
    error: Optional[str] = None


def grid_search(
    env_id: str,
    dims: ModelDims,
    base: TrainConfig,
    learning_rates: Sequence[float] = LEARNING_RATE_GRID,
    seeds: Sequence[int] = SEED_GRID,
    make_genotype: Optional[Callable[[int], Genotype]] = None,
):
    """Train one cell per (learning rate, seed); return the best checkpoint and the log.

    A failing cell is logged with its error and the search continues.
    """
    if not learning_rates or not seeds:
        raise ValueError("grid must not be empty")
    if make_genotype is None:
        make_genotype = lambda s: init_genotype(dims, seed=s)  # noqa: E731
    best = None
    rows = []
    for lr in learning_rates:
        for seed in seeds:
            cfg = dataclasses.replace(base, learning_rate=lr, seed=seed)
            try:
                result = train(make_genotype(seed), env_id, cfg)
            except Exception as exc:  # keep the remaining cells running
                log.warning("grid cell lr=%g seed=%d failed: %s", lr, seed, exc)
                rows.append(GridCell(lr, seed, float("nan"), -1, repr(exc)))
                continue
            ck = result.best
            rows.append(GridCell(lr, seed, ck.score, ck.step))
            if best is None or ck.score > best.score:
                best = ck
    if best is None:
        raise RuntimeError("every grid cell failed")
    return best, rows
