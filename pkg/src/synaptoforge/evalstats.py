"""Cohort evaluation, summary metrics and pairwise rank tests."""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy import stats

from .envs import REWARD_BOUNDS, SOLVED_THRESHOLDS, make_env, run_episode

MODEL_TAGS = ("synaptogen", "snes", "bio-plausible")
EXACT_MAX = 8
TOP_K = 10


@dataclass
class CohortScores:
    model: str
    env_id: str
    scores: list  # None marks an agent that failed
    errors: dict = field(default_factory=dict)  # agent index -> message
    seed: Optional[int] = None

    def __post_init__(self):
        lo, hi = REWARD_BOUNDS[self.env_id]
        for k, s in enumerate(self.scores):
            if s is not None and not lo - 1e-9 <= s <= hi + 1e-9:
                raise ValueError(f"agent {k} score {s} outside [{lo}, {hi}] for {self.env_id}")

    @property
    def valid(self) -> np.ndarray:
        return np.array([s for s in self.scores if s is not None], dtype=np.float64)

    def to_dict(self):
        d = asdict(self)
        d["errors"] = {str(k): v for k, v in self.errors.items()}
        return d

    @classmethod
    def from_dict(cls, d):
        return cls(d["model"], d["env_id"], list(d["scores"]),
                   {int(k): v for k, v in d.get("errors", {}).items()}, d.get("seed"))


def episode_seeds(seed: int, n_agents: int, episodes: int) -> np.ndarray:
    """Per-agent seeds: column 0 builds the agent, the rest seed its episodes."""
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence([seed, 0xE7A1])))
    return rng.integers(0, 2**63, size=(n_agents, episodes + 1))


def evaluate_cohort(make_network: Callable, env_id: str, n_agents: int = 100,
                    episodes: int = 10, seed: int = 0, model: str = "synaptogen",
                    on_agent: Optional[Callable] = None) -> CohortScores:
    """Score ``n_agents`` networks by their mean reward over ``episodes`` episodes.

    ``make_network(agent_seed)`` returns a policy network. Any exception
    raised while building or running an agent is recorded and the cohort
    continues.
    """
    if n_agents < 1:
        raise ValueError("n_agents must be at least 1")
    if model not in MODEL_TAGS:
        raise ValueError(f"unknown model tag {model!r}")
    seeds = episode_seeds(seed, n_agents, episodes)
    env = make_env(env_id)
    scores, errors = [], {}
    for k in range(n_agents):
        try:
            net = make_network(int(seeds[k, 0]))
            total = sum(run_episode(net, env, int(s)) for s in seeds[k, 1:])
            scores.append(total / episodes)
        except Exception as exc:  # recorded per agent by contract
            scores.append(None)
            errors[k] = f"{type(exc).__name__}: {exc}"
        if on_agent:
            on_agent(k, scores[-1])
    return CohortScores(model, env_id, scores, errors, seed)


@dataclass
class MetricRow:
    n: int
    mean: float
    std: float
    top10_mean: Optional[float]
    top10_std: Optional[float]
    solved_pct: float


def summarize(scores, env_id: str) -> MetricRow:
    s = np.asarray(scores, dtype=np.float64)
    if s.size == 0:
        raise ValueError("no scores to summarize")
    top_mean = top_std = None
    if s.size >= TOP_K:
        top = np.sort(s)[-TOP_K:]
        top_mean, top_std = float(top.mean()), float(top.std())
    rule = SOLVED_THRESHOLDS[env_id]
    solved = sum(rule.solved(float(x)) for x in s)
    return MetricRow(int(s.size), float(s.mean()), float(s.std()), top_mean, top_std,
                     100.0 * solved / s.size)


def _doubled_ranks(a, b):
    """Midranks of the pooled sample times two, so they are integers."""
    pooled = np.concatenate([a, b])
    return np.rint(2 * stats.rankdata(pooled)).astype(np.int64)


def _u_from_ranks(r2, n1):
    # U = R1 - n1(n1+1)/2, kept doubled to stay integral
    return int(r2[:n1].sum()) - n1 * (n1 + 1)


def _exact_null(r2, n1):
    """Distribution of doubled U over all size-``n1`` subsets of the pooled ranks.

    Returns ``{2U: count}``.
    """
    # counts[k][s]: subsets of size k with doubled rank sum s
    counts = [dict() for _ in range(n1 + 1)]
    counts[0][0] = 1
    for r in r2.tolist():
        for k in range(min(n1, len(r2)) - 1, -1, -1):
            for s, c in counts[k].items():
                counts[k + 1][s + r] = counts[k + 1].get(s + r, 0) + c
    offset = n1 * (n1 + 1)
    return {s - offset: c for s, c in counts[n1].items()}


def mann_whitney_u(a, b, method: str = "auto"):
    """Mann-Whitney U of ``a`` versus ``b`` with a two-sided p-value.

    ``method`` is "exact" (permutation distribution of the midrank sum),
    "normal" (tie-corrected variance, continuity correction) or "auto",
    which is exact when the smaller sample has at most 8 values.
    """
    a = np.asarray(a, dtype=np.float64).ravel()
    b = np.asarray(b, dtype=np.float64).ravel()
    n1, n2 = a.size, b.size
    if n1 < 1 or n2 < 1:
        raise ValueError("both samples need at least one value")
    r2 = _doubled_ranks(a, b)
    u2 = _u_from_ranks(r2, n1)
    U = u2 / 2
    center2 = n1 * n2  # doubled n1*n2/2
    if method == "auto":
        method = "exact" if min(n1, n2) <= EXACT_MAX else "normal"
    if method == "exact":
        # enumerate subsets of the smaller side for speed; |U - mean| is symmetric
        if n1 <= n2:
            dist = _exact_null(r2, n1)
        else:
            dist = _exact_null(np.concatenate([r2[n1:], r2[:n1]]), n2)
        dev = abs(u2 - center2)
        total = sum(dist.values())
        hits = sum(c for s, c in dist.items() if abs(s - center2) >= dev)
        return U, min(1.0, hits / total)
    if method != "normal":
        raise ValueError(f"unknown method {method!r}")
    n = n1 + n2
    _, tie_counts = np.unique(np.concatenate([a, b]), return_counts=True)
    tie_term = float((tie_counts**3 - tie_counts).sum())
    var = n1 * n2 / 12.0 * ((n + 1) - tie_term / (n * (n - 1))) if n > 1 else 0.0
    if var <= 0:
        return U, 1.0
    z = max(0.0, abs(U - n1 * n2 / 2) - 0.5) / math.sqrt(var)
    return U, float(min(1.0, 2 * stats.norm.sf(z)))


def bonferroni(p, k: int = 3):
    if k < 1:
        raise ValueError("k must be at least 1")
    return np.minimum(1.0, k * np.asarray(p, dtype=np.float64))


@dataclass
class ComparisonReport:
    env_id: str
    rows: dict  # model -> MetricRow
    pairs: list  # (model_a, model_b, U, p_raw, p_adjusted, significant)

    def to_dict(self):
        return {
            "env_id": self.env_id,
            "rows": {k: asdict(v) for k, v in self.rows.items()},
            "pairs": [dict(zip(("a", "b", "U", "p", "p_bonferroni", "significant"), p))
                      for p in self.pairs],
        }


def compare(cohorts, level: float = 0.05) -> ComparisonReport:
    """Summary rows and Bonferroni-corrected pairwise tests for one environment."""
    if not cohorts:
        raise ValueError("nothing to compare")
    env_ids = {c.env_id for c in cohorts}
    if len(env_ids) != 1:
        raise ValueError(f"cohorts span several environments: {sorted(env_ids)}")
    env_id = env_ids.pop()
    rows = {c.model: summarize(c.valid, env_id) for c in cohorts}
    k = max(1, len(cohorts) * (len(cohorts) - 1) // 2)
    pairs = []
    for i in range(len(cohorts)):
        for j in range(i + 1, len(cohorts)):
            U, p = mann_whitney_u(cohorts[i].valid, cohorts[j].valid)
            adj = float(bonferroni(p, k))
            pairs.append((cohorts[i].model, cohorts[j].model, U, p, adj, adj < level))
    return ComparisonReport(env_id, rows, pairs)


def _fmt(x):
    return "" if x is None else f"{x:.2f}"


def write_table(path, reports):
    """CSV with one row per (environment, model) plus the adjusted p-values."""
    import csv

    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["env", "model", "n", "mean", "std", "top10_mean", "top10_std", "solved_pct"])
        for rep in reports:
            for model, r in rep.rows.items():
                w.writerow([rep.env_id, model, r.n, _fmt(r.mean), _fmt(r.std),
                            _fmt(r.top10_mean), _fmt(r.top10_std), _fmt(r.solved_pct)])
        w.writerow([])
        w.writerow(["env", "model_a", "model_b", "U", "p", "p_bonferroni", "significant"])
        for rep in reports:
            for a, b, U, p, adj, sig in rep.pairs:
                w.writerow([rep.env_id, a, b, f"{U:g}", f"{p:.6g}", f"{adj:.6g}", int(sig)])


def save_cohort(path, cohort: CohortScores):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(cohort.to_dict(), fh, indent=1)


def load_cohort(path) -> CohortScores:
    with open(path, encoding="utf-8") as fh:
        return CohortScores.from_dict(json.load(fh))


def plot_histogram(path, cohort: CohortScores, bins: int = 20):
    """Reward histogram of one cohort, written as SVG."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    matplotlib.rcParams["svg.hashsalt"] = "cohort"  # stable element ids

    fig, ax = plt.subplots(figsize=(5, 3.2))
    ax.hist(cohort.valid, bins=bins, color="#4c72b0", edgecolor="white")
    ax.set_xlabel("mean episode reward")
    ax.set_ylabel("agents")
    ax.set_title(f"{cohort.model} on {cohort.env_id}")
    fig.tight_layout()
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)
