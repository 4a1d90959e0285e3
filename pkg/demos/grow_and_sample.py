"""Train a small genotype on CartPole, then grow a cohort of agents from it.

The mean agent is what training optimizes; every sampled agent draws its
own integer synapse counts, so the cohort shows how well the learned
wiring rules survive stochastic development.

    python demos/grow_and_sample.py [steps]
"""

import sys

import numpy as np

from synaptoforge import choose_alpha, init_genotype, map_params, sample_agent
from synaptoforge.dqn import TrainConfig, default_dims, train
from synaptoforge.evalstats import evaluate_cohort, summarize

steps = int(sys.argv[1]) if len(sys.argv) > 1 else 60_000
dims = default_dims("cartpole", genes=16, hidden=128)
result = train(init_genotype(dims, seed=0), "cartpole",
               TrainConfig(total_steps=steps, validation_interval=10_000))
for step, score, loss in result.curve:
    print(f"step {step:>7d}  mean-agent validation {score:6.1f}  loss {loss:.4f}")

best = result.best.genotype
factors = map_params(best)
alpha = choose_alpha(factors, 1e4)
print(f"alpha for mean degree 1e4: {alpha:.4g}")

cohort = evaluate_cohort(lambda s: sample_agent(best, alpha, s, factors).network(),
                         "cartpole", n_agents=20, episodes=5, seed=1)
row = summarize(cohort.valid, "cartpole")
print(f"20 sampled agents: mean {row.mean:.1f}, std {row.std:.1f}, solved {row.solved_pct:.0f}%")
print("per-agent scores:", np.round(cohort.valid, 1).tolist())
