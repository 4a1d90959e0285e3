import itertools

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import stats

from synaptoforge.core import init_genotype
from synaptoforge.dqn import default_dims
from synaptoforge.evalstats import (
    CohortScores, bonferroni, compare, evaluate_cohort, load_cohort, mann_whitney_u, plot_histogram,
    save_cohort, summarize, write_table,
)
from synaptoforge.policy import PolicyNetwork


def brute_force_p(a, b):
    """Two-sided p from enumerating every relabelling of the pooled sample."""
    pooled = np.concatenate([a, b])
    ranks = stats.rankdata(pooled)
    n1, n = len(a), len(pooled)
    center = n1 * len(b) / 2
    u_obs = ranks[:n1].sum() - n1 * (n1 + 1) / 2
    hits = total = 0
    for idx in itertools.combinations(range(n), n1):
        u = ranks[list(idx)].sum() - n1 * (n1 + 1) / 2
        total += 1
        hits += abs(u - center) >= abs(u_obs - center) - 1e-9
    return u_obs, hits / total


samples = st.lists(st.integers(0, 5), min_size=1, max_size=6)


@settings(max_examples=80, deadline=None)
@given(samples, samples)
def test_exact_matches_enumeration(a, b):
    U, p = mann_whitney_u(a, b, method="exact")
    U_ref, p_ref = brute_force_p(np.array(a, float), np.array(b, float))
    assert U == U_ref and p == pytest.approx(p_ref, abs=1e-12)


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(-10, 10), min_size=1, max_size=15),
       st.lists(st.floats(-10, 10), min_size=1, max_size=15))
def test_u_complement(a, b):
    assert mann_whitney_u(a, b)[0] + mann_whitney_u(b, a)[0] == len(a) * len(b)
    assert mann_whitney_u(a, b)[1] == pytest.approx(mann_whitney_u(b, a)[1])


def test_mwu_examples():
    assert mann_whitney_u([1, 2], [3, 4]) == (0.0, pytest.approx(1 / 3))
    assert mann_whitney_u([5, 5, 5], [5, 5]) == (3.0, 1.0)
    rng = np.random.default_rng(0)
    a, b = rng.normal(size=9), rng.normal(0.3, 1, size=9)
    pe = mann_whitney_u(a, b, "exact")[1]
    pn = mann_whitney_u(a, b, "normal")[1]
    assert abs(pe - pn) < 0.02
    ref = stats.mannwhitneyu(a, b, method="asymptotic", use_continuity=True)
    assert pn == pytest.approx(ref.pvalue, rel=1e-9)
    with pytest.raises(ValueError):
        mann_whitney_u([], [1])


def test_summarize():
    row = summarize([195.0] * 5 + [10.0] * 5, "cartpole")
    assert row.mean == pytest.approx(102.5) and row.std == pytest.approx(92.5)
    assert row.solved_pct == 50.0 and row.top10_mean == pytest.approx(102.5)
    short = summarize([1.0, 2.0], "cartpole")
    assert short.top10_mean is None and short.n == 2
    top = summarize(list(range(20)), "cartpole")
    assert top.top10_mean == pytest.approx(14.5)
    assert summarize([-200.0] * 3, "mountaincar").solved_pct == 0.0


def test_bonferroni():
    np.testing.assert_allclose(bonferroni([0.01, 0.02, 0.5]), [0.03, 0.06, 1.0])
    assert float(bonferroni(0.2, k=1)) == 0.2
    with pytest.raises(ValueError):
        bonferroni(0.1, 0)


def test_null_family_error_rate():
    rng = np.random.default_rng(0)
    rejections = 0
    for _ in range(1000):
        cohorts = [CohortScores(m, "cartpole", list(rng.uniform(10, 500, 20)))
                   for m in ("synaptogen", "snes", "bio-plausible")]
        rejections += any(p[5] for p in compare(cohorts).pairs)
    assert rejections / 1000 <= 0.05 + 0.02


def _cartpole_maker(seed):
    dims = default_dims("cartpole", genes=4, hidden=6, transmitters=2)
    return PolicyNetwork.mean_agent(init_genotype(dims, seed=seed % 1000))


def test_cohort_determinism_and_errors():
    a = evaluate_cohort(_cartpole_maker, "cartpole", n_agents=4, episodes=2, seed=3)
    b = evaluate_cohort(_cartpole_maker, "cartpole", n_agents=4, episodes=2, seed=3)
    assert a.scores == b.scores and len(a.scores) == 4

    def flaky(seed):
        if seed % 2:
            raise RuntimeError("boom")
        return _cartpole_maker(seed)

    c = evaluate_cohort(flaky, "cartpole", n_agents=6, episodes=1, seed=0)
    assert set(c.errors) == {k for k, s in enumerate(c.scores) if s is None}
    assert all("boom" in m for m in c.errors.values())
    with pytest.raises(ValueError):
        CohortScores("snes", "cartpole", [600.0])


def test_mountaincar_random_cohort_fails():
    dims = default_dims("mountaincar", genes=4, hidden=8, transmitters=2)
    make = lambda s: PolicyNetwork.mean_agent(init_genotype(dims, seed=s % 997))  # noqa: E731
    c = evaluate_cohort(make, "mountaincar", n_agents=5, episodes=2, seed=0)
    assert c.scores == [-200.0] * 5


def test_persistence_and_outputs(tmp_path):
    cohorts = [CohortScores(m, "cartpole", [float(x) for x in range(k + 1, k + 13)], seed=k)
               for k, m in enumerate(("synaptogen", "snes", "bio-plausible"))]
    save_cohort(tmp_path / "c.json", cohorts[0])
    assert load_cohort(tmp_path / "c.json") == cohorts[0]
    rep = compare(cohorts)
    assert len(rep.pairs) == 3
    write_table(tmp_path / "t.csv", [rep])
    assert "bio-plausible" in (tmp_path / "t.csv").read_text()
    plot_histogram(tmp_path / "h1.svg", cohorts[0])
    plot_histogram(tmp_path / "h2.svg", cohorts[0])
    assert (tmp_path / "h1.svg").read_bytes() == (tmp_path / "h2.svg").read_bytes()
    with pytest.raises(ValueError):
        compare([cohorts[0], CohortScores("snes", "acrobot", [-100.0])])
