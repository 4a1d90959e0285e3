import numpy as np
import pytest

from synaptoforge.bioinit import bio_agent, grow_lineage, lineal_genotype, lineal_init, split_layers
from synaptoforge.core import ModelDims, init_genotype, map_params
from synaptoforge.evalstats import evaluate_cohort


def test_single_cell_is_zygote():
    tree = grow_lineage(1, 5, np.random.default_rng(0))
    assert tree.depth == 0
    np.testing.assert_array_equal(tree.leaves[0], tree.zygote)


def test_doubling_counts():
    for n, cells in ((2, 2), (3, 4), (8, 8), (9, 16)):
        tree = grow_lineage(n, 3, np.random.default_rng(n))
        assert tree.leaves.shape == (cells, 3)
        assert tree.depth == int(np.log2(cells))


def test_leaf_variance_equals_depth():
    rng = np.random.default_rng(1)
    d = 3
    devs = np.array([(t.leaves - t.zygote) for t in (grow_lineage(8, 4, rng) for _ in range(10_000))])
    assert devs.var(axis=0).mean() == pytest.approx(d, rel=0.05)


def test_sibling_and_cousin_covariance():
    rng = np.random.default_rng(2)
    trees = [grow_lineage(4, 6, rng) for _ in range(10_000)]
    leaves = np.array([t.leaves for t in trees])  # (trees, 4, 6)
    sib = np.mean(leaves[:, 0] * leaves[:, 1])  # shared path: zygote + one division
    cousin = np.mean(leaves[:, 0] * leaves[:, 2])  # shared path: zygote only
    assert sib == pytest.approx(2.0, rel=0.1)
    assert cousin == pytest.approx(1.0, rel=0.1)
    diff = leaves[:, 0] - leaves[:, 1]
    assert diff.var() == pytest.approx(2.0, rel=0.05)


def test_roll_preserves_profiles_and_contiguity():
    rng = np.random.default_rng(0)
    tree = grow_lineage(6, 4, rng)
    rolled = lineal_init(6, 4, seed=0)
    assert sorted(map(tuple, rolled)) == sorted(map(tuple, tree.leaves[:6]))
    parts = split_layers(rolled, (2, 3, 1))
    assert [p.shape[0] for p in parts] == [2, 3, 1]
    np.testing.assert_array_equal(np.concatenate(parts), rolled)
    with pytest.raises(ValueError):
        split_layers(rolled, (2, 2))


def test_lineal_genotype_keeps_rules():
    trained = init_genotype(ModelDims((3, 5, 2), 4, 2), seed=3)
    g = lineal_genotype(trained, seed=9)
    np.testing.assert_array_equal(g.O_hat, trained.O_hat)
    np.testing.assert_array_equal(g.K_hat, trained.K_hat)
    assert not np.array_equal(g.X_hat[1], trained.X_hat[1])
    map_params(g)
    a, b = bio_agent(trained, 4), bio_agent(trained, 4)
    for x, y in zip(a.weights, b.weights):
        np.testing.assert_array_equal(x, y)


def test_random_genotype_mountaincar_cohort_fails():
    trained = init_genotype(ModelDims((2, 16, 3), 8, 3), seed=0)
    cohort = evaluate_cohort(lambda s: bio_agent(trained, s).network(), "mountaincar",
                             n_agents=5, episodes=3, seed=0, model="bio-plausible")
    assert cohort.scores == [-200.0] * 5
