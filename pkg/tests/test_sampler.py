import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import stats

from synaptoforge.core import ModelDims, init_genotype, map_params, mean_weights
from synaptoforge.graddiff import layer_matrices
from synaptoforge.sampler import (
    attempt_counts, choose_alpha, corrected_mean_invariance, expected_mean_degree,
    quantization_bound, quantization_error, round_half_away, sample_agent, sample_layer,
)


def test_round_half_away():
    np.testing.assert_array_equal(round_half_away([0.5, 1.5, 2.5, -0.5, -2.5, 2.4, 0.0]),
                                  [1, 2, 3, -1, -3, 2, 0])


def test_layer_edge_cases():
    rng = np.random.default_rng(0)
    Xa, Xb = rng.random((3, 2)), rng.random((4, 2))
    Gbar = rng.standard_normal((3, 4))
    B, W = sample_layer(Xa, Xb, np.zeros((2, 2)), Gbar, 5.0, rng)
    assert np.all(B == 0) and np.all(W == 0)
    B, W = sample_layer(Xa, Xb, np.ones((2, 2)), Gbar, 5.0, rng)
    expect = round_half_away(5.0 * np.einsum("ui,vj->ijuv", Xa, Xb)).sum(axis=(0, 1))
    np.testing.assert_array_equal(B, expect)
    np.testing.assert_array_equal(W, B * (Gbar / 5.0))
    with pytest.raises(ValueError):
        sample_layer(Xa, Xb, np.ones((2, 2)), Gbar, 0.0, rng)
    with pytest.raises(OverflowError):
        attempt_counts(Xa, Xb, 1e21)


def test_agent_determinism(small_genotype):
    a = sample_agent(small_genotype, 20.0, 5)
    b = sample_agent(small_genotype, 20.0, 5)
    c = sample_agent(small_genotype, 20.0, 6)
    for x, y in zip(a.counts + a.weights, b.counts + b.weights):
        np.testing.assert_array_equal(x, y)
    assert any(not np.array_equal(x, y) for x, y in zip(a.counts, c.counts))
    f = map_params(small_genotype)
    for l, (B, W) in enumerate(zip(a.counts, a.weights)):
        assert B.dtype.kind == "i" and np.all(B >= 0)
        np.testing.assert_array_equal(W, B * (layer_matrices(f, l)[1] / 20.0))


def test_binomial_pmf_chi_square():
    rng = np.random.default_rng(2024)
    for n, p in ((3, 0.2), (12, 0.5), (20, 0.9)):
        draws = rng.binomial(np.full(1_000_000, n), p)
        observed = np.bincount(draws, minlength=n + 1)
        expected = stats.binom.pmf(np.arange(n + 1), n, p) * draws.size
        keep = expected >= 5  # pool sparse tail cells
        obs = np.append(observed[keep], observed[~keep].sum())
        exp = np.append(expected[keep], expected[~keep].sum())
        if exp[-1] == 0:
            obs, exp = obs[:-1], exp[:-1]
        exp *= obs.sum() / exp.sum()
        assert stats.chisquare(obs, exp).pvalue > 0.001


def test_sampled_weights_unbiased():
    g = init_genotype(ModelDims((4, 8, 2), 3, 2), seed=1)
    W_bar = mean_weights(g)
    f = map_params(g)
    n = 4000
    acc = [np.zeros_like(W) for W in W_bar]
    sq = [np.zeros_like(W) for W in W_bar]
    for s in range(n):
        agent = sample_agent(g, 3.0, s, f)
        for k, W in enumerate(agent.weights):
            acc[k] += W
            sq[k] += W * W
    for k, W in enumerate(W_bar):
        mean = acc[k] / n
        se = np.sqrt(np.maximum(sq[k] / n - mean**2, 0) / n)
        # rounding attempt counts shifts the mean by a bounded amount; compare with the rounded model
        B_round = sum(
            round_half_away(3.0 * np.outer(f.X[k][:, i], f.X[k + 1][:, j])) * f.O[i, j]
            for i in range(3) for j in range(3))
        target = B_round * layer_matrices(f, k)[1] / 3.0
        assert np.all(np.abs(mean - target) <= 5 * se + 1e-15)


def test_corrected_mean_invariance():
    f = map_params(init_genotype(ModelDims((5, 7, 3), 4, 2), seed=3))
    assert corrected_mean_invariance(f, 1.0) <= 1e-15
    for alpha in (0.5, 10.0, 1e4):
        assert corrected_mean_invariance(f, alpha) <= 1e-10


def test_quantization_bound_examples():
    assert quantization_bound(5, 0.0, 3.0, 2.0) == pytest.approx(3.0 / 4.0)
    assert quantization_bound(5, 1.0, 2.0, 1.0) == 2.0


@settings(max_examples=300, deadline=None)
@given(st.floats(0, 50), st.floats(0, 1), st.floats(-10, 10), st.floats(0.01, 1e4))
def test_quantization_bound_never_exceeded(n, p, g, alpha):
    assert quantization_error(n, p, g, alpha) <= quantization_bound(n, p, g, alpha) * (1 + 1e-12) + 1e-12


def test_choose_alpha_scaling():
    f = map_params(init_genotype(ModelDims((4, 16, 2), 5, 3), seed=4))
    d = expected_mean_degree(f)
    assert choose_alpha(f, d) == pytest.approx(1.0)
    assert choose_alpha(f, 10 * d) == pytest.approx(10.0)
    assert expected_mean_degree(f, choose_alpha(f, 1e4)) == pytest.approx(1e4, rel=1e-12)
    with pytest.raises(ValueError):
        choose_alpha(f, 0)


def test_sampled_degree_hits_target():
    g = init_genotype(ModelDims((5, 32, 2), 8, 3), seed=5)
    f = map_params(g)
    alpha = choose_alpha(f, 1e4)
    degrees = [sample_agent(g, alpha, s, f).mean_degree() for s in range(100)]
    assert np.mean(degrees) == pytest.approx(1e4, rel=0.05)
