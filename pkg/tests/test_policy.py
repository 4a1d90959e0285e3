import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from synaptoforge.core import mean_weights
from synaptoforge.graddiff import forward
from synaptoforge.policy import PolicyNetwork, with_tonic


def _net(last):
    return PolicyNetwork([np.eye(2), np.diag(last)])


def test_act_examples():
    assert _net([1.0, 3.0]).act(np.array([1.0, 1.0])) == 1
    assert _net([2.0, 2.0]).act(np.array([1.0, 1.0])) == 0


def test_act_matches_forward(small_genotype):
    net = PolicyNetwork.mean_agent(small_genotype)
    assert net.source == "mean-agent"
    for W, M in zip(net.weights, mean_weights(small_genotype)):
        np.testing.assert_array_equal(W, M)
    rng = np.random.default_rng(0)
    for _ in range(20):
        obs = rng.standard_normal(4)
        out, _ = forward(small_genotype, obs)
        assert net.act(obs) == int(np.argmax(out))


@settings(max_examples=50, deadline=None)
@given(st.floats(1e-3, 1e3), st.integers(0, 1000))
def test_argmax_scale_invariance(c, seed):
    rng = np.random.default_rng(seed)
    Ws = [rng.standard_normal((3, 5)), rng.standard_normal((5, 3))]
    obs = rng.standard_normal(3)
    scaled = PolicyNetwork([Ws[0], Ws[1] * c])
    assert PolicyNetwork(Ws).act(obs) == scaled.act(obs)


def test_rejects_bad_inputs():
    net = _net([1.0, 2.0])
    with pytest.raises(ValueError):
        net.act(np.array([np.inf, 0.0]))
    with pytest.raises(ValueError):
        net.act(np.ones(3))
    with pytest.raises(ValueError):
        PolicyNetwork([np.ones((2, 3)), np.ones((2, 2))])
    with pytest.raises(ValueError):
        PolicyNetwork([np.ones((2, 2))], source="mystery")


def test_tonic_input():
    np.testing.assert_array_equal(with_tonic(np.array([0.5, -1.0])), [0.5, -1.0, 1.0])
    net = PolicyNetwork([np.array([[0.0, 0.0], [0.0, 0.0], [1.0, 0.0]])], tonic_input=True)
    assert net.obs_dim == 2
    np.testing.assert_array_equal(net.q_values(np.zeros(2)), [1.0, 0.0])
