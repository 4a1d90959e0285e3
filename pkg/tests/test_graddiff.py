import numpy as np
import pytest

from synaptoforge.core import (
    CONSTRAINT_COEXPRESSION, MappedFactors, ModelDims, init_genotype, map_params, mean_weights,
)
from synaptoforge.graddiff import (
    backward, finite_diff_check, forward, layer_matrices, loss_and_grad, squared_error,
)

from conftest import random_genotype


def test_forward_matches_dense_chain(small_genotype):
    rng = np.random.default_rng(0)
    x = rng.standard_normal(4)
    out, _ = forward(small_genotype, x)
    W0, W1 = mean_weights(small_genotype)
    np.testing.assert_allclose(out, np.maximum(x @ W0, 0) @ W1, atol=1e-12)
    batch = rng.standard_normal((5, 4))
    outs, _ = forward(small_genotype, batch)
    np.testing.assert_allclose(outs, np.maximum(batch @ W0, 0) @ W1, atol=1e-12)


def test_forward_zero_conductance_and_zero_input(small_genotype):
    f = map_params(small_genotype)
    off = MappedFactors(f.X, f.O, f.Q, f.R, np.zeros_like(f.K), f.A)
    out, _ = forward(small_genotype, np.ones(4), factors=off)
    assert np.all(out == 0)
    out, trace = forward(small_genotype, np.zeros(4))
    assert np.all(trace.activations[1] == 0) and np.all(out == 0)


def test_forward_identity_single_layer():
    # one-hot expression, O = I, a single excitatory receptor: W = identity
    dims = ModelDims((3, 3), 3, 1)
    g = init_genotype(dims, 0)
    f = MappedFactors(
        X=(np.eye(3), np.eye(3)), O=np.eye(3),
        Q=(np.ones((3, 1)), np.ones((3, 1))), R=(np.tile([1.0, 0.0], (3, 1)),) * 2,
        K=np.array([[1.0, 1.0]]), A=g.A,
    )
    B, Gc = layer_matrices(f, 0)
    np.testing.assert_array_equal(B * Gc, np.eye(3))
    v = np.array([0.3, -1.0, 2.0])
    out, _ = forward(g, v, factors=f)
    np.testing.assert_array_equal(out, v)


def test_forward_rejects_bad_input(small_genotype):
    with pytest.raises(ValueError):
        forward(small_genotype, np.ones(3))
    with pytest.raises(ValueError):
        forward(small_genotype, np.array([1.0, np.nan, 0, 0]))


def test_zero_loss_gradient(small_genotype):
    out, trace = forward(small_genotype, np.ones(4))
    grads = backward(trace, np.zeros_like(out))
    assert np.all(grads.flat == 0)


def test_backward_rejects_mismatched_trace(small_genotype):
    out, trace = forward(small_genotype, np.ones(4))
    other = init_genotype(small_genotype.dims, 99)
    with pytest.raises(ValueError):
        backward(trace, np.ones_like(out), other)
    with pytest.raises(ValueError):
        backward(trace, np.ones(3))


def test_rule_gradient_hand_case():
    # 1x1 layer, G = 2: dW/dO_ij = x_i y_j * Gbar
    dims = ModelDims((1, 1), 2, 1)
    g = init_genotype(dims, 3)
    f = map_params(g)
    _, trace = forward(g, np.ones(1))
    grads = backward(trace, np.ones(1))
    B, Gc = layer_matrices(f, 0)
    dW_dO = np.outer(f.X[0][0], f.X[1][0]) * Gc[0, 0]
    # chain through the logistic map of the free mode
    expect = dW_dO * f.O * (1 - f.O)
    np.testing.assert_allclose(grads.O_hat, expect, rtol=1e-12)


@pytest.mark.parametrize("constrained", [False, True])
def test_gradients_match_finite_differences(constrained):
    rng = np.random.default_rng(11 if constrained else 12)
    for _ in range(5):
        g = random_genotype(rng, constrained)
        x = rng.standard_normal((3, g.dims.layer_sizes[0]))
        t = rng.standard_normal((3, g.dims.layer_sizes[-1]))
        report = finite_diff_check(g, x, squared_error(t))
        assert max(report.values()) < 1e-4, report


def test_gradient_check_on_env_shapes():
    rng = np.random.default_rng(5)
    for n_in, n_out in ((5, 2), (3, 3), (7, 3)):
        g = init_genotype(ModelDims((n_in, 6, n_out), 4, 2), int(rng.integers(100)))
        x = rng.standard_normal((2, n_in))
        report = finite_diff_check(g, x, squared_error(rng.standard_normal((2, n_out))))
        assert max(report.values()) < 1e-4


def test_unused_blocks_are_exactly_zero(small_genotype):
    x = np.ones((2, 4))
    report = finite_diff_check(small_genotype, x, squared_error(np.zeros((2, 2))))
    # output neurons never send and input neurons never receive
    assert report["Q_hat[2]"] == 0.0 and report["R_hat[0]"] == 0.0
    _, grads = loss_and_grad(small_genotype, x, squared_error(np.zeros((2, 2))))
    assert np.all(grads.Q_hat[2] == 0) and np.all(grads.R_hat[0] == 0)


def test_fault_injection_is_flagged(small_genotype):
    rng = np.random.default_rng(2)
    x = rng.standard_normal((2, 4))
    loss = squared_error(rng.standard_normal((2, 2)))
    _, grads = loss_and_grad(small_genotype, x, loss)
    bad = grads.flat.copy()
    k = int(np.argmax(np.abs(bad)))
    bad[k] *= 1.1
    from synaptoforge.graddiff import GradientSet

    report = finite_diff_check(small_genotype, x, loss, analytic=GradientSet(small_genotype.dims, bad))
    flagged = [name for name, err in report.items() if err > 1e-2]
    assert len(flagged) == 1


def test_backward_leaves_mask_and_polarity_untouched():
    dims = ModelDims((3, 4, 2), 3, 2)
    mask = np.array([[1, 0, 1], [0, 1, 0], [1, 1, 0]])
    g = init_genotype(dims, 1, CONSTRAINT_COEXPRESSION, mask)
    A0, m0 = g.A.copy(), g.coexpression_mask.copy()
    out, trace = forward(g, np.ones(3))
    backward(trace, np.ones(2))
    np.testing.assert_array_equal(g.A, A0)
    np.testing.assert_array_equal(g.coexpression_mask, m0)


def test_check_is_invariant_to_loss_scale(small_genotype):
    rng = np.random.default_rng(8)
    x = rng.standard_normal((2, 4))
    t = rng.standard_normal((2, 2))
    base = squared_error(t)

    def scaled(out):
        v, d = base(out)
        return 1e4 * v, 1e4 * d

    a = finite_diff_check(small_genotype, x, base)
    b = finite_diff_check(small_genotype, x, scaled)
    assert max(a.values()) < 1e-4 and max(b.values()) < 1e-4
