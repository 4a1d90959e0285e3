"""Forward pass and reverse-mode gradients of the genetic MLP.

The network has no biases: ``a_{l+1} = relu(a_l @ W_l)`` for hidden layers and
an identity output layer, with every ``W_l`` the expected weight matrix of the
genotype. :func:`backward` propagates a loss gradient back through the
Hadamard split of each weight matrix and through every parameter map down to
the raw genotype parameters.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np
from scipy.special import expit

from .core import (
    CONSTRAINT_COEXPRESSION,
    Genotype,
    MappedFactors,
    ParamBlocks,
    map_params,
)


@dataclass
class ForwardTrace:
    """Intermediates cached by :func:`forward` for :func:`backward`."""

    genotype: Genotype
    factors: MappedFactors
    synapses: list  # expected synapse counts per layer
    conductances: list  # expected conductances per layer
    weights: list
    pre_activations: list  # z_1 .. z_D
    activations: list  # a_0 .. a_{D-1} (inputs to each weight matrix)
    batched: bool


class GradientSet(ParamBlocks):
    """Gradients w.r.t. every raw parameter block, laid out like a genotype."""

    def __init__(self, dims, flat=None):
        if flat is None:
            from .core import param_count

            flat = np.zeros(param_count(dims))
        super().__init__(dims, flat)


def layer_matrices(factors: MappedFactors, layer: int):
    """Return ``(B, Gc)`` for one layer: expected counts and conductances."""
    B = (factors.X[layer] @ factors.O) @ factors.X[layer + 1].T
    Gc = (factors.Q[layer] @ factors.signed_conductance) @ factors.R[layer + 1].T
    return B, Gc


def forward(genotype: Genotype, inputs, factors: Optional[MappedFactors] = None):
    """Run the expected-weight network on one input vector or a batch.

    Returns ``(output, trace)``. ``inputs`` may be shape ``(N_0,)`` or
    ``(batch, N_0)``; the output has the matching rank.
    """
    x = np.asarray(inputs, dtype=np.float64)
    batched = x.ndim == 2
    if not batched:
        x = x[None, :]
    if x.ndim != 2 or x.shape[1] != genotype.dims.layer_sizes[0]:
        raise ValueError(
            f"input shape {np.shape(inputs)} does not match {genotype.dims.layer_sizes[0]} inputs"
        )
    if not np.isfinite(x).all():
        raise ValueError("non-finite input")
    if factors is None:
        factors = map_params(genotype)
    D = genotype.dims.depth
    synapses, conductances, weights, zs, acts = [], [], [], [], []
    a = x
    for l in range(D):
        B, Gc = layer_matrices(factors, l)
        W = B * Gc
        z = a @ W
        synapses.append(B)
        conductances.append(Gc)
        weights.append(W)
        acts.append(a)
        zs.append(z)
        a = np.maximum(z, 0.0) if l < D - 1 else z
    trace = ForwardTrace(genotype, factors, synapses, conductances, weights, zs, acts, batched)
    return (a if batched else a[0]), trace


def _softmax_backward(p, dp):
    return p * (dp - (dp * p).sum(axis=1, keepdims=True))


def _rules_backward(genotype: Genotype, O, dO):
    """Gradient of the rules map w.r.t. O_hat (free or constrained)."""
    if genotype.constraint_mode != CONSTRAINT_COEXPRESSION:
        return dO * O * (1.0 - O)
    O_hat = genotype.O_hat
    T = genotype.temperature
    on = genotype.coexpression_mask == 1
    sign = np.where(on, 1.0, -1.0)
    sigma = O_hat.std()
    s = expit((O_hat + 3.0 * sigma * sign) / T)
    dz = dO * 0.5 * s * (1.0 - s)
    grad = dz / T
    if sigma > 0:
        # shift depends on O_hat through the population std
        dsigma = 3.0 * (dz * sign).sum() / T
        grad = grad + dsigma * (O_hat - O_hat.mean()) / (O_hat.size * sigma)
    return grad


def backward(trace: ForwardTrace, loss_grad, genotype: Optional[Genotype] = None) -> GradientSet:
    """Exact gradients of a scalar loss w.r.t. all raw genotype parameters.

    ``loss_grad`` is dLoss/dOutput with the shape of the forward output. Pass
    ``genotype`` to assert the trace was produced from it.
    """
    if genotype is not None and genotype is not trace.genotype:
        raise ValueError("trace was produced by a different genotype")
    g = np.asarray(loss_grad, dtype=np.float64)
    out_shape = trace.pre_activations[-1].shape
    if not trace.batched:
        g = g[None, :] if g.ndim == 1 else g
    if g.shape != out_shape:
        raise ValueError(f"loss gradient shape {np.shape(loss_grad)} does not match output")

    geno = trace.genotype
    f = trace.factors
    D = geno.dims.depth
    P = f.signed_conductance
    dX = [np.zeros_like(x) for x in f.X]
    dQ = [np.zeros_like(q) for q in f.Q]
    dR = [np.zeros_like(r) for r in f.R]
    dO = np.zeros_like(f.O)
    dP = np.zeros_like(P)

    dz = g
    for l in range(D - 1, -1, -1):
        dW = trace.activations[l].T @ dz
        if l > 0:
            da = dz @ trace.weights[l].T
            dz = da * (trace.pre_activations[l - 1] > 0)
        dB = dW * trace.conductances[l]
        dG = dW * trace.synapses[l]
        Xa, Xb = f.X[l], f.X[l + 1]
        XaO = Xa @ f.O
        dX[l] += dB @ (Xb @ f.O.T)
        dX[l + 1] += dB.T @ XaO
        dO += Xa.T @ dB @ Xb
        Qa, Rb = f.Q[l], f.R[l + 1]
        QaP = Qa @ P
        dQ[l] += dG @ (Rb @ P.T)
        dR[l + 1] += dG.T @ QaP
        dP += Qa.T @ dG @ Rb

    grads = GradientSet(geno.dims)
    for l in range(D + 1):
        grads.X_hat[l][...] = dX[l] * expit(geno.X_hat[l])
        grads.Q_hat[l][...] = _softmax_backward(f.Q[l], dQ[l])
        grads.R_hat[l][...] = _softmax_backward(f.R[l], dR[l])
    grads.O_hat[...] = _rules_backward(geno, f.O, dO)
    grads.K_hat[...] = dP * f.A * expit(geno.K_hat)
    return grads


def squared_error(target) -> Callable:
    """Loss ``0.5 * sum((output - target)^2)`` returning value and gradient."""
    target = np.asarray(target, dtype=np.float64)

    def loss(output):
        diff = output - target
        return 0.5 * float((diff * diff).sum()), diff

    return loss


def loss_and_grad(genotype: Genotype, inputs, loss: Callable):
    out, trace = forward(genotype, inputs)
    value, dout = loss(out)
    return value, backward(trace, dout)


def finite_diff_check(
    genotype: Genotype,
    inputs,
    loss: Callable,
    step: float = 1e-4,
    analytic: Optional[GradientSet] = None,
    atol: Optional[float] = None,
) -> dict:
    """Compare analytic gradients with five-point central differences.

    ``loss(output) -> (value, dvalue/doutput)``. Returns the worst relative
    discrepancy per parameter block, where each entry's error is
    ``|a - n| / max(|a|, |n|, atol)``. By default ``atol`` is
    ``1e-7 * max(1, |loss|)``: derivatives far below the loss scale sit
    under the stencil's roundoff floor, and tying the floor to the loss keeps
    the measure invariant to rescaling the loss. ``analytic`` overrides the
    computed gradients, which lets callers check a perturbed gradient.
    """
    value, computed = loss_and_grad(genotype, inputs, loss)
    if analytic is None:
        analytic = computed
    if atol is None:
        atol = 1e-7 * max(1.0, abs(float(value)))
    base = genotype.flat
    numeric = np.empty_like(base)
    work = base.copy()

    def at(k, offset):
        work[k] = base[k] + offset
        value = loss(forward(genotype.with_params(work), inputs)[0])[0]
        work[k] = base[k]
        return value

    for k in range(base.size):
        # fourth-order stencil: truncation error O(step**4)
        numeric[k] = (8.0 * (at(k, step) - at(k, -step)) - (at(k, 2 * step) - at(k, -2 * step))) / (12.0 * step)
    num_blocks = ParamBlocks(genotype.dims, numeric)
    report = {}
    for (label, a), (_, n) in zip(analytic.blocks(), num_blocks.blocks()):
        denom = np.maximum(np.maximum(np.abs(a), np.abs(n)), atol)
        report[label] = float((np.abs(a - n) / denom).max()) if a.size else 0.0
    return report


def format_report(report: dict) -> str:
    width = max(len(k) for k in report)
    lines = [f"{'block':<{width}}  max_rel_error"]
    lines += [f"{k:<{width}}  {v:.3e}" for k, v in report.items()]
    return "\n".join(lines)
