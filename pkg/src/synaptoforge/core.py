"""Genetic parameterization of layered networks and closed-form expectations.

A network is described by per-neuron gene expression (X), a shared matrix of
gene-pair interaction probabilities (O), per-neuron neurotransmitter and
receptor distributions (Q, R), a fixed polarity matrix (A) and a shared
conductance matrix (K). The expected weight between two neurons is the
expected synapse count times the expected signed conductance of one synapse.

All raw (unconstrained) parameters live in one flat float64 vector owned by a
:class:`Genotype`; named matrices are read-only views into it.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.special import expit, softmax

CONSTRAINT_FREE = "free"
CONSTRAINT_COEXPRESSION = "coexpression-constrained"
CONSTRAINT_MODES = (CONSTRAINT_FREE, CONSTRAINT_COEXPRESSION)

# Order in which raw matrices are packed into the flat parameter vector.
BLOCK_NAMES = ("X_hat", "O_hat", "Q_hat", "R_hat", "K_hat")


@dataclass(frozen=True)
class ModelDims:
    """Sizes of a layered genetic network.

    ``layer_sizes`` lists neuron counts from input to output, so a network
    with ``D`` weight matrices has ``D + 1`` entries. With ``tonic_input`` the
    last input neuron is always active (constant 1) and the observation
    occupies the remaining ``layer_sizes[0] - 1`` inputs.
    """

    layer_sizes: tuple
    genes: int
    transmitters: int
    receptors: Optional[int] = None
    tonic_input: bool = False

    def __post_init__(self):
        sizes = tuple(int(n) for n in self.layer_sizes)
        object.__setattr__(self, "layer_sizes", sizes)
        if self.receptors is None:
            object.__setattr__(self, "receptors", 2 * int(self.transmitters))
        if len(sizes) < 2:
            raise ValueError("need at least two layers (one weight matrix)")
        if min(sizes) < 1:
            raise ValueError(f"layer sizes must be positive, got {sizes}")
        if self.genes < 1 or self.transmitters < 1:
            raise ValueError("genes and transmitters must be >= 1")
        if self.tonic_input and sizes[0] < 2:
            raise ValueError("a tonic input neuron needs at least one other input")
        if self.receptors != 2 * self.transmitters:
            raise ValueError(
                f"receptors must equal 2 * transmitters ({2 * self.transmitters}), "
                f"got {self.receptors}"
            )

    @property
    def depth(self) -> int:
        return len(self.layer_sizes) - 1

    @property
    def n_neurons(self) -> int:
        return sum(self.layer_sizes)

    @property
    def obs_dim(self) -> int:
        return self.layer_sizes[0] - int(self.tonic_input)

    def to_dict(self) -> dict:
        return {
            "layer_sizes": list(self.layer_sizes),
            "G": self.genes,
            "L": self.transmitters,
            "M": self.receptors,
            "tonic_input": bool(self.tonic_input),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ModelDims":
        return cls(
            tuple(d["layer_sizes"]), int(d["G"]), int(d["L"]), int(d["M"]),
            bool(d.get("tonic_input", False)),
        )


def param_layout(dims: ModelDims) -> list:
    """Return ``[(block, layer, shape, offset), ...]`` for the flat vector.

    ``layer`` is ``None`` for the shared blocks (O_hat, K_hat).
    """
    G, L, M = dims.genes, dims.transmitters, dims.receptors
    entries = []
    offset = 0

    def add(name, layer, shape):
        nonlocal offset
        entries.append((name, layer, shape, offset))
        offset += shape[0] * shape[1]

    for l, n in enumerate(dims.layer_sizes):
        add("X_hat", l, (n, G))
    add("O_hat", None, (G, G))
    for l, n in enumerate(dims.layer_sizes):
        add("Q_hat", l, (n, L))
    for l, n in enumerate(dims.layer_sizes):
        add("R_hat", l, (n, M))
    add("K_hat", None, (L, M))
    return entries


def param_count(dims: ModelDims) -> int:
    _, _, shape, offset = param_layout(dims)[-1]
    return offset + shape[0] * shape[1]


class ParamBlocks:
    """Named matrix views into a flat vector laid out by :func:`param_layout`.

    Shared by genotypes (raw parameters) and gradient sets.
    """

    def __init__(self, dims: ModelDims, flat: np.ndarray):
        self.dims = dims
        self.flat = flat
        per_layer = {"X_hat": [], "Q_hat": [], "R_hat": []}
        for name, layer, shape, off in param_layout(dims):
            view = flat[off:off + shape[0] * shape[1]].reshape(shape)
            if layer is None:
                setattr(self, name, view)
            else:
                per_layer[name].append(view)
        for name, views in per_layer.items():
            setattr(self, name, tuple(views))

    def blocks(self):
        """Yield ``(label, matrix)`` pairs, e.g. ``("X_hat[1]", view)``."""
        for name, layer, _, _ in param_layout(self.dims):
            if layer is None:
                yield name, getattr(self, name)
            else:
                yield f"{name}[{layer}]", getattr(self, name)[layer]


def build_polarity_matrix(L: int) -> np.ndarray:
    """Block-diagonal ``L x 2L`` polarity matrix with ``[1, -1]`` blocks.

    Each transmitter can bind an excitatory (+1) and an inhibitory (-1)
    receptor of its own kind and nothing else.
    """
    L = int(L)
    if L < 1:
        raise ValueError(f"need at least one transmitter, got L={L}")
    A = np.zeros((L, 2 * L), dtype=np.int64)
    idx = np.arange(L)
    A[idx, 2 * idx] = 1
    A[idx, 2 * idx + 1] = -1
    return A


class Genotype(ParamBlocks):
    """All raw learnable parameters of a network plus fixed metadata.

    The flat vector is copied and made read-only on construction; use
    :meth:`with_params` or :meth:`with_blocks` to derive updated genotypes.
    The polarity matrix ``A`` and the co-expression mask are never learned.
    """

    def __init__(
        self,
        dims: ModelDims,
        flat,
        constraint_mode: str = CONSTRAINT_FREE,
        coexpression_mask=None,
        temperature: float = 1.0,
        seed: Optional[int] = None,
    ):
        flat = np.array(flat, dtype=np.float64).ravel()
        n = param_count(dims)
        if flat.size != n:
            raise ValueError(f"expected {n} parameters, got {flat.size}")
        flat.flags.writeable = False
        if constraint_mode not in CONSTRAINT_MODES:
            raise ValueError(f"unknown constraint mode {constraint_mode!r}")
        G = dims.genes
        if constraint_mode == CONSTRAINT_COEXPRESSION:
            if coexpression_mask is None:
                raise ValueError("coexpression-constrained mode requires a mask")
            mask = np.array(coexpression_mask, dtype=np.int64)
            if mask.shape != (G, G) or not np.isin(mask, (0, 1)).all():
                raise ValueError(f"mask must be a binary {G}x{G} matrix")
            mask.flags.writeable = False
            coexpression_mask = mask
        elif coexpression_mask is not None:
            raise ValueError("a coexpression mask is only valid in constrained mode")
        if not temperature > 0:
            raise ValueError(f"temperature must be positive, got {temperature}")
        super().__init__(dims, flat)
        self.constraint_mode = constraint_mode
        self.coexpression_mask = coexpression_mask
        self.temperature = float(temperature)
        self.seed = seed
        self.A = build_polarity_matrix(dims.transmitters)
        self.A.flags.writeable = False

    def __repr__(self):
        return (
            f"Genotype(layers={list(self.dims.layer_sizes)}, G={self.dims.genes}, "
            f"L={self.dims.transmitters}, mode={self.constraint_mode!r})"
        )

    def with_params(self, flat) -> "Genotype":
        return Genotype(
            self.dims,
            flat,
            self.constraint_mode,
            self.coexpression_mask,
            self.temperature,
            self.seed,
        )

    def with_blocks(self, **blocks) -> "Genotype":
        """Copy with some raw blocks replaced.

        Per-layer blocks take a sequence of matrices, shared blocks a matrix.
        """
        flat = self.flat.copy()
        target = ParamBlocks(self.dims, flat)
        for name, value in blocks.items():
            if name not in BLOCK_NAMES:
                raise KeyError(name)
            current = getattr(target, name)
            if isinstance(current, tuple):
                for dst, src in zip(current, value):
                    dst[...] = src
            else:
                current[...] = value
        return self.with_params(flat)

    @property
    def n_params(self) -> int:
        return self.flat.size


def init_genotype(
    dims: ModelDims,
    seed: int = 0,
    constraint_mode: str = CONSTRAINT_FREE,
    coexpression_mask=None,
    temperature: float = 1.0,
) -> Genotype:
    """Draw initial raw parameters.

    O_hat and K_hat are standard normal; X_hat, Q_hat and R_hat use a
    Kaiming-style normal with fan-in equal to the gene count.
    """
    rng = np.random.default_rng(seed)
    flat = np.empty(param_count(dims))
    kaiming = np.sqrt(2.0 / dims.genes)
    for name, _, shape, off in param_layout(dims):
        size = shape[0] * shape[1]
        scale = 1.0 if name in ("O_hat", "K_hat") else kaiming
        flat[off:off + size] = rng.normal(0.0, scale, size)
    return Genotype(dims, flat, constraint_mode, coexpression_mask, temperature, seed)


@dataclass(frozen=True)
class MappedFactors:
    """Constrained genetic quantities obtained from a genotype."""

    X: tuple
    O: np.ndarray
    Q: tuple
    R: tuple
    K: np.ndarray
    A: np.ndarray

    @property
    def depth(self) -> int:
        return len(self.X) - 1

    @property
    def signed_conductance(self) -> np.ndarray:
        return self.A * self.K


def softplus(x):
    return np.logaddexp(0.0, x)


def constrained_rules(O_hat, mask, temperature: float = 1.0) -> np.ndarray:
    """Map raw rule parameters into (0.5, 1) where ``mask`` is 1, else (0, 0.5).

    The shift is three population standard deviations of ``O_hat``, computed
    over all entries.
    """
    O_hat = np.asarray(O_hat, dtype=np.float64)
    mask = np.asarray(mask)
    if not temperature > 0:
        raise ValueError(f"temperature must be positive, got {temperature}")
    if O_hat.ndim != 2 or O_hat.shape[0] != O_hat.shape[1]:
        raise ValueError(f"O_hat must be square, got shape {O_hat.shape}")
    if mask.shape != O_hat.shape:
        raise ValueError(f"mask shape {mask.shape} does not match {O_hat.shape}")
    on = mask == 1
    shift = 3.0 * O_hat.std()
    z = (O_hat + np.where(on, shift, -shift)) / temperature
    return 0.5 * expit(z) + np.where(on, 0.5, 0.0)


def _check_finite(genotype: Genotype):
    bad = np.flatnonzero(~np.isfinite(genotype.flat))
    if bad.size:
        i = int(bad[0])
        for name, layer, shape, off in param_layout(genotype.dims):
            if off <= i < off + shape[0] * shape[1]:
                r, c = divmod(i - off, shape[1])
                label = name if layer is None else f"{name}[{layer}]"
                raise ValueError(f"non-finite raw parameter at {label}[{r}, {c}]")


def map_params(genotype: Genotype) -> MappedFactors:
    """Map raw parameters to their domains.

    softplus for X and K, row softmax for Q and R, logistic sigmoid (or the
    co-expression constrained pair of sigmoids) for O.
    """
    _check_finite(genotype)
    if genotype.constraint_mode == CONSTRAINT_COEXPRESSION:
        O = constrained_rules(genotype.O_hat, genotype.coexpression_mask, genotype.temperature)
    else:
        O = expit(genotype.O_hat)
    return MappedFactors(
        X=tuple(softplus(x) for x in genotype.X_hat),
        O=O,
        Q=tuple(softmax(q, axis=1) for q in genotype.Q_hat),
        R=tuple(softmax(r, axis=1) for r in genotype.R_hat),
        K=softplus(genotype.K_hat),
        A=genotype.A,
    )


def _as_matrix(M, name):
    M = np.asarray(M, dtype=np.float64)
    if M.ndim != 2:
        raise ValueError(f"{name} must be a matrix, got shape {M.shape}")
    return M


def expected_synapse_count(x, y, O) -> float:
    """Expected number of synapses between a pre- and a post-synaptic neuron.

    Each gene pair (i, j) contributes ``Bin(x_i * y_j, O_ij)`` synapses, so the
    expectation is ``x^T O y``.
    """
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    O = _as_matrix(O, "O")
    if x.ndim != 1 or y.ndim != 1 or O.shape != (x.size, y.size):
        raise ValueError(f"shape mismatch: x {x.shape}, O {O.shape}, y {y.shape}")
    return float(x @ O @ y)


def expected_connectome(X_pre, X_post, O) -> np.ndarray:
    """Expected synapse counts between two layers, ``X_pre O X_post^T``."""
    X_pre = _as_matrix(X_pre, "X_pre")
    X_post = _as_matrix(X_post, "X_post")
    O = _as_matrix(O, "O")
    if O.shape != (X_pre.shape[1], X_post.shape[1]):
        raise ValueError(
            f"shape mismatch: X_pre {X_pre.shape}, O {O.shape}, X_post {X_post.shape}"
        )
    return (X_pre @ O) @ X_post.T


def _check_stochastic(p, name, tol=1e-9):
    if (p < -tol).any() or np.abs(p.sum(axis=-1) - 1.0).max() > tol:
        raise ValueError(f"{name} is not a probability distribution")


def expected_conductance(q, r, A, K) -> float:
    """Expected signed conductance of one randomly picked synapse.

    With transmitter ``T ~ q`` and receptor ``R ~ r`` drawn independently the
    signed conductance ``A_TR * K_TR`` has mean ``q^T (A * K) r``. The result is
    negative when inhibitory pairings dominate.
    """
    q = np.asarray(q, dtype=np.float64)
    r = np.asarray(r, dtype=np.float64)
    A = np.asarray(A)
    K = _as_matrix(K, "K")
    if q.ndim != 1 or r.ndim != 1 or A.shape != K.shape or K.shape != (q.size, r.size):
        raise ValueError(f"shape mismatch: q {q.shape}, A {A.shape}, K {K.shape}, r {r.shape}")
    _check_stochastic(q, "q")
    _check_stochastic(r, "r")
    return float(q @ (A * K) @ r)


def expected_conductance_matrix(Q, R, A, K) -> np.ndarray:
    """Expected signed conductances between two layers, ``Q (A * K) R^T``."""
    Q = _as_matrix(Q, "Q")
    R = _as_matrix(R, "R")
    A = np.asarray(A)
    K = _as_matrix(K, "K")
    if A.shape != K.shape or K.shape != (Q.shape[1], R.shape[1]):
        raise ValueError(f"shape mismatch: Q {Q.shape}, A {A.shape}, K {K.shape}, R {R.shape}")
    _check_stochastic(Q, "Q")
    _check_stochastic(R, "R")
    return (Q @ (A * K)) @ R.T


def mean_weight_matrix(factors: MappedFactors, layer: int) -> np.ndarray:
    """Expected weight matrix from ``layer`` to ``layer + 1``.

    Elementwise product of expected synapse counts and expected conductances.
    """
    if not 0 <= layer < factors.depth:
        raise IndexError(f"layer {layer} out of range for depth {factors.depth}")
    B = expected_connectome(factors.X[layer], factors.X[layer + 1], factors.O)
    Gc = expected_conductance_matrix(factors.Q[layer], factors.R[layer + 1], factors.A, factors.K)
    return B * Gc


def mean_weights(genotype: Genotype) -> list:
    """All expected weight matrices of a genotype, input to output."""
    factors = map_params(genotype)
    return [mean_weight_matrix(factors, l) for l in range(factors.depth)]

