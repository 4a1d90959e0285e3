"""Global network differential gene expression (nDGE).

For each ordered gene pair (i, j), compare the co-expression
``log(1 + C[i, u] * C[j, v])`` over connected neuron pairs (u, v) against
pairs that touch but form no synapse. Gene pairs whose Bonferroni-corrected
p-value (factor G^2) falls below 0.05 are marked co-expressed; the resulting
binary mask feeds :func:`core.constrained_rules`.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np
from scipy import stats


def welch_ttest(a, b, alternative: str = "two-sided"):
    """Welch's unequal-variance t-test. Returns ``(t, p)``.

    When both samples have zero variance the statistic is undefined; by
    convention p = 1 for equal means (t = 0) and p = 0 otherwise (t = +/-inf).
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.size < 2 or b.size < 2:
        raise ValueError("each sample needs at least two values")
    va = a.var(ddof=1) / a.size
    vb = b.var(ddof=1) / b.size
    diff = a.mean() - b.mean()
    if va + vb == 0.0:
        if diff == 0.0:
            return 0.0, 1.0
        t = math.copysign(math.inf, diff)
        p = 0.0 if alternative == "two-sided" or (alternative == "greater") == (diff > 0) else 1.0
        return t, p
    se = math.sqrt(va + vb)
    t = diff / se
    df = (va + vb) ** 2 / (va**2 / (a.size - 1) + vb**2 / (b.size - 1))
    if alternative == "two-sided":
        p = 2.0 * stats.t.sf(abs(t), df)
    elif alternative == "greater":
        p = stats.t.sf(t, df)
    elif alternative == "less":
        p = stats.t.cdf(t, df)
    else:
        raise ValueError(f"unknown alternative {alternative!r}")
    return float(t), float(min(1.0, p))


@dataclass
class CoexpressionInput:
    expression: np.ndarray  # genes x neurons
    connectome: np.ndarray  # neurons x neurons, binary
    contactome: np.ndarray  # neurons x neurons, binary

    def __post_init__(self):
        self.expression = np.asarray(self.expression, dtype=np.float64)
        self.connectome = np.asarray(self.connectome).astype(np.int64)
        self.contactome = np.asarray(self.contactome).astype(np.int64)
        n = self.expression.shape[1]
        for name in ("connectome", "contactome"):
            m = getattr(self, name)
            if m.shape != (n, n):
                raise ValueError(f"{name} must be {n}x{n}, got {m.shape}")
            if not np.isin(m, (0, 1)).all():
                raise ValueError(f"{name} must be binary")
        if (self.expression < 0).any():
            raise ValueError("expression must be non-negative")
        if (self.connectome & (1 - self.contactome)).any():
            raise ValueError("connectome has synapses where the contactome has no contact")
        if np.diag(self.connectome).any():
            raise ValueError("connectome diagonal must be zero")


@dataclass
class CoexpressionResult:
    mask: np.ndarray
    p_values: np.ndarray
    n_with_synapses: int
    n_contact_only: int


def pair_sets(connectome, contactome):
    """Ordered (u, v) index arrays for connected and contact-only pairs."""
    with_syn = np.nonzero(connectome == 1)
    contact_only = np.nonzero((contactome ^ connectome) == 1)
    return with_syn, contact_only


def global_ndge(data: CoexpressionInput, alpha: float = 0.05,
                alternative: str = "two-sided") -> CoexpressionResult:
    """Binary co-expression mask and raw p-values for all gene pairs."""
    (us, vs), (uc, vc) = pair_sets(data.connectome, data.contactome)
    if us.size < 2:
        raise ValueError(f"with_synapses set has {us.size} pairs; need at least 2")
    if uc.size < 2:
        raise ValueError(f"contact_only set has {uc.size} pairs; need at least 2")
    C = data.expression
    G = C.shape[0]
    p = np.ones((G, G))
    for i in range(G):
        for j in range(G):
            ws = np.log1p(C[i, us] * C[j, vs])
            co = np.log1p(C[i, uc] * C[j, vc])
            p[i, j] = welch_ttest(ws, co, alternative)[1]
    mask = (G * G * p < alpha).astype(np.int64)
    return CoexpressionResult(mask, p, int(us.size), int(uc.size))


def read_labeled_csv(path):
    """Read a CSV whose first row and column hold labels.

    Returns ``(row_labels, col_labels, float matrix)``.
    """
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise ValueError(f"{path} is empty")
    cols = rows[0][1:]
    labels = [r[0] for r in rows[1:]]
    values = np.array([[float(x) for x in r[1:]] for r in rows[1:]], dtype=np.float64)
    if values.size and values.shape[1] != len(cols):
        raise ValueError(f"{path}: ragged rows")
    return labels, cols, values.reshape(len(labels), len(cols))


def write_labeled_csv(path, row_labels, col_labels, matrix, fmt="{:d}"):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow([""] + list(col_labels))
        for label, row in zip(row_labels, np.asarray(matrix)):
            w.writerow([label] + [fmt.format(x.item()) for x in row])
