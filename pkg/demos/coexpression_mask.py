"""Derive a gene co-expression mask from synthetic wiring data and use it.

Two genes are planted so that they co-occur across synapses but not across
mere contacts. The analysis should flag exactly that ordered pair, and the
resulting mask then limits which wiring rules a genotype may learn.

    python demos/coexpression_mask.py
"""

import numpy as np

from synaptoforge import CONSTRAINT_COEXPRESSION, ModelDims, init_genotype, map_params
from synaptoforge.ndge import CoexpressionInput, global_ndge

rng = np.random.default_rng(0)
G, N = 6, 80
C = rng.uniform(0, 1, size=(G, N))
C[:2] = 0.0
high = np.arange(20) < 10
C[0, :20] = C[0, 40:60] = np.where(high, 10.0, 0.0)
C[1, 20:40] = np.where(high, 10.0, 0.0)
C[1, 60:80] = np.where(~high, 10.0, 0.0)
conn = np.zeros((N, N), dtype=int)
contact = np.zeros((N, N), dtype=int)
for k in range(20):
    conn[k, 20 + k] = contact[k, 20 + k] = 1
    contact[40 + k, 60 + k] = 1

res = global_ndge(CoexpressionInput(C, conn, contact))
print(f"{res.n_with_synapses} connected pairs, {res.n_contact_only} contact-only pairs")
print("mask:\n", res.mask)
print("smallest p-values:", np.sort(res.p_values.ravel())[:3])

g = init_genotype(ModelDims((4, 16, 2), G, 3), seed=0,
                  constraint_mode=CONSTRAINT_COEXPRESSION, coexpression_mask=res.mask)
O = map_params(g).O
print("rule for the flagged pair:", round(float(O[0, 1]), 3))
print("rules elsewhere lie in", (round(float(np.delete(O.ravel(), 1).min()), 3),
                                 round(float(np.delete(O.ravel(), 1).max()), 3)))
