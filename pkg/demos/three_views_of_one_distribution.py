"""One distribution over three binary variables, written three ways.

A probability table, a generating polynomial and an L-ensemble kernel all
describe the same thing here. Run from the repo root:

    python3 demos/three_views_of_one_distribution.py
"""
from pathlib import Path

import numpy as np

from pgc import circuit, detring, pc
from pgc.circuit import MarginalQuery, expand_joint, marginal

FIX = Path(__file__).resolve().parents[1] / "tests" / "fixtures"

# the table, rows 000 .. 111
table = np.array([0.02, 0.08, 0.12, 0.48, 0.02, 0.08, 0.04, 0.16])

# a hand-written circuit for the generating polynomial
gp = circuit.load(FIX / "three_gp.pgc")
print("generating polynomial circuit:", len(gp.nodes), "nodes")
print("joint from the polynomial:", np.round(expand_joint(gp), 4))

# a decomposable, smooth mass circuit, converted into a PGC
mass = pc.load(FIX / "three_pc.pmc")
converted = pc.to_pgc(mass)
print("converted PC agrees:", np.allclose(expand_joint(converted), table))

# the same distribution as an L-ensemble
L = detring.load_kernel(FIX / "lbeta.kernel").matrix
print("L =\n", L)
print("det(L + I) =", round(np.linalg.det(L + np.eye(3)), 6))
lens = detring.lensemble_gp(L)
print("L-ensemble agrees:", np.allclose(expand_joint(lens), table))

# marginals come from the polynomial directly, no table needed
for ones, zeros in [({1}, set()), ({0, 2}, set()), (set(), {1, 2})]:
    q = MarginalQuery(ones=ones, zeros=zeros)
    vals = [marginal(c, q) for c in (gp, converted, lens)]
    print(f"Pr(ones={sorted(ones)}, zeros={sorted(zeros)}) =", np.round(vals, 6))

# the marginal kernel K = L (L + I)^-1
K = detring.l_to_marginal_kernel(L).matrix
print("K =\n", np.round(K, 4))
