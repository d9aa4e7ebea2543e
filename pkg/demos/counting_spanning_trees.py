"""Spanning trees as a generating polynomial.

Each edge of a graph is a variable. The Laplacian minor with edge weights
z_e is a polynomial whose monomials are exactly the spanning trees, so
normalising it gives the uniform (or weighted) spanning tree distribution.
"""
import itertools

import numpy as np

from pgc import detring
from pgc.circuit import MarginalQuery, evaluate_numeric, expand_joint, marginal

# K4: every pair of 4 vertices, unit weights
edges = list(itertools.combinations(range(4), 2))
G = detring.WeightedGraph(4, [(e, 1.0) for e in edges])
poly = detring.spanning_tree_gp(G)
print("K4 has", round(evaluate_numeric(poly, np.ones(len(edges)))), "spanning trees")

dist = detring.spanning_tree_gp(G, normalize=True)
joint = expand_joint(dist)
support = np.flatnonzero(joint > 1e-12)
print("support size:", len(support), "each with mass", np.round(joint[support[0]], 4))

# every tree uses 3 of the 6 edges
sizes = {bin(int(s)).count("1") for s in support}
print("edge counts in the support:", sizes)

# each edge appears in half the trees of K4
for e, (u, v) in enumerate(edges):
    p = marginal(dist, MarginalQuery(ones={e}))
    print(f"  Pr(edge {u}-{v} in tree) = {p:.4f}")

# two edges sharing a vertex repel each other
pa = marginal(dist, MarginalQuery(ones={0}))
pab = marginal(dist, MarginalQuery(ones={0, 1}))
print(f"Pr(0-1 and 0-2) = {pab:.4f} vs independent {pa * pa:.4f}")

# weighted: heavier edges show up more often
rng = np.random.default_rng(4)
w = rng.uniform(0.5, 3.0, len(edges))
Gw = detring.WeightedGraph(4, list(zip(edges, w)))
dw = detring.spanning_tree_gp(Gw, normalize=True)
for e in np.argsort(w)[[0, -1]]:
    p = marginal(dw, MarginalQuery(ones={int(e)}))
    print(f"weight {w[e]:.2f}: Pr(in tree) = {p:.4f}")
