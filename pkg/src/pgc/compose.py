"""Building generating circuits from smaller ones.

A :class:`ScopedCircuit` pins a circuit's local variables to global indices:
local variable ``k`` is global variable ``scope[k]``.  All operators return
closure-backed circuits whose local order is the sorted union of the input
scopes, so operands may themselves be closure-backed (e.g. determinants).
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .circuit import PGC, Circuit, ClosureCircuit, Const, Sum, Var
from .detring import lensemble_gp, validate_kernel, Kernel, LENSEMBLE
from .errors import ContractError, RefusalError
from .polyring import convolve

__all__ = [
    "ScopedCircuit", "GroupPartition",
    "mix", "product", "hier_compose", "det_pgc", "det_pgc_from_kernel",
    "variable", "bernoulli", "unit",
]


@dataclass(frozen=True)
class ScopedCircuit:
    circuit: PGC
    scope: tuple

    def __post_init__(self):
        scope = tuple(int(i) for i in self.scope)
        if len(set(scope)) != len(scope):
            raise ContractError(f"repeated variable in scope {scope}")
        if self.circuit.nvars != len(scope):
            raise ContractError(f"circuit has {self.circuit.nvars} variables but scope has {len(scope)}")
        object.__setattr__(self, "scope", scope)

    @property
    def nvars(self):
        return len(self.scope)

    def embed(self, n: int) -> ClosureCircuit:
        """The same distribution over global variables ``0 .. n-1``; others are forced to 0."""
        if any(i >= n for i in self.scope):
            raise ContractError(f"scope {self.scope} does not fit in {n} variables")
        idx = list(self.scope)
        inner = self.circuit
        return ClosureCircuit(n, lambda leaf, cap: inner.eval_coeffs(leaf[:, idx], cap),
                              inner.size(), label="embed")


@dataclass(frozen=True)
class GroupPartition:
    groups: tuple

    def __post_init__(self):
        groups = tuple(tuple(int(i) for i in g) for g in self.groups)
        flat = [i for g in groups for i in g]
        if any(not g for g in groups):
            raise ContractError("empty group in partition")
        if len(set(flat)) != len(flat):
            raise ContractError("groups overlap")
        if sorted(flat) != list(range(len(flat))):
            raise ContractError("groups must cover 0 .. n-1")
        object.__setattr__(self, "groups", groups)

    @property
    def n(self):
        return sum(len(g) for g in self.groups)

    @property
    def m(self):
        return len(self.groups)

    def __len__(self):
        return len(self.groups)


def variable(i: int) -> ScopedCircuit:
    """Point mass on ``X_i = 1``: the polynomial ``z_i``."""
    return ScopedCircuit(Circuit([Var(0)], 1), (i,))


def bernoulli(p: float, i: int) -> ScopedCircuit:
    """``p z_i + (1 - p)``."""
    return ScopedCircuit(Circuit([Var(0), Const(1.0), Sum([(0, p), (1, 1.0 - p)])], 1), (i,))


def unit() -> ScopedCircuit:
    """Constant 1 over the empty scope: the one-point distribution on nothing."""
    return ScopedCircuit(Circuit([Const(1.0)], 0), ())


def _positions(union, scope):
    where = {v: k for k, v in enumerate(union)}
    return [where[v] for v in scope]


def mix(f: ScopedCircuit, g: ScopedCircuit, alpha: float) -> ScopedCircuit:
    """``alpha f + (1 - alpha) g`` over the union of the scopes.

    Variables outside an operand's scope are 0 under that operand.
    """
    if not 0.0 <= alpha <= 1.0:
        raise ContractError(f"alpha must lie in [0, 1], got {alpha}")
    union = tuple(sorted(set(f.scope) | set(g.scope)))
    pf, pg = _positions(union, f.scope), _positions(union, g.scope)
    fc, gc = f.circuit, g.circuit

    def ev(leaf, cap):
        return alpha * fc.eval_coeffs(leaf[:, pf], cap) + (1 - alpha) * gc.eval_coeffs(leaf[:, pg], cap)

    c = ClosureCircuit(len(union), ev, fc.size() + gc.size() + 2, label="mix")
    return ScopedCircuit(c, union)


def product(f: ScopedCircuit, g: ScopedCircuit) -> ScopedCircuit:
    overlap = set(f.scope) & set(g.scope)
    if overlap:
        raise RefusalError(f"product needs disjoint scopes; shared variables {sorted(overlap)}")
    union = tuple(sorted(set(f.scope) | set(g.scope)))
    pf, pg = _positions(union, f.scope), _positions(union, g.scope)
    fc, gc = f.circuit, g.circuit

    def ev(leaf, cap):
        return convolve(fc.eval_coeffs(leaf[:, pf], cap), gc.eval_coeffs(leaf[:, pg], cap), cap)

    c = ClosureCircuit(len(union), ev, fc.size() + gc.size() + 2, label="product")
    return ScopedCircuit(c, union)


def hier_compose(g: PGC, leaves: Sequence[ScopedCircuit]) -> ScopedCircuit:
    """Substitute ``leaves[i]`` for slot ``z_i`` of ``g``."""
    if len(leaves) != g.nvars:
        raise ContractError(f"outer circuit has {g.nvars} slots, got {len(leaves)} leaves")
    seen = set()
    for lf in leaves:
        if seen & set(lf.scope):
            raise RefusalError(f"leaf scopes overlap on {sorted(seen & set(lf.scope))}")
        seen |= set(lf.scope)
    union = tuple(sorted(seen))
    pos = [_positions(union, lf.scope) for lf in leaves]
    inner = [lf.circuit for lf in leaves]

    def ev(leaf, cap):
        slots = np.stack([c.eval_coeffs(leaf[:, p], cap) for c, p in zip(inner, pos)], axis=1) \
            if inner else np.zeros((leaf.shape[0], 0, cap + 1))
        return g.eval_coeffs(slots, cap)

    size = g.size() + sum(c.size() for c in inner)
    return ScopedCircuit(ClosureCircuit(len(union), ev, size, label="hier"), union)


def det_pgc(L_factor, partition: GroupPartition, leaf_gps: Sequence[PGC],
            backend: str = "evalinterp") -> ScopedCircuit:
    """Determinantal PGC: the L-ensemble with kernel ``B B^T`` over groups, with leaf
    circuit ``leaf_gps[i]`` substituted for group ``i``.

    ``leaf_gps[i]`` has local variables in the order of ``partition.groups[i]``.
    """
    B = np.atleast_2d(np.asarray(L_factor, dtype=float))
    if B.shape[0] != partition.m or len(leaf_gps) != partition.m:
        raise ContractError(
            f"kernel factor has {B.shape[0]} rows, partition {partition.m} groups, "
            f"{len(leaf_gps)} leaf circuits")
    outer = lensemble_gp(B @ B.T, backend=backend)
    leaves = [ScopedCircuit(c, grp) for c, grp in zip(leaf_gps, partition.groups)]
    return hier_compose(outer, leaves)


def det_pgc_from_kernel(L, partition: GroupPartition, leaf_gps: Sequence[PGC],
                        backend: str = "evalinterp") -> ScopedCircuit:
    """:func:`det_pgc` from a PSD kernel instead of its factor."""
    L = L if isinstance(L, Kernel) else Kernel(L, LENSEMBLE)
    rep = validate_kernel(L)
    if not rep.valid:
        raise RefusalError("invalid L-ensemble kernel: " + "; ".join(rep.reasons))
    lam, V = np.linalg.eigh(L.matrix)
    B = V * np.sqrt(np.clip(lam, 0, None))
    return det_pgc(B, partition, leaf_gps, backend=backend)
