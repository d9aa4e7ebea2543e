"""Probabilistic mass circuits over indicator leaves ``X_i`` / ``not X_i``.

A mass circuit evaluates to an unnormalized probability when every
indicator is set from an assignment.  Smooth and decomposable circuits
answer marginals in one pass and convert to generating circuits by
replacing ``X_i`` with ``z_i`` and ``not X_i`` with the constant 1.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple, Sequence

import numpy as np

from . import circuit as pgc
from .circuit import Const, MarginalQuery, Product, Sum, Var
from .errors import ContractError, RefusalError

__all__ = [
    "Indicator", "MassCircuit", "StructureCheck",
    "scopes", "check_decomposable", "check_smooth", "smooth",
    "evaluate", "pc_marginal", "pc_likelihood", "pc_expand_joint", "to_pgc",
    "dumps", "loads", "save", "load",
]


@dataclass(frozen=True)
class Indicator:
    """Leaf ``X_var`` (``negated=False``) or ``not X_var``."""

    var: int
    negated: bool = False
    child_ids = ()


class MassCircuit:
    """Node DAG like :class:`pgc.circuit.Circuit` with indicator leaves.

    Sum weights must be nonnegative.  The last node is the root.
    """

    def __init__(self, nodes: Sequence, nvars: int):
        self.nodes = tuple(nodes)
        self.nvars = int(nvars)
        for k, nd in enumerate(self.nodes):
            if isinstance(nd, Var):
                raise ContractError(f"node {k}: mass circuits use Indicator leaves, not Var")
            if isinstance(nd, Sum) and any(w < 0 for _, w in nd.children):
                raise ContractError(f"node {k}: negative sum weight in a mass circuit")
            if isinstance(nd, Indicator) and not 0 <= nd.var < self.nvars:
                raise ContractError(f"node {k}: variable {nd.var} out of range")
            for ch in nd.child_ids:
                if not 0 <= ch < k:
                    raise ContractError(f"node {k}: child {ch} is not an earlier node")

    @property
    def root(self):
        return len(self.nodes) - 1

    def size(self):
        return sum(len(nd.child_ids) for nd in self.nodes)


class StructureCheck(NamedTuple):
    ok: bool
    offending: list


def scopes(pc: MassCircuit) -> list[frozenset]:
    out = []
    for nd in pc.nodes:
        if isinstance(nd, Indicator):
            out.append(frozenset((nd.var,)))
        else:
            s = frozenset()
            for ch in nd.child_ids:
                s = s | out[ch]
            out.append(s)
    return out


def check_decomposable(pc: MassCircuit) -> StructureCheck:
    sc = scopes(pc)
    bad = []
    for k, nd in enumerate(pc.nodes):
        if isinstance(nd, Product):
            seen = set()
            for ch in nd.children:
                if seen & sc[ch]:
                    bad.append(k)
                    break
                seen |= sc[ch]
    return StructureCheck(not bad, bad)


def check_smooth(pc: MassCircuit) -> StructureCheck:
    """Every sum node's children share one scope.

    The root is also required to mention every variable, otherwise the
    all-free evaluation would not be the normalizing constant.
    """
    sc = scopes(pc)
    bad = [k for k, nd in enumerate(pc.nodes)
           if isinstance(nd, Sum) and len({sc[ch] for ch, _ in nd.children}) > 1]
    if pc.nodes and len(sc[-1]) != pc.nvars and pc.root not in bad:
        bad.append(pc.root)
    return StructureCheck(not bad, bad)


def smooth(pc: MassCircuit) -> MassCircuit:
    """Make a decomposable circuit smooth without changing its mass polynomial.

    Each sum child missing variables ``j`` is multiplied by ``(X_j + not X_j)``
    gadgets; the root is completed the same way.
    """
    dec = check_decomposable(pc)
    if not dec.ok:
        raise RefusalError(f"cannot smooth a non-decomposable circuit; offending nodes {dec.offending}")
    if check_smooth(pc).ok:
        return pc
    sc = scopes(pc)
    nodes: list = []
    new_id = {}
    new_scope = []
    gadget = {}
    wrapped = {}

    def push(nd, scope):
        nodes.append(nd)
        new_scope.append(scope)
        return len(nodes) - 1

    def gadget_for(j):
        if j not in gadget:
            a = push(Indicator(j, False), frozenset((j,)))
            b = push(Indicator(j, True), frozenset((j,)))
            gadget[j] = push(Sum([(a, 1.0), (b, 1.0)]), frozenset((j,)))
        return gadget[j]

    def extend(nid, target):
        missing = tuple(sorted(target - new_scope[nid]))
        if not missing:
            return nid
        key = (nid, missing)
        if key not in wrapped:
            kids = [nid] + [gadget_for(j) for j in missing]
            wrapped[key] = push(Product(kids), target)
        return wrapped[key]

    for k, nd in enumerate(pc.nodes):
        if isinstance(nd, Sum):
            kids = [(extend(new_id[ch], sc[k]), w) for ch, w in nd.children]
            new_id[k] = push(Sum(kids), sc[k])
        elif isinstance(nd, Product):
            new_id[k] = push(Product([new_id[ch] for ch in nd.children]), sc[k])
        else:
            new_id[k] = push(nd, sc[k])
    root = new_id[pc.root]
    full = frozenset(range(pc.nvars))
    if new_scope[root] != full:
        extend(root, full)
    else:
        # root must be the last node
        if root != len(nodes) - 1:
            push(Sum([(root, 1.0)]), full)
    return MassCircuit(nodes, pc.nvars)


def evaluate(pc: MassCircuit, pos, neg) -> np.ndarray:
    """Batched evaluation; ``pos[q, i]`` feeds ``X_i`` and ``neg[q, i]`` feeds ``not X_i``."""
    pos = np.atleast_2d(np.asarray(pos, dtype=float))
    neg = np.atleast_2d(np.asarray(neg, dtype=float))
    vals = []
    for nd in pc.nodes:
        if isinstance(nd, Indicator):
            v = (neg if nd.negated else pos)[:, nd.var]
        elif isinstance(nd, Const):
            v = np.full(pos.shape[0], nd.value)
        elif isinstance(nd, Sum):
            v = sum(w * vals[ch] for ch, w in nd.children)
        else:
            v = np.prod([vals[ch] for ch in nd.children], axis=0)
        vals.append(v)
    return vals[-1]


def _require_tractable(pc):
    dec = check_decomposable(pc)
    if not dec.ok:
        raise RefusalError(f"circuit is not decomposable; offending nodes {dec.offending}")
    sm = check_smooth(pc)
    if not sm.ok:
        raise RefusalError(f"circuit is not smooth; offending nodes {sm.offending}")


def _marginals(pc, ones_mask, zeros_mask):
    free = ~(ones_mask | zeros_mask)
    pos = (ones_mask | free).astype(float)
    neg = (zeros_mask | free).astype(float)
    z = evaluate(pc, np.ones((1, pc.nvars)), np.ones((1, pc.nvars)))[0]
    return evaluate(pc, pos, neg) / z


def pc_marginal(pc: MassCircuit, q: MarginalQuery) -> float:
    """Marginal of a smooth, decomposable circuit, normalized by the all-free evaluation."""
    _require_tractable(pc)
    q.check(pc.nvars)
    om = np.zeros((1, pc.nvars), dtype=bool)
    zm = np.zeros_like(om)
    om[0, list(q.ones)] = True
    zm[0, list(q.zeros)] = True
    return float(_marginals(pc, om, zm)[0])


def pc_likelihood(pc: MassCircuit, X) -> np.ndarray:
    _require_tractable(pc)
    X = np.atleast_2d(np.asarray(X)).astype(bool)
    return _marginals(pc, X, ~X)


def pc_expand_joint(pc: MassCircuit, limit: int = pgc.DEFAULT_LIMIT) -> np.ndarray:
    if pc.nvars > limit:
        raise RefusalError(f"refusing to enumerate 2^{pc.nvars} assignments (limit {limit})")
    return pc_likelihood(pc, pgc.assignments(pc.nvars))


def to_pgc(pc: MassCircuit) -> pgc.Circuit:
    """Generating circuit for the same (normalized) distribution.

    Smooths first if needed.  A normalized input converts edge-for-edge;
    otherwise the root's weights absorb ``1 / Z`` (or a one-edge scaling
    node is added when the root is not a sum).
    """
    dec = check_decomposable(pc)
    if not dec.ok:
        raise RefusalError(f"circuit is not decomposable; offending nodes {dec.offending}")
    pc = smooth(pc)
    z = float(evaluate(pc, np.ones((1, pc.nvars)), np.ones((1, pc.nvars)))[0])
    if z <= 0:
        raise RefusalError("circuit has zero total mass")
    nodes = []
    for nd in pc.nodes:
        if isinstance(nd, Indicator):
            nodes.append(Const(1.0) if nd.negated else Var(nd.var))
        else:
            nodes.append(nd)
    if abs(z - 1.0) > 1e-15:
        root = nodes[-1]
        if isinstance(root, Sum):
            nodes[-1] = Sum([(ch, w / z) for ch, w in root.children])
        else:
            nodes.append(Sum([(len(nodes) - 1, 1.0 / z)]))
    return pgc.Circuit(nodes, pc.nvars)


# -- text format -----------------------------------------------------------

FORMAT_TAG = "# pmc text format v1"


def dumps(pc: MassCircuit) -> str:
    lines = [FORMAT_TAG, f"pmc {pc.nvars} {len(pc.nodes)}"]
    for nd in pc.nodes:
        if isinstance(nd, Indicator):
            lines.append(f"{'nx' if nd.negated else 'x'} {nd.var + 1}")
        elif isinstance(nd, Const):
            lines.append(f"k {nd.value:.17g}")
        elif isinstance(nd, Sum):
            lines.append("s " + " ".join(f"{ch}:{w:.17g}" for ch, w in nd.children))
        else:
            lines.append("p " + " ".join(str(ch) for ch in nd.children))
    return "\n".join(lines) + "\n"


def loads(text: str) -> MassCircuit:
    it = pgc._content_lines(text)
    try:
        num, header = next(it)
    except StopIteration:
        raise pgc.FormatError("empty circuit file") from None
    parts = header.split()
    if len(parts) != 3 or parts[0] != "pmc":
        raise pgc.FormatError(f"line {num}: expected header 'pmc <n> <num_nodes>'")
    n, count = int(parts[1]), int(parts[2])
    nodes = []
    for num, line in it:
        tag, *rest = line.split()
        try:
            if tag in ("x", "nx"):
                nodes.append(Indicator(int(rest[0]) - 1, tag == "nx"))
            elif tag == "k":
                nodes.append(Const(float(rest[0])))
            elif tag == "s":
                nodes.append(Sum([(int(a), float(b)) for a, b in (r.split(":") for r in rest)]))
            elif tag == "p":
                nodes.append(Product([int(r) for r in rest]))
            else:
                raise pgc.FormatError(f"line {num}: unknown node tag {tag!r}")
        except (IndexError, ValueError) as e:
            if isinstance(e, pgc.FormatError):
                raise
            raise pgc.FormatError(f"line {num}: malformed node {line!r}") from e
    if len(nodes) != count:
        raise pgc.FormatError(f"header announces {count} nodes, found {len(nodes)}")
    return MassCircuit(nodes, n)


def save(pc: MassCircuit, path):
    with open(path, "w") as f:
        f.write(dumps(pc))


def load(path) -> MassCircuit:
    with open(path) as f:
        return loads(f.read())
