"""Probabilistic generating circuits and the queries they support.

A generating circuit represents a multiaffine polynomial in ``z_0 .. z_{n-1}``
whose coefficient on ``prod_{i in S} z_i`` is the probability that exactly the
variables in ``S`` are 1.  Marginals are read off by evaluating the circuit
over truncated polynomials in a fresh indeterminate ``t``::

    z_i -> t   if X_i = 1 is observed
    z_i -> 0   if X_i = 0 is observed
    z_i -> 1   otherwise

and extracting the coefficient of ``t**len(ones)``.

Everything here works on any :class:`PGC`, which only has to provide batched
evaluation over coefficient arrays.  :class:`Circuit` is the explicit node
DAG; :class:`ClosureCircuit` wraps an arbitrary evaluator (determinants,
compositions) that never materializes nodes.

Variable indices are 0-based in the Python API.  The text format and the
command line use 1-based indices (``X1`` is variable 0).
"""
from __future__ import annotations

import math
from abc import ABC, abstractmethod
from dataclasses import dataclass, field
from typing import Callable, Iterable, Mapping, Sequence, Union

import numpy as np

from .errors import ContractError, RefusalError
from .polyring import Poly, convolve

__all__ = [
    "Sum", "Product", "Var", "Const", "Node",
    "PGC", "Circuit", "ClosureCircuit", "MarginalQuery",
    "validate_syntax", "evaluate_numeric", "evaluate_ring",
    "marginal", "marginals", "likelihood", "likelihoods", "log_likelihood",
    "expand_joint", "validate_semantics", "SemanticsReport",
    "assignments", "dumps", "loads", "save", "load",
]

TOL = 1e-9
DEFAULT_LIMIT = 20
_CHUNK = 4096


@dataclass(frozen=True)
class Sum:
    children: tuple  # of (node id, weight)

    def __init__(self, children):
        object.__setattr__(self, "children", tuple((int(c), float(w)) for c, w in children))

    @property
    def child_ids(self):
        return [c for c, _ in self.children]


@dataclass(frozen=True)
class Product:
    children: tuple

    def __init__(self, children):
        object.__setattr__(self, "children", tuple(int(c) for c in children))

    @property
    def child_ids(self):
        return list(self.children)


@dataclass(frozen=True)
class Var:
    index: int
    child_ids = ()


@dataclass(frozen=True)
class Const:
    value: float
    child_ids = ()


Node = Union[Sum, Product, Var, Const]


class PGC(ABC):
    """Evaluation contract shared by explicit and closure-backed circuits."""

    nvars: int

    @abstractmethod
    def eval_coeffs(self, leaf: np.ndarray, cap: int) -> np.ndarray:
        """Evaluate on a batch of leaf polynomials.

        ``leaf`` has shape ``(Q, nvars, cap + 1)``; row ``q`` assigns a
        truncated polynomial to each variable.  Returns ``(Q, cap + 1)``.
        """

    @abstractmethod
    def size(self) -> int:
        ...


class Circuit(PGC):
    """Explicit DAG of sum, product and leaf nodes in topological order.

    The root is the last node.  Nothing is validated on construction; use
    :func:`validate_syntax` before trusting a circuit read from disk.
    """

    def __init__(self, nodes: Sequence[Node], nvars: int):
        self.nodes = tuple(nodes)
        self.nvars = int(nvars)

    @property
    def root(self) -> int:
        return len(self.nodes) - 1

    def size(self) -> int:
        return sum(len(nd.child_ids) for nd in self.nodes)

    def eval_coeffs(self, leaf, cap):
        leaf = np.asarray(leaf)
        q = leaf.shape[0]
        dtype = np.result_type(leaf, float)
        vals = []
        for nd in self.nodes:
            if isinstance(nd, Var):
                v = leaf[:, nd.index, :]
            elif isinstance(nd, Const):
                v = np.zeros((q, cap + 1), dtype=dtype)
                v[:, 0] = nd.value
            elif isinstance(nd, Sum):
                v = np.zeros((q, cap + 1), dtype=dtype)
                for c, w in nd.children:
                    v = v + w * vals[c]
            else:
                v = None
                for c in nd.children:
                    v = vals[c] if v is None else convolve(v, vals[c], cap)
                if v is None:
                    v = np.zeros((q, cap + 1), dtype=dtype)
                    v[:, 0] = 1.0
            vals.append(v)
        return vals[-1]

    def __repr__(self):
        return f"Circuit(nvars={self.nvars}, nodes={len(self.nodes)}, edges={self.size()})"


class ClosureCircuit(PGC):
    """A circuit defined only through its evaluator.

    ``size()`` reports ``op_count``, the evaluator's operation count under
    its own cost model, since there are no materialized edges to count.
    """

    def __init__(self, nvars: int, fn: Callable[[np.ndarray, int], np.ndarray],
                 op_count: int, label: str = "closure"):
        self.nvars = int(nvars)
        self._fn = fn
        self.op_count = int(op_count)
        self.label = label

    def eval_coeffs(self, leaf, cap):
        return self._fn(np.asarray(leaf), cap)

    def size(self):
        return self.op_count

    def __repr__(self):
        return f"ClosureCircuit({self.label}, nvars={self.nvars}, ops={self.op_count})"


@dataclass(frozen=True)
class MarginalQuery:
    """Observe ``X_i = 1`` for i in ``ones`` and ``X_i = 0`` for i in ``zeros``."""

    ones: frozenset = field(default_factory=frozenset)
    zeros: frozenset = field(default_factory=frozenset)

    def __post_init__(self):
        object.__setattr__(self, "ones", frozenset(int(i) for i in self.ones))
        object.__setattr__(self, "zeros", frozenset(int(i) for i in self.zeros))
        if self.ones & self.zeros:
            raise ContractError(f"variables observed as both 0 and 1: {sorted(self.ones & self.zeros)}")

    def check(self, n: int):
        bad = [i for i in self.ones | self.zeros if not 0 <= i < n]
        if bad:
            raise ContractError(f"query variables out of range for n={n}: {sorted(bad)}")


def validate_syntax(c: Circuit) -> list[str]:
    """Return a list of violations; empty means the circuit is well formed."""
    out = []
    if not c.nodes:
        return ["empty circuit"]
    parents = [0] * len(c.nodes)
    for k, nd in enumerate(c.nodes):
        if isinstance(nd, Var) and not 0 <= nd.index < c.nvars:
            out.append(f"variable index out of range: node {k} has index {nd.index}")
        for ch in nd.child_ids:
            if not 0 <= ch < len(c.nodes):
                out.append(f"unknown child id: node {k} refers to {ch}")
            elif ch >= k:
                out.append(f"not topologically ordered: node {k} has child {ch}")
            else:
                parents[ch] += 1
        if isinstance(nd, (Sum, Product)) and not nd.child_ids:
            out.append(f"internal node without children: node {k}")
    roots = [k for k, p in enumerate(parents) if p == 0]
    if len(roots) > 1:
        out.append(f"multiple roots: {roots}")
    return out


def _const_leaf(z: np.ndarray, cap: int) -> np.ndarray:
    leaf = np.zeros(z.shape + (cap + 1,), dtype=np.result_type(z, float))
    leaf[..., 0] = z
    return leaf


def evaluate_numeric(c: PGC, z) -> float:
    z = np.asarray(z, dtype=float)
    if z.shape != (c.nvars,):
        raise ContractError(f"expected {c.nvars} values, got shape {z.shape}")
    return float(c.eval_coeffs(_const_leaf(z[None, :], 0), 0)[0, 0])


def evaluate_ring(c: PGC, leaf_values: Mapping[int, Poly], cap: int) -> Poly:
    missing = [i for i in range(c.nvars) if i not in leaf_values]
    if missing:
        raise ContractError(f"no leaf value for variables {missing}")
    leaf = np.zeros((1, c.nvars, cap + 1))
    for i in range(c.nvars):
        p = leaf_values[i]
        if p.cap != cap:
            raise ContractError(f"leaf {i} has cap {p.cap}, expected {cap}")
        leaf[0, i, : len(p.coeffs)] = p.coeffs
    return Poly(c.eval_coeffs(leaf, cap)[0], cap)


def _query_leaves(n: int, ones_mask: np.ndarray, zeros_mask: np.ndarray, cap: int) -> np.ndarray:
    q = ones_mask.shape[0]
    leaf = np.zeros((q, n, cap + 1))
    free = ~(ones_mask | zeros_mask)
    leaf[..., 0] = free
    if cap >= 1:
        leaf[..., 1] = ones_mask
    return leaf


def _masked_marginals(c: PGC, ones_mask, zeros_mask) -> np.ndarray:
    ones_mask = np.asarray(ones_mask, dtype=bool)
    zeros_mask = np.asarray(zeros_mask, dtype=bool)
    out = np.empty(ones_mask.shape[0])
    for s in range(0, ones_mask.shape[0], _CHUNK):
        om, zm = ones_mask[s:s + _CHUNK], zeros_mask[s:s + _CHUNK]
        k = om.sum(axis=1)
        cap = int(k.max()) if k.size else 0
        res = c.eval_coeffs(_query_leaves(c.nvars, om, zm, cap), cap)
        out[s:s + _CHUNK] = np.real(res[np.arange(len(k)), k])
    return out


def marginal(c: PGC, q: MarginalQuery) -> float:
    q.check(c.nvars)
    om = np.zeros((1, c.nvars), dtype=bool)
    zm = np.zeros((1, c.nvars), dtype=bool)
    om[0, list(q.ones)] = True
    zm[0, list(q.zeros)] = True
    return float(_masked_marginals(c, om, zm)[0])


def marginals(c: PGC, queries: Iterable[MarginalQuery]) -> np.ndarray:
    """Batched :func:`marginal`."""
    queries = list(queries)
    om = np.zeros((len(queries), c.nvars), dtype=bool)
    zm = np.zeros_like(om)
    for r, q in enumerate(queries):
        q.check(c.nvars)
        om[r, list(q.ones)] = True
        zm[r, list(q.zeros)] = True
    return _masked_marginals(c, om, zm)


def _check_bits(c: PGC, x) -> np.ndarray:
    x = np.asarray(x)
    if x.shape[-1] != c.nvars:
        raise ContractError(f"expected assignments of length {c.nvars}, got {x.shape[-1]}")
    if not np.isin(x, (0, 1)).all():
        raise ContractError("assignments must be 0/1")
    return x.astype(bool)


def likelihood(c: PGC, x) -> float:
    x = _check_bits(c, np.asarray(x).reshape(1, -1))
    return float(_masked_marginals(c, x, ~x)[0])


def likelihoods(c: PGC, X) -> np.ndarray:
    X = _check_bits(c, np.atleast_2d(X))
    return _masked_marginals(c, X, ~X)


def log_likelihood(c: PGC, x) -> float:
    p = likelihood(c, x)
    return math.log(p) if p > 0 else -math.inf


def assignments(n: int) -> np.ndarray:
    """All 2^n assignments, first variable most significant (row k is k in binary)."""
    k = np.arange(1 << n)[:, None]
    return ((k >> np.arange(n - 1, -1, -1)) & 1).astype(np.int8)


def expand_joint(c: PGC, limit: int = DEFAULT_LIMIT) -> np.ndarray:
    """Probability of every assignment, in the row order of :func:`assignments`."""
    if c.nvars > limit:
        raise RefusalError(f"refusing to enumerate 2^{c.nvars} assignments (limit {limit})")
    X = assignments(c.nvars).astype(bool)
    return _masked_marginals(c, X, ~X)


@dataclass(frozen=True)
class SemanticsReport:
    nonnegative: bool
    normalized: bool
    max_violation: float
    total: float

    @property
    def ok(self):
        return self.nonnegative and self.normalized


def validate_semantics(c: PGC, limit: int = DEFAULT_LIMIT, tol: float = TOL) -> SemanticsReport:
    """Check by enumeration that ``c`` is a normalized, nonnegative distribution.

    Only the multiaffine part is checked; terms of degree > 1 in a single
    variable never reach a full-assignment query.
    """
    p = expand_joint(c, limit)
    total = float(p.sum())
    neg = float(max(0.0, -p.min())) if p.size else 0.0
    return SemanticsReport(
        nonnegative=neg <= tol,
        normalized=abs(total - 1.0) <= tol,
        max_violation=max(neg, abs(total - 1.0)),
        total=total,
    )


# -- text format ----------------------------------------------------------

FORMAT_TAG = "# pgc text format v1"


def dumps(c: Circuit) -> str:
    lines = [FORMAT_TAG, f"pgc {c.nvars} {len(c.nodes)}"]
    for nd in c.nodes:
        if isinstance(nd, Var):
            lines.append(f"v {nd.index + 1}")
        elif isinstance(nd, Const):
            lines.append(f"k {nd.value:.17g}")
        elif isinstance(nd, Sum):
            lines.append("s " + " ".join(f"{ch}:{w:.17g}" for ch, w in nd.children))
        else:
            lines.append("p " + " ".join(str(ch) for ch in nd.children))
    return "\n".join(lines) + "\n"


class FormatError(ValueError):
    pass


def _content_lines(text: str):
    for num, raw in enumerate(text.splitlines(), 1):
        line = raw.strip()
        if line and not line.startswith("#"):
            yield num, line


def loads(text: str) -> Circuit:
    it = _content_lines(text)
    try:
        num, header = next(it)
    except StopIteration:
        raise FormatError("empty circuit file") from None
    parts = header.split()
    if len(parts) != 3 or parts[0] != "pgc":
        raise FormatError(f"line {num}: expected header 'pgc <n> <num_nodes>'")
    n, count = int(parts[1]), int(parts[2])
    nodes = []
    for num, line in it:
        tag, *rest = line.split()
        try:
            if tag == "v":
                nodes.append(Var(int(rest[0]) - 1))
            elif tag == "k":
                nodes.append(Const(float(rest[0])))
            elif tag == "s":
                nodes.append(Sum([(int(a), float(b)) for a, b in (r.split(":") for r in rest)]))
            elif tag == "p":
                nodes.append(Product([int(r) for r in rest]))
            else:
                raise FormatError(f"line {num}: unknown node tag {tag!r}")
        except (IndexError, ValueError) as e:
            if isinstance(e, FormatError):
                raise
            raise FormatError(f"line {num}: malformed node {line!r}") from e
    if len(nodes) != count:
        raise FormatError(f"header announces {count} nodes, found {len(nodes)}")
    return Circuit(nodes, n)


def save(c: Circuit, path):
    with open(path, "w") as f:
        f.write(dumps(c))


def load(path) -> Circuit:
    with open(path) as f:
        return loads(f.read())
