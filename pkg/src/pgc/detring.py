"""Determinants over R[t] and the generating polynomials built from them.

L-ensembles, marginal-kernel DPPs and spanning-tree distributions all have
generating polynomials of the form ``det(B + sum_e z_e C_e)``.  They are
exposed as :class:`~pgc.circuit.ClosureCircuit` objects whose evaluator
substitutes the leaf polynomials for the ``z_e`` and takes the determinant
over the polynomial ring, either with Bird's division-free algorithm or by
evaluation at roots of unity followed by an inverse DFT.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .circuit import ClosureCircuit, expand_joint
from .errors import ContractError, RefusalError
from .polyring import Poly

__all__ = [
    "Kernel", "WeightedGraph", "KernelReport",
    "det_numeric", "det_ring", "bird_det", "evalinterp_det",
    "AffineDeterminant", "lensemble_gp", "dpp_gp", "dpp_marginal_direct",
    "l_to_marginal_kernel", "validate_kernel", "spanning_tree_gp",
    "load_kernel", "save_kernel", "load_graph", "save_graph",
    "LENSEMBLE", "MARGINAL", "NONSYMMETRIC",
]

LENSEMBLE = "lensemble"
MARGINAL = "marginal"
NONSYMMETRIC = "nonsymmetric"
KINDS = (LENSEMBLE, MARGINAL, NONSYMMETRIC)

SYM_TOL = 1e-9
EIG_TOL = 1e-8
DEGENERATE_TOL = 1e-12


class InternalConsistencyError(AssertionError):
    pass


@dataclass(frozen=True, eq=False)
class Kernel:
    matrix: np.ndarray
    kind: str = LENSEMBLE

    def __post_init__(self):
        m = np.array(self.matrix, dtype=float)
        if m.ndim != 2 or m.shape[0] != m.shape[1]:
            raise ContractError(f"kernel must be square, got shape {m.shape}")
        if self.kind not in KINDS:
            raise ContractError(f"unknown kernel kind {self.kind!r}")
        m.flags.writeable = False
        object.__setattr__(self, "matrix", m)

    @property
    def n(self):
        return self.matrix.shape[0]


@dataclass(frozen=True)
class WeightedGraph:
    """Undirected graph on vertices ``0 .. n-1``; edge ``e`` carries variable ``z_e``."""

    n: int
    edges: tuple = field(default_factory=tuple)

    def __post_init__(self):
        edges = tuple(((int(i), int(j)), float(w)) for (i, j), w in self.edges)
        for (i, j), w in edges:
            if i == j:
                raise ContractError(f"self-loop at vertex {i}")
            if not (0 <= i < self.n and 0 <= j < self.n):
                raise ContractError(f"edge ({i}, {j}) out of range")
            if w < 0:
                raise ContractError(f"negative weight on edge ({i}, {j})")
        object.__setattr__(self, "edges", edges)

    def is_connected(self) -> bool:
        parent = list(range(self.n))

        def find(a):
            while parent[a] != a:
                parent[a] = parent[parent[a]]
                a = parent[a]
            return a

        for (i, j), w in self.edges:
            if w > 0:
                parent[find(i)] = find(j)
        return len({find(v) for v in range(self.n)}) <= 1

    def laplacian(self, z=None) -> np.ndarray:
        z = np.ones(len(self.edges)) if z is None else np.asarray(z, dtype=float)
        out = np.zeros((self.n, self.n))
        for ((i, j), w), ze in zip(self.edges, z):
            out[i, i] += w * ze
            out[j, j] += w * ze
            out[i, j] -= w * ze
            out[j, i] -= w * ze
        return out


def det_numeric(M) -> float:
    """Determinant via LU with partial pivoting (LAPACK)."""
    M = np.asarray(M)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise ContractError(f"det of non-square matrix {M.shape}")
    if M.shape[0] == 0:
        return 1.0
    return float(np.linalg.det(M))


# -- batched determinant kernels over coefficient arrays -------------------
#
# Polynomial matrices are stored as (..., n, n, d): the last axis holds
# coefficients of t^0 .. t^(d-1).

def _polymatmul(A, B, d):
    # (..., n, k, da) x (..., k, m, db) -> (..., n, m, d), truncated
    At = np.moveaxis(A, -1, 0)
    Bt = np.moveaxis(B, -1, 0)
    out = np.zeros((d,) + np.broadcast_shapes(At.shape[1:-2], Bt.shape[1:-2])
                   + (At.shape[-2], Bt.shape[-1]), dtype=np.result_type(A, B))
    for a in range(min(d, At.shape[0])):
        if not At[a].any():
            continue
        for b in range(min(d - a, Bt.shape[0])):
            out[a + b] += At[a] @ Bt[b]
    return np.moveaxis(out, 0, -1)


def bird_det(A: np.ndarray, cap: int) -> np.ndarray:
    """Division-free determinant of a batch of polynomial matrices.

    Iterates ``X <- mu(X) A`` starting from ``X = A``, where ``mu`` keeps the
    strict upper triangle and puts ``-(x_{i+1,i+1} + ... + x_{nn})`` on the
    diagonal.  After n-1 steps ``det A = (-1)^(n-1) X[0, 0]``.  Uses n-1
    polynomial matrix products and no division.
    """
    A = np.asarray(A)
    n = A.shape[-2]
    d = cap + 1
    if A.shape[-1] < d:
        pad = [(0, 0)] * (A.ndim - 1) + [(0, d - A.shape[-1])]
        A = np.pad(A, pad)
    A = A[..., :d]
    if n == 0:
        out = np.zeros(A.shape[:-3] + (d,), dtype=A.dtype)
        out[..., 0] = 1
        return out
    X = A
    iu = np.triu_indices(n, 1)
    idx = np.arange(n)
    for _ in range(n - 1):
        mu = np.zeros_like(X)
        mu[..., iu[0], iu[1], :] = X[..., iu[0], iu[1], :]
        diag = X[..., idx, idx, :]
        # suffix sums of the diagonal, excluding the entry itself
        tail = np.cumsum(diag[..., ::-1, :], axis=-2)[..., ::-1, :] - diag
        mu[..., idx, idx, :] = -tail
        X = _polymatmul(mu, A, d)
    sign = -1 if (n - 1) % 2 else 1
    return sign * X[..., 0, 0, :]


def _roots_of_unity(p):
    return np.exp(2j * np.pi * np.arange(p) / p)


def _interpolate(values: np.ndarray, cap: int) -> np.ndarray:
    # values[..., k] = poly(omega^k), omega = exp(2 pi i / P)
    p = values.shape[-1]
    coeffs = np.fft.fft(values, axis=-1) / p
    out = np.zeros(values.shape[:-1] + (cap + 1,), dtype=coeffs.dtype)
    m = min(p, cap + 1)
    out[..., :m] = coeffs[..., :m]
    return out


def _degrees(coeffs: np.ndarray) -> np.ndarray:
    # highest nonzero index along the last axis, maximized over the batch axis 0
    nz = np.abs(coeffs) > 0
    if coeffs.shape[0] == 0:
        return np.full(coeffs.shape[1:-1], -1)
    nz = nz.any(axis=0)
    rev = nz[..., ::-1]
    last = coeffs.shape[-1] - 1 - rev.argmax(axis=-1)
    return np.where(nz.any(axis=-1), last, -1)


def evalinterp_det(A: np.ndarray, cap: int, degree_bound: int | None = None) -> np.ndarray:
    """Determinant of a batch of polynomial matrices by evaluation at roots of unity.

    ``degree_bound`` defaults to the smaller of the row-wise and column-wise
    sums of maximal entry degrees, which bounds the degree of the determinant.
    """
    A = np.asarray(A)
    n = A.shape[-2]
    if degree_bound is None:
        flat = A.reshape((-1,) + A.shape[-3:])
        deg = _degrees(flat)
        degree_bound = int(min(deg.max(axis=1).clip(0).sum(), deg.max(axis=0).clip(0).sum())) if n else 0
    p = degree_bound + 1
    w = _roots_of_unity(p)
    powers = w[None, :] ** np.arange(A.shape[-1])[:, None]  # (d, p)
    vals = A @ powers  # (..., n, n, p)
    vals = np.moveaxis(vals, -1, -3)  # (..., p, n, n)
    dets = np.linalg.det(vals) if n else np.ones(vals.shape[:-2])
    out = _interpolate(dets, cap)
    return out.real if not np.iscomplexobj(A) else out


def det_ring(M: Sequence[Sequence[Poly]], backend: str = "bird", check: bool = False,
             atol: float = 1e-7) -> Poly:
    """Determinant of a square matrix of :class:`Poly` sharing one cap."""
    n = len(M)
    if any(len(row) != n for row in M):
        raise ContractError("det_ring needs a square matrix")
    if n == 0:
        raise ContractError("det_ring needs a non-empty matrix")
    cap = M[0][0].cap
    A = np.zeros((n, n, cap + 1))
    for i, row in enumerate(M):
        for j, p in enumerate(row):
            if p.cap != cap:
                raise ContractError(f"entry ({i}, {j}) has cap {p.cap}, expected {cap}")
            A[i, j, : len(p.coeffs)] = p.coeffs
    results = {}
    for b in ({backend, "bird", "evalinterp"} if check else {backend}):
        if b == "bird":
            results[b] = bird_det(A, cap)
        elif b == "evalinterp":
            results[b] = evalinterp_det(A, cap)
        else:
            raise ContractError(f"unknown determinant backend {backend!r}")
    if check:
        diff = np.abs(results["bird"] - results["evalinterp"]).max()
        if diff > atol:
            raise InternalConsistencyError(f"bird and evalinterp disagree by {diff:.3g}")
    return Poly(results[backend], cap)


class AffineDeterminant:
    """Evaluator for ``det(base + sum_e f_e * C_e)``.

    ``terms`` is either an ``(E, n, n)`` stack of coefficient matrices, or,
    with ``columns=True``, an ``(n, n)`` matrix ``M`` meaning
    ``C_e = M[:, e] e_e^T`` (``f_e`` scales column ``e`` of ``M``).
    The column form covers ``L Z + I`` and ``I - K + K Z`` without the
    ``E * n^2`` einsum.
    """

    def __init__(self, base, terms, columns=False, backend="evalinterp", scale=1.0):
        self.base = np.asarray(base, dtype=float)
        self.terms = np.asarray(terms, dtype=float)
        self.columns = columns
        self.backend = backend
        self.scale = scale
        if columns:
            self.nvars = self.terms.shape[1]
            self.ranks = (np.abs(self.terms) > 0).any(axis=0).astype(int)
        else:
            self.nvars = self.terms.shape[0]
            self.ranks = np.array([np.linalg.matrix_rank(c) for c in self.terms], dtype=int)
        self.dim = self.base.shape[0]

    def op_count(self):
        # Bird: dim-1 matrix products at dim^3 ring multiplications each
        n = self.dim
        return max(n - 1, 0) * n ** 3 + self.nvars * n

    def _matrix_at(self, vals):
        # vals: (..., E) numbers -> (..., n, n)
        if self.columns:
            return self.base + self.terms * vals[..., None, :]
        return self.base + np.einsum("...e,eij->...ij", vals, self.terms)

    def __call__(self, leaf: np.ndarray, cap: int) -> np.ndarray:
        if self.backend == "bird":
            return self.scale * self._bird(leaf, cap)
        deg = _degrees(leaf)
        bound = int((deg.clip(0) * self.ranks).sum())
        bound = min(bound, self.dim * max(int(deg.max(initial=0)), 0))
        p = bound + 1
        w = _roots_of_unity(p)
        powers = w[None, :] ** np.arange(leaf.shape[-1])[:, None]  # (d, p)
        vals = np.moveaxis(leaf @ powers, -1, -2)  # (Q, p, E)
        if self.dim == 0:
            dets = np.ones(vals.shape[:-1])
        else:
            dets = np.linalg.det(self._matrix_at(vals))
        out = _interpolate(dets, cap)
        if not np.iscomplexobj(leaf):
            out = out.real
        return self.scale * out

    def _bird(self, leaf, cap):
        d = cap + 1
        q = leaf.shape[0]
        A = np.zeros((q, self.dim, self.dim, d), dtype=np.result_type(leaf, float))
        A[..., 0] += self.base
        if self.columns:
            A += self.terms[None, :, :, None] * leaf[:, None, :, :]
        else:
            A += np.einsum("qed,eij->qijd", leaf, self.terms)
        return bird_det(A, cap)


def _check_psd(m, upper=None):
    reasons = []
    if np.abs(m - m.T).max(initial=0) > SYM_TOL:
        reasons.append("not symmetric")
        return reasons, np.nan, np.nan
    eig = np.linalg.eigvalsh((m + m.T) / 2) if m.size else np.zeros(0)
    lo = float(eig.min()) if eig.size else 0.0
    hi = float(eig.max()) if eig.size else 0.0
    if lo < -EIG_TOL * max(hi, 1.0):
        reasons.append(f"not positive semidefinite (min eigenvalue {lo:.3g})")
    if upper is not None and hi > upper + EIG_TOL:
        reasons.append(f"eigenvalue {hi:.3g} exceeds {upper}")
    return reasons, lo, hi


@dataclass(frozen=True)
class KernelReport:
    valid: bool
    reasons: tuple
    min_eigenvalue: float = float("nan")
    max_eigenvalue: float = float("nan")
    min_probability: float = float("nan")


def validate_kernel(k: Kernel, limit: int = 20) -> KernelReport:
    m = k.matrix
    if k.kind == NONSYMMETRIC:
        dl = det_numeric(m + np.eye(k.n))
        if dl <= DEGENERATE_TOL:
            return KernelReport(False, (f"det(L + I) = {dl:.3g} is not positive",))
        if k.n > limit:
            return KernelReport(False, (f"n = {k.n} exceeds enumeration limit {limit}",))
        p = expand_joint(lensemble_gp(k), limit)
        lo = float(p.min())
        ok = lo >= -1e-9
        return KernelReport(ok, () if ok else (f"negative probability {lo:.3g}",), min_probability=lo)
    reasons, lo, hi = _check_psd(m, 1.0 if k.kind == MARGINAL else None)
    return KernelReport(not reasons, tuple(reasons), lo, hi)


def lensemble_gp(L, backend: str = "evalinterp") -> ClosureCircuit:
    """Generating polynomial ``det(L Z + I) / det(L + I)`` of an L-ensemble.

    ``L`` may be a :class:`Kernel` of kind ``lensemble`` or ``nonsymmetric``
    or a plain matrix (treated as nonsymmetric, no validation).
    """
    if isinstance(L, Kernel):
        if L.kind == MARGINAL:
            raise ContractError("lensemble_gp expects an L kernel, got a marginal kernel")
        L = L.matrix
    L = np.asarray(L, dtype=float)
    n = L.shape[0]
    norm = det_numeric(L + np.eye(n))
    if norm <= DEGENERATE_TOL:
        raise RefusalError(f"degenerate kernel: det(L + I) = {norm:.3g}")
    ev = AffineDeterminant(np.eye(n), L, columns=True, backend=backend, scale=1.0 / norm)
    return ClosureCircuit(n, ev, ev.op_count(), label="lensemble")


def dpp_gp(K, backend: str = "evalinterp") -> ClosureCircuit:
    """Generating polynomial ``det(I - K + K Z)`` of a DPP with marginal kernel ``K``."""
    if not isinstance(K, Kernel):
        K = Kernel(K, MARGINAL)
    if K.kind != MARGINAL:
        raise ContractError(f"dpp_gp expects a marginal kernel, got {K.kind}")
    rep = validate_kernel(K)
    if not rep.valid:
        raise RefusalError("invalid marginal kernel: " + "; ".join(rep.reasons))
    m = K.matrix
    n = K.n
    ev = AffineDeterminant(np.eye(n) - m, m, columns=True, backend=backend)
    return ClosureCircuit(n, ev, ev.op_count(), label="dpp")


def dpp_marginal_direct(K, A) -> float:
    """``Pr(X_i = 1 for all i in A) = det(K_A)``."""
    m = K.matrix if isinstance(K, Kernel) else np.asarray(K, dtype=float)
    idx = sorted(A)
    return det_numeric(m[np.ix_(idx, idx)]) if idx else 1.0


def l_to_marginal_kernel(L) -> Kernel:
    """``K = L (L + I)^{-1} = I - (L + I)^{-1}``."""
    if isinstance(L, Kernel):
        L = L.matrix
    L = np.asarray(L, dtype=float)
    n = L.shape[0]
    K = np.eye(n) - np.linalg.inv(L + np.eye(n))
    K = (K + K.T) / 2
    return Kernel(K, MARGINAL)


def spanning_tree_gp(G: WeightedGraph, removed_vertex: int = 0, normalize: bool = False,
                     backend: str = "evalinterp") -> ClosureCircuit:
    """Spanning-tree generating polynomial ``det(L(G) without row/col removed_vertex)``.

    Variable ``e`` is edge ``G.edges[e]``.  Unnormalized unless ``normalize``,
    in which case it is divided by the number (total weight) of spanning trees.
    """
    if not 0 <= removed_vertex < G.n:
        raise ContractError(f"removed_vertex {removed_vertex} out of range")
    if not G.is_connected():
        raise RefusalError("graph is disconnected; it has no spanning trees")
    keep = [v for v in range(G.n) if v != removed_vertex]
    terms = np.zeros((len(G.edges), G.n, G.n))
    for e, ((i, j), w) in enumerate(G.edges):
        terms[e, i, i] = terms[e, j, j] = w
        terms[e, i, j] = terms[e, j, i] = -w
    terms = terms[:, keep][:, :, keep]
    base = np.zeros((G.n - 1, G.n - 1))
    scale = 1.0
    if normalize:
        scale = 1.0 / det_numeric(G.laplacian()[np.ix_(keep, keep)])
    ev = AffineDeterminant(base, terms, backend=backend, scale=scale)
    return ClosureCircuit(len(G.edges), ev, ev.op_count(), label="spanning-tree")


# -- text formats -----------------------------------------------------------

def save_kernel(k: Kernel, path):
    with open(path, "w") as f:
        f.write(f"kernel {k.kind} {k.n}\n")
        for row in k.matrix:
            f.write(" ".join(f"{v:.17g}" for v in row) + "\n")


def load_kernel(path) -> Kernel:
    with open(path) as f:
        lines = [ln.split() for ln in f if ln.strip() and not ln.startswith("#")]
    if not lines or lines[0][0] != "kernel" or len(lines[0]) != 3:
        raise ValueError(f"{path}: expected header 'kernel <kind> <n>'")
    kind, n = lines[0][1], int(lines[0][2])
    rows = [[float(v) for v in ln] for ln in lines[1:]]
    if len(rows) != n or any(len(r) != n for r in rows):
        raise ValueError(f"{path}: expected {n} rows of {n} values")
    return Kernel(np.array(rows), kind)


def save_graph(G: WeightedGraph, path):
    with open(path, "w") as f:
        f.write(f"graph {G.n} {len(G.edges)}\n")
        for (i, j), w in G.edges:
            f.write(f"{i + 1} {j + 1} {w:.17g}\n")


def load_graph(path) -> WeightedGraph:
    with open(path) as f:
        lines = [ln.split() for ln in f if ln.strip() and not ln.startswith("#")]
    if not lines or lines[0][0] != "graph" or len(lines[0]) != 3:
        raise ValueError(f"{path}: expected header 'graph <n> <m>'")
    n, m = int(lines[0][1]), int(lines[0][2])
    if len(lines) - 1 != m:
        raise ValueError(f"{path}: header announces {m} edges, found {len(lines) - 1}")
    edges = [((int(a) - 1, int(b) - 1), float(w)) for a, b, w in lines[1:]]
    return WeightedGraph(n, edges)
