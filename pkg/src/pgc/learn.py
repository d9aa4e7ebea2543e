"""SimplePGC: mixtures of determinantal PGCs fit by maximum likelihood.

Structure
    Variables are grouped greedily so that positively dependent pairs share
    a group (at most ``K`` variables per group).  Each of the ``C`` mixture
    components is a DetPGC: an L-ensemble ``L = B B^T`` over the ``m``
    groups with a fully general leaf distribution per group that puts no
    mass on the all-zero group assignment.

Likelihood of a full assignment
    Let ``T`` be the set of groups containing at least one 1 and ``S_i`` the
    ones inside group ``i``.  Leaf polynomials have no constant term, so the
    only way to reach total degree ``|x|`` is through exactly the groups in
    ``T`` each contributing their top coefficient, giving::

        Pr_c(x) = det(L_T) / det(L + I) * prod_{i in T} exp(theta_{i,S_i}) / Z_i

    This is what :func:`log_likelihoods` computes in batch, and what the
    gradients below differentiate.  :func:`model_log_likelihood` instead
    builds the circuit and goes through ring evaluation; the two agree.
"""
from __future__ import annotations

import copy
import json
import logging
import math
import time
from dataclasses import asdict, dataclass
from typing import Mapping

import numpy as np
from scipy.special import logsumexp, softmax

from .circuit import Circuit, ClosureCircuit, Product, Sum, Var, likelihood
from .compose import GroupPartition, det_pgc
from .errors import ContractError, NumericalError, RefusalError

__all__ = [
    "PairStats", "estimate_pairwise", "pair_weight", "pair_weights", "partition",
    "leaf_gp", "SimplePgcModel", "TrainConfig", "TrainResult", "GridResult",
    "init_model", "log_likelihoods", "model_log_likelihood", "model_circuit",
    "nll_and_grad", "Adam", "train", "grid_search", "sample_exact",
    "save_checkpoint", "load_checkpoint",
]

log = logging.getLogger(__name__)


# -- structure ---------------------------------------------------------------

@dataclass(frozen=True)
class PairStats:
    p: np.ndarray   # Pr(X_i = 1)
    pij: np.ndarray  # Pr(X_i = 1, X_j = 1); diagonal equals p


def estimate_pairwise(X, weights=None) -> PairStats:
    """Frequencies by counting rows, optionally with per-row multiplicities."""
    X = np.asarray(X, dtype=float)
    if X.ndim != 2 or X.shape[0] == 0:
        raise RefusalError("need a non-empty 2-d sample matrix")
    w = np.ones(X.shape[0]) if weights is None else np.asarray(weights, dtype=float)
    total = w.sum()
    p = w @ X / total
    pij = (X * w[:, None]).T @ X / total
    return PairStats(p, pij)


def pair_weight(stats: PairStats, i: int, j: int) -> float:
    """``p_ij log(p_ij / (p_i p_j))``, or 0 when ``p_ij`` or ``p_i p_j`` is 0."""
    pij = stats.pij[i, j]
    den = stats.p[i] * stats.p[j]
    if pij <= 0 or den <= 0:
        return 0.0
    return float(pij * math.log(pij / den))


def pair_weights(stats: PairStats) -> np.ndarray:
    n = len(stats.p)
    W = np.zeros((n, n))
    for i in range(n):
        for j in range(i + 1, n):
            W[i, j] = W[j, i] = pair_weight(stats, i, j)
    return W


def partition(n: int, weights, K: int) -> GroupPartition:
    """Greedy grouping of variables by descending positive pair weight.

    ``weights`` is an ``(n, n)`` array (upper triangle read) or a mapping
    ``{(i, j): w}``.  Ties are broken by ascending ``(i, j)``.  Two groups
    merge when the pair straddling them comes up and the union has at most
    ``K`` members.
    """
    if K < 1:
        raise ContractError("K must be at least 1")
    if isinstance(weights, Mapping):
        items = [(float(w), min(i, j), max(i, j)) for (i, j), w in weights.items() if i != j]
    else:
        W = np.asarray(weights, dtype=float)
        iu, ju = np.triu_indices(n, 1)
        items = list(zip(W[iu, ju].tolist(), iu.tolist(), ju.tolist()))
    items = sorted((t for t in items if t[0] > 0), key=lambda t: (-t[0], t[1], t[2]))
    group = {i: (i,) for i in range(n)}
    for _, i, j in items:
        if group[i] is group[j] or i in group[j]:
            continue
        union = tuple(sorted(group[i] + group[j]))
        if len(union) <= K:
            for v in union:
                group[v] = union
    seen = []
    for i in range(n):
        if group[i] not in seen:
            seen.append(group[i])
    return GroupPartition(tuple(seen))


def leaf_gp(theta) -> Circuit:
    """``(1/Z) sum_{S nonempty} exp(theta_S) z^S`` over a group of size k.

    ``theta`` has ``2**k - 1`` entries; entry ``mask - 1`` belongs to the
    subset whose bit ``b`` marks local variable ``b``.
    """
    theta = np.asarray(theta, dtype=float)
    k = int(round(math.log2(len(theta) + 1)))
    if len(theta) != 2 ** k - 1 or k < 1:
        raise ContractError(f"theta must have 2**k - 1 entries, got {len(theta)}")
    w = softmax(theta)
    nodes = [Var(b) for b in range(k)]
    terms = []
    for mask in range(1, 2 ** k):
        members = [b for b in range(k) if mask >> b & 1]
        if len(members) == 1:
            terms.append((members[0], w[mask - 1]))
        else:
            nodes.append(Product(members))
            terms.append((len(nodes) - 1, w[mask - 1]))
    nodes.append(Sum(terms))
    return Circuit(nodes, k)


# -- model -------------------------------------------------------------------

@dataclass
class SimplePgcModel:
    """Mixture of ``C`` DetPGCs sharing one variable partition.

    ``factors[c]`` is the ``m x m`` kernel factor ``B_c`` (``L_c = B_c B_c^T``);
    ``theta[c]`` concatenates the leaf parameters of all groups, group ``i``
    occupying ``theta[c, offsets[i] : offsets[i + 1]]``.
    """

    partition: GroupPartition
    factors: np.ndarray
    theta: np.ndarray
    logits: np.ndarray

    def __post_init__(self):
        self.factors = np.asarray(self.factors, dtype=float)
        self.theta = np.asarray(self.theta, dtype=float)
        self.logits = np.asarray(self.logits, dtype=float)
        C, m = self.C, self.partition.m
        if self.factors.shape[:2] != (C, m) or self.theta.shape != (C, self.offsets[-1]):
            raise ContractError("parameter shapes do not match the partition")

    @property
    def C(self):
        return len(self.logits)

    @property
    def n(self):
        return self.partition.n

    @property
    def offsets(self):
        sizes = [2 ** len(g) - 1 for g in self.partition.groups]
        return np.concatenate([[0], np.cumsum(sizes)]).astype(int)

    @property
    def weights(self):
        return softmax(self.logits)

    def group_theta(self, c, i):
        o = self.offsets
        return self.theta[c, o[i]:o[i + 1]]

    def params(self) -> dict:
        return {"factors": self.factors, "theta": self.theta, "logits": self.logits}

    def with_params(self, params: Mapping) -> "SimplePgcModel":
        return SimplePgcModel(self.partition, params["factors"], params["theta"], params["logits"])


def init_model(part: GroupPartition, C: int, rng, noise: float = 0.01,
               theta_std: float = 0.1) -> SimplePgcModel:
    """Identity-plus-noise kernel factors, small random leaf parameters, uniform mixture."""
    m = part.m
    factors = np.eye(m)[None] + noise * rng.standard_normal((C, m, m))
    total = sum(2 ** len(g) - 1 for g in part.groups)
    theta = theta_std * rng.standard_normal((C, total))
    return SimplePgcModel(part, factors, theta, np.zeros(C))


def _group_codes(model, X):
    # (N, m) subset code of the ones inside each group, 0 when the group is all-zero
    X = np.asarray(X, dtype=np.int64)
    codes = np.zeros((X.shape[0], model.partition.m), dtype=np.int64)
    for i, g in enumerate(model.partition.groups):
        codes[:, i] = X[:, list(g)] @ (1 << np.arange(len(g)))
    return codes


def _size_buckets(active):
    """Rows grouped by number of active groups: ``[(rows, idx)]`` with ``idx`` of shape (len(rows), s)."""
    counts = active.sum(axis=1)
    out = []
    for s in np.unique(counts):
        rows = np.flatnonzero(counts == s)
        if s == 0:
            continue
        # active groups of each row, in ascending order
        idx = np.nonzero(active[rows])[1].reshape(len(rows), s)
        out.append((rows, idx))
    return out


def _forward(model: SimplePgcModel, X, need_grad: bool):
    X = np.asarray(X)
    if X.ndim != 2 or X.shape[1] != model.n:
        raise ContractError(f"expected samples with {model.n} columns")
    codes = _group_codes(model, X)
    active = codes > 0
    a = active.astype(float)
    N, m = codes.shape
    C = model.C
    off = model.offsets
    flat_idx = np.where(active, off[:-1][None, :] + codes - 1, 0)
    eye = np.eye(m)
    buckets = _size_buckets(active)
    comp = np.empty((N, C))
    cache = []
    for c in range(C):
        B = model.factors[c]
        L = B @ B.T
        sign_n, logdet_n = np.linalg.slogdet(L + eye)
        if sign_n <= 0:
            raise NumericalError(f"det(L + I) is not positive in component {c}", component=c)
        # log det(L_T) only needs the principal submatrix on the active groups
        logdet = np.zeros(N)
        subs = []
        for rows, idx in buckets:
            sub = L[idx[:, :, None], idx[:, None, :]]
            sign, ld = np.linalg.slogdet(sub)
            logdet[rows] = np.where(sign > 0, ld, -np.inf)
            subs.append(sub)
        th = model.theta[c]
        logZ = np.array([logsumexp(th[off[i]:off[i + 1]]) for i in range(m)])
        leaf = (a * (th[flat_idx] - logZ[None, :])).sum(axis=1)
        comp[:, c] = logdet + leaf - logdet_n
        if need_grad:
            cache.append((L, subs, logZ))
    if np.isnan(comp).any():
        bad = int(np.argwhere(np.isnan(comp))[0, 1])
        raise NumericalError(f"non-finite log-likelihood in component {bad}", component=bad)
    logpi = model.logits - logsumexp(model.logits)
    joint = comp + logpi[None, :]
    total = logsumexp(joint, axis=1)
    return total, dict(codes=codes, a=a, flat_idx=flat_idx, comp=comp, joint=joint,
                       total=total, cache=cache, buckets=buckets)


def log_likelihoods(model: SimplePgcModel, X) -> np.ndarray:
    """Per-row log-likelihood (nats) of full assignments, closed form, batched."""
    return _forward(model, X, False)[0]


def model_circuit(model: SimplePgcModel, backend: str = "evalinterp") -> ClosureCircuit:
    """The mixture as a generating circuit over all ``n`` variables."""
    comps = []
    for c in range(model.C):
        leaves = [leaf_gp(model.group_theta(c, i)) for i in range(model.partition.m)]
        comps.append(det_pgc(model.factors[c], model.partition, leaves, backend=backend))
    w = model.weights
    for sc in comps:
        assert sc.scope == tuple(range(model.n))

    def ev(leaf, cap):
        return sum(wc * sc.circuit.eval_coeffs(leaf, cap) for wc, sc in zip(w, comps))

    return ClosureCircuit(model.n, ev, sum(sc.circuit.size() for sc in comps) + model.C,
                          label="simplepgc")


def model_log_likelihood(model: SimplePgcModel, x, backend: str = "evalinterp") -> float:
    """Log-likelihood of one assignment through circuit evaluation over R[t].

    Each component's likelihood is a coefficient of a ring determinant;
    components are combined with a log-sum-exp.
    """
    x = np.asarray(x)
    vals = []
    for c in range(model.C):
        leaves = [leaf_gp(model.group_theta(c, i)) for i in range(model.partition.m)]
        sc = det_pgc(model.factors[c], model.partition, leaves, backend=backend)
        p = likelihood(sc.circuit, x)
        if not math.isfinite(p):
            raise NumericalError(f"non-finite likelihood in component {c}", component=c)
        vals.append(math.log(p) if p > 0 else -math.inf)
    logpi = model.logits - logsumexp(model.logits)
    return float(logsumexp(np.array(vals) + logpi))


def nll_and_grad(model: SimplePgcModel, X):
    """Mean negative log-likelihood of rows ``X`` and its gradient.

    The gradient is a dict keyed like :meth:`SimplePgcModel.params`.
    """
    X = np.asarray(X)
    if X.shape[0] == 0:
        raise RefusalError("empty batch")
    total, f = _forward(model, X, True)
    if not np.isfinite(total).all():
        raise NumericalError("sample with zero probability in batch")
    N = X.shape[0]
    a = f["a"]
    resp = np.exp(f["joint"] - total[:, None])  # (N, C)
    pi = model.weights
    g_logits = -(resp.sum(axis=0) - N * pi) / N
    g_factors = np.zeros_like(model.factors)
    g_theta = np.zeros_like(model.theta)
    off = model.offsets
    m = model.partition.m
    for c in range(model.C):
        L, subs, logZ = f["cache"][c]
        B = model.factors[c]
        r = resp[:, c]
        # d log det(L_T) / dL is inv(L_T)^T scattered onto the T x T block
        G = np.zeros(m * m)
        for (rows, idx), sub in zip(f["buckets"], subs):
            try:
                inv = np.linalg.inv(sub)
            except np.linalg.LinAlgError as e:
                raise NumericalError(f"singular kernel minor in component {c}", component=c) from e
            w = r[rows, None, None] * np.swapaxes(inv, 1, 2)
            flat = idx[:, :, None] * m + idx[:, None, :]
            G += np.bincount(flat.ravel(), weights=w.ravel(), minlength=m * m)
        G = G.reshape(m, m) - r.sum() * np.linalg.inv(L + np.eye(m)).T
        g_factors[c] = -((G + G.T) @ B) / N
        # leaf terms: indicator of the observed subset minus the softmax
        gt = np.zeros(model.theta.shape[1])
        wa = r[:, None] * a
        np.add.at(gt, f["flat_idx"].ravel(), wa.ravel())
        th = model.theta[c]
        for i in range(m):
            sl = slice(off[i], off[i + 1])
            gt[sl] -= wa[:, i].sum() * np.exp(th[sl] - logZ[i])
        g_theta[c] = -gt / N
    grad = {"factors": g_factors, "theta": g_theta, "logits": g_logits}
    for k, v in grad.items():
        if not np.isfinite(v).all():
            raise NumericalError(f"non-finite gradient for {k}")
    return float(-total.mean()), grad


# -- optimization ------------------------------------------------------------

class Adam:
    """Adam with L2 weight decay folded into the gradient."""

    def __init__(self, params: Mapping[str, np.ndarray], lr=0.05, betas=(0.9, 0.999),
                 eps=1e-8, weight_decay=0.0):
        self.lr, self.betas, self.eps, self.weight_decay = lr, betas, eps, weight_decay
        self.m = {k: np.zeros_like(v) for k, v in params.items()}
        self.v = {k: np.zeros_like(v) for k, v in params.items()}
        self.t = 0

    def step(self, params, grads):
        self.t += 1
        b1, b2 = self.betas
        out = {}
        for k, p in params.items():
            g = grads[k] + self.weight_decay * p
            self.m[k] = b1 * self.m[k] + (1 - b1) * g
            self.v[k] = b2 * self.v[k] + (1 - b2) * g * g
            mhat = self.m[k] / (1 - b1 ** self.t)
            vhat = self.v[k] / (1 - b2 ** self.t)
            out[k] = p - self.lr * mhat / (np.sqrt(vhat) + self.eps)
        return out


@dataclass
class TrainConfig:
    K: int = 2
    C: int = 4
    lr: float = 0.05
    epochs: int = 100
    batch_size: int = 256
    weight_decay: float = 1e-4
    seed: int = 0
    K_grid: tuple = (1, 2, 5, 7)
    C_grid: tuple = (1, 4, 7, 10, 20)
    init_noise: float = 0.01
    theta_std: float = 0.1

    def __post_init__(self):
        if self.K < 1 or self.C < 1:
            raise ContractError("K and C must be at least 1")
        self.K_grid = tuple(self.K_grid)
        self.C_grid = tuple(self.C_grid)


@dataclass
class TrainResult:
    model: SimplePgcModel
    log: list
    best_epoch: int
    seconds: float

    @property
    def final_train_nll(self):
        return self.log[self.best_epoch]["train_nll"]


def _mean_nll(model, X, chunk=8192):
    tot = 0.0
    for s in range(0, len(X), chunk):
        tot -= log_likelihoods(model, X[s:s + chunk]).sum()
    return tot / len(X)


def train(data, config: TrainConfig) -> TrainResult:
    """Minibatch Adam on the training NLL; keeps the epoch with the best validation NLL.

    ``log[0]`` is the initial model, ``log[e]`` the model after epoch ``e``.
    """
    X = np.asarray(data.train)
    V = np.asarray(data.valid) if data.valid is not None and len(data.valid) else X
    rng = np.random.default_rng(config.seed)
    start = time.perf_counter()
    part = partition(X.shape[1], pair_weights(estimate_pairwise(X)), config.K)
    model = init_model(part, config.C, rng, config.init_noise, config.theta_std)
    opt = Adam(model.params(), lr=config.lr, weight_decay=config.weight_decay)
    entry = {"epoch": 0, "train_nll": _mean_nll(model, X), "valid_nll": _mean_nll(model, V)}
    history = [entry]
    best, best_epoch = copy.deepcopy(model), 0
    for epoch in range(1, config.epochs + 1):
        order = rng.permutation(len(X))
        for s in range(0, len(X), config.batch_size):
            _, grad = nll_and_grad(model, X[order[s:s + config.batch_size]])
            model = model.with_params(opt.step(model.params(), grad))
        tr, va = _mean_nll(model, X), _mean_nll(model, V)
        if not (math.isfinite(tr) and math.isfinite(va)):
            log.error("training diverged at epoch %d", epoch)
            raise NumericalError(f"training diverged at epoch {epoch}: train {tr}, valid {va}")
        history.append({"epoch": epoch, "train_nll": tr, "valid_nll": va})
        if va < history[best_epoch]["valid_nll"]:
            best, best_epoch = copy.deepcopy(model), epoch
        log.debug("epoch %d train %.5f valid %.5f", epoch, tr, va)
    return TrainResult(best, history, best_epoch, time.perf_counter() - start)


@dataclass
class GridResult:
    best_config: TrainConfig
    best: TrainResult
    table: dict           # (K, C) -> validation NLL, or None on failure
    errors: dict          # (K, C) -> message
    test_nll: float


def grid_search(data, K_grid=None, C_grid=None, base: TrainConfig | None = None) -> GridResult:
    base = base or TrainConfig()
    K_grid = tuple(K_grid or base.K_grid)
    C_grid = tuple(C_grid or base.C_grid)
    if not K_grid or not C_grid:
        raise ContractError("grids must be non-empty")
    table, errors = {}, {}
    best = best_cfg = None
    for K in K_grid:
        for C in C_grid:
            cfg = TrainConfig(**{**asdict(base), "K": K, "C": C})
            try:
                res = train(data, cfg)
            except (NumericalError, np.linalg.LinAlgError) as e:
                table[(K, C)] = None
                errors[(K, C)] = str(e)
                log.warning("grid cell K=%d C=%d failed: %s", K, C, e)
                continue
            va = res.log[res.best_epoch]["valid_nll"]
            table[(K, C)] = va
            if best is None or va < best.log[best.best_epoch]["valid_nll"]:
                best, best_cfg = res, cfg
    if best is None:
        raise NumericalError("every grid cell failed")
    test = data.test if data.test is not None and len(data.test) else data.valid
    return GridResult(best_cfg, best, table, errors, _mean_nll(best.model, np.asarray(test)))


def sample_exact(model: SimplePgcModel, size: int, rng, limit: int = 20) -> np.ndarray:
    """Draw samples by enumerating all assignments (small ``n`` only)."""
    from .circuit import assignments
    if model.n > limit:
        raise RefusalError(f"exact sampling enumerates 2^{model.n} assignments (limit {limit})")
    X = assignments(model.n)
    p = np.exp(log_likelihoods(model, X))
    idx = rng.choice(len(X), size=size, p=p / p.sum())
    return X[idx].astype(np.int8)


# -- checkpoints -------------------------------------------------------------

CHECKPOINT_FORMAT = "simplepgc-checkpoint"
CHECKPOINT_VERSION = 1


def save_checkpoint(model: SimplePgcModel, path, extra: dict | None = None):
    doc = {
        "format": CHECKPOINT_FORMAT,
        "version": CHECKPOINT_VERSION,
        "groups": [list(g) for g in model.partition.groups],
        "factors": model.factors.tolist(),
        "theta": model.theta.tolist(),
        "logits": model.logits.tolist(),
    }
    if extra:
        doc["extra"] = extra
    with open(path, "w") as f:
        json.dump(doc, f)


def load_checkpoint(path) -> SimplePgcModel:
    with open(path) as f:
        doc = json.load(f)
    if doc.get("format") != CHECKPOINT_FORMAT:
        raise ValueError(f"{path}: not a SimplePGC checkpoint")
    if doc.get("version") != CHECKPOINT_VERSION:
        raise ValueError(f"{path}: unsupported checkpoint version {doc.get('version')}")
    part = GroupPartition(tuple(tuple(g) for g in doc["groups"]))
    return SimplePgcModel(part, np.array(doc["factors"]), np.array(doc["theta"]),
                          np.array(doc["logits"]))
