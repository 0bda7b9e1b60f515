"""L2-regularised linear binary classifiers for OVR and label-tree nodes.

Both losses are solved in the dual by coordinate descent.  Every update has
the form ``w += delta * y_i * x_i``, so a weight is only ever written for a
feature that occurs in some training instance of the problem: weights of
features unused by a node stay exactly zero without any special casing.
"""
from __future__ import annotations

import logging
import math
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from numba import njit

from ._seeding import derive_seed
from .data import MultiLabelDataset, SparseVector, instances_with_labels
from .tree import LabelTree

logger = logging.getLogger(__name__)

LOSSES = ("squared_hinge", "logistic")
INDEX_BYTES = 4
VALUE_BYTES = 8


class ConvergenceWarning(UserWarning):
    pass


@dataclass(frozen=True)
class LossSpec:
    """``f(w) = sum_i loss(y_i w.x_i) + lam/2 ||w||^2``."""

    kind: str = "squared_hinge"
    lam: float = 1.0

    def __post_init__(self):
        if self.kind not in LOSSES:
            raise ValueError(f"unknown loss {self.kind!r}; expected one of {LOSSES}")
        if not self.lam > 0:
            raise ValueError("lam must be positive")

    @property
    def loss_id(self) -> int:
        return LOSSES.index(self.kind)


@dataclass(frozen=True)
class BinaryProblem:
    instance_indices: np.ndarray
    signs: np.ndarray
    node_id: int = 0
    child_id: int = 0

    def __post_init__(self):
        if len(self.instance_indices) != len(self.signs):
            raise ValueError("signs must align with instance_indices")

    @property
    def n_positive(self) -> int:
        return int(np.sum(self.signs > 0))


# ---------------------------------------------------------------- kernels


@njit(cache=True, nogil=True)
def _dcd_squared_hinge(indptr, indices, data, y, n_cols, C, eps, max_iter, seed):
    l = y.size
    w = np.zeros(n_cols)
    alpha = np.zeros(l)
    diag = 0.5 / C
    qd = np.empty(l)
    for i in range(l):
        s = diag
        for p in range(indptr[i], indptr[i + 1]):
            s += data[p] * data[p]
        qd[i] = s
    np.random.seed(seed)
    order = np.arange(l)
    it = 0
    converged = False
    while it < max_iter:
        np.random.shuffle(order)
        pg_max = -np.inf
        pg_min = np.inf
        for s in range(l):
            i = order[s]
            g = 0.0
            for p in range(indptr[i], indptr[i + 1]):
                g += w[indices[p]] * data[p]
            g = g * y[i] - 1.0 + alpha[i] * diag
            pg = g
            if alpha[i] == 0.0 and g > 0.0:
                pg = 0.0
            if pg > pg_max:
                pg_max = pg
            if pg < pg_min:
                pg_min = pg
            if abs(pg) > 1e-12:
                old = alpha[i]
                alpha[i] = max(old - g / qd[i], 0.0)
                d = (alpha[i] - old) * y[i]
                for p in range(indptr[i], indptr[i + 1]):
                    w[indices[p]] += d * data[p]
        it += 1
        if pg_max - pg_min <= eps:
            converged = True
            break
    return w, it, converged


@njit(cache=True, nogil=True)
def _dcd_logistic(indptr, indices, data, y, n_cols, C, eps, max_iter, seed):
    # alpha[2i] is the dual variable of instance i, alpha[2i+1] = C - alpha[2i].
    l = y.size
    w = np.zeros(n_cols)
    alpha = np.empty(2 * l)
    xx = np.empty(l)
    a0 = min(0.001 * C, 1e-8)
    for i in range(l):
        alpha[2 * i] = a0
        alpha[2 * i + 1] = C - a0
        s = 0.0
        for p in range(indptr[i], indptr[i + 1]):
            s += data[p] * data[p]
            w[indices[p]] += y[i] * a0 * data[p]
        xx[i] = s
    np.random.seed(seed)
    order = np.arange(l)
    inner_eps = 1e-2
    inner_eps_min = min(1e-8, eps)
    max_inner = 100
    eta = 0.1
    it = 0
    converged = False
    while it < max_iter:
        np.random.shuffle(order)
        newton_iter = 0
        g_max = 0.0
        for s in range(l):
            i = order[s]
            yi = y[i]
            b = 0.0
            for p in range(indptr[i], indptr[i + 1]):
                b += w[indices[p]] * data[p]
            b *= yi
            a = xx[i]
            i1 = 2 * i
            i2 = 2 * i + 1
            sign = 1.0
            if 0.5 * a * (alpha[i2] - alpha[i1]) + b < 0.0:
                i1 = 2 * i + 1
                i2 = 2 * i
                sign = -1.0
            old = alpha[i1]
            z = old
            if C - z < 0.5 * C:
                z = 0.1 * z
            gp = a * (z - old) + sign * b + math.log(z / (C - z))
            if abs(gp) > g_max:
                g_max = abs(gp)
            inner = 0
            while inner <= max_inner:
                if abs(gp) < inner_eps:
                    break
                gpp = a + C / (C - z) / z
                tmp = z - gp / gpp
                if tmp <= 0.0:
                    z *= eta
                else:
                    z = tmp
                gp = a * (z - old) + sign * b + math.log(z / (C - z))
                newton_iter += 1
                inner += 1
            if inner > 0:
                alpha[i1] = z
                alpha[i2] = C - z
                d = sign * (z - old) * yi
                for p in range(indptr[i], indptr[i + 1]):
                    w[indices[p]] += d * data[p]
        it += 1
        if g_max < eps:
            converged = True
            break
        if newton_iter <= l // 10:
            inner_eps = max(inner_eps_min, 0.1 * inner_eps)
    return w, it, converged


_KERNELS = {"squared_hinge": _dcd_squared_hinge, "logistic": _dcd_logistic}


def _solve_local(sub: sp.csr_matrix, y: np.ndarray, loss: LossSpec, eps: float, max_iter: int,
                 seed: int) -> tuple[np.ndarray, int, bool]:
    """Run the kernel on a column-compacted CSR block; returns the local dense ``w``."""
    kernel = _KERNELS[loss.kind]
    return kernel(sub.indptr.astype(np.int64), sub.indices.astype(np.int64),
                  sub.data.astype(np.float64), y.astype(np.float64), sub.shape[1],
                  1.0 / loss.lam, float(eps), int(max_iter), int(seed % 2**32))


def _compact_block(dataset: MultiLabelDataset, rows: np.ndarray) -> tuple[sp.csr_matrix, np.ndarray]:
    """Rows of X restricted to their used columns, plus the local->global column map."""
    sub = dataset.X[rows]
    used = np.unique(sub.indices).astype(np.int64)
    local = sp.csr_matrix((sub.data, np.searchsorted(used, sub.indices), sub.indptr),
                          shape=(sub.shape[0], used.size))
    return local, used


def primal_objective(w: np.ndarray, X: sp.csr_matrix, y: np.ndarray, loss: LossSpec) -> float:
    """Dense-``w`` primal value, used for convergence checks and in tests."""
    margin = y * (X @ w)
    if loss.kind == "squared_hinge":
        data_term = np.sum(np.maximum(0.0, 1.0 - margin) ** 2)
    else:
        data_term = np.sum(np.logaddexp(0.0, -margin))
    return float(data_term + 0.5 * loss.lam * np.dot(w, w))


def solve_binary(problem: BinaryProblem, dataset: MultiLabelDataset, loss: LossSpec = LossSpec(),
                 eps: float = 0.1, max_iter: int = 1000, seed: int = 0) -> SparseVector:
    """Train one binary classifier; the weight vector is indexed in the original feature space.

    Emits :class:`ConvergenceWarning` and returns the current iterate if
    ``max_iter`` epochs pass without meeting ``eps``.
    """
    rows = np.asarray(problem.instance_indices, dtype=np.int64)
    if rows.size == 0:
        raise ValueError("binary problem has no instances")
    block, used = _compact_block(dataset, rows)
    w, _, converged = _solve_local(block, np.asarray(problem.signs, dtype=np.float64), loss, eps,
                                   max_iter, seed)
    if not converged:
        warnings.warn(f"solver hit max_iter={max_iter} for node {problem.node_id} child "
                      f"{problem.child_id}", ConvergenceWarning, stacklevel=2)
    keep = w != 0.0
    return SparseVector(used[keep], w[keep])


# ---------------------------------------------------------------- models


@dataclass
class LinearModel:
    """Weights of all classifiers as one CSR matrix (one row per classifier, n columns)."""

    W: sp.csr_matrix
    n_features: int
    n_labels: int
    loss: LossSpec
    n_unconverged: int = field(default=0, compare=False)

    kind = "base"

    @property
    def n_classifiers(self) -> int:
        return self.W.shape[0]

    @property
    def nnz(self) -> int:
        return int(self.W.nnz)

    def classifier(self, i: int) -> SparseVector:
        lo, hi = self.W.indptr[i], self.W.indptr[i + 1]
        return SparseVector(self.W.indices[lo:hi], self.W.data[lo:hi])

    def _same_weights(self, other) -> bool:
        a, b = self.W, other.W
        return (a.shape == b.shape and np.array_equal(a.indptr, b.indptr)
                and np.array_equal(a.indices, b.indices)
                and np.array_equal(a.data.view(np.uint64), b.data.view(np.uint64)))


@dataclass(eq=False)
class OvrModel(LinearModel):
    kind = "ovr"

    def __eq__(self, other):
        return (isinstance(other, OvrModel) and self.n_features == other.n_features
                and self.n_labels == other.n_labels and self.loss == other.loss
                and self._same_weights(other))


@dataclass(eq=False)
class TreeModel(LinearModel):
    tree: LabelTree | None = None

    kind = "tree"

    def edge_row(self, child_id: int) -> int:
        """Row of ``W`` holding the classifier for the edge into ``child_id``."""
        return child_id - 1

    def __eq__(self, other):
        return (isinstance(other, TreeModel) and self.n_features == other.n_features
                and self.n_labels == other.n_labels and self.loss == other.loss
                and self.tree == other.tree and self._same_weights(other))


def _stack(vectors: list[SparseVector], n_features: int) -> sp.csr_matrix:
    indptr = np.zeros(len(vectors) + 1, dtype=np.int64)
    indptr[1:] = np.cumsum([v.nnz for v in vectors])
    if vectors:
        indices = np.concatenate([v.indices for v in vectors]) if indptr[-1] else np.empty(0, np.int64)
        data = np.concatenate([v.values for v in vectors]) if indptr[-1] else np.empty(0)
    else:
        indices, data = np.empty(0, np.int64), np.empty(0)
    return sp.csr_matrix((data, indices.astype(np.int32 if n_features < 2**31 else np.int64), indptr),
                         shape=(len(vectors), n_features))


def build_node_problems(tree: LabelTree, node_id: int, dataset: MultiLabelDataset) -> list[BinaryProblem]:
    """One problem per child: the node's instances, +1 iff the instance has a label in the child."""
    node = tree.nodes[node_id]
    if node.is_leaf:
        raise ValueError(f"node {node_id} is a leaf")
    rows = instances_with_labels(dataset, node.labels)
    Y = dataset.Y[rows]
    problems = []
    for pos, cid in enumerate(node.children):
        cols = list(tree.nodes[cid].labels)
        hit = np.asarray(Y[:, cols].sum(axis=1)).ravel() > 0
        prob = BinaryProblem(rows, np.where(hit, 1.0, -1.0), node_id=node_id, child_id=cid)
        if prob.n_positive == 0:
            logger.info("node %d child %d has no positive instances", node_id, cid)
        problems.append(prob)
    return problems


def _run_block(block, used, sign_list, seeds, loss, eps, max_iter, pool):
    def one(args):
        y, s = args
        w, _, ok = _solve_local(block, y, loss, eps, max_iter, s)
        keep = w != 0.0
        return SparseVector(used[keep], w[keep]), ok

    jobs = list(zip(sign_list, seeds))
    return list(pool.map(one, jobs)) if pool else [one(j) for j in jobs]


def train_ovr(dataset: MultiLabelDataset, loss: LossSpec = LossSpec(), eps: float = 0.1,
              max_iter: int = 1000, seed: int = 0, n_jobs: int = 1) -> OvrModel:
    """L independent problems over all instances; label j's seed is derived from ``(seed, 0, j)``."""
    rows = np.arange(dataset.n_instances, dtype=np.int64)
    if rows.size == 0:
        raise ValueError("dataset has no instances")
    block, used = _compact_block(dataset, rows)
    Yc = dataset.label_columns
    signs = []
    for j in range(dataset.n_labels):
        y = -np.ones(rows.size)
        y[Yc.indices[Yc.indptr[j]:Yc.indptr[j + 1]]] = 1.0
        signs.append(y)
    seeds = [derive_seed(seed, 0, j) for j in range(dataset.n_labels)]
    pool = ThreadPoolExecutor(max_workers=n_jobs) if n_jobs > 1 else None
    try:
        out = _run_block(block, used, signs, seeds, loss, eps, max_iter, pool)
    finally:
        if pool:
            pool.shutdown()
    W = _stack([v for v, _ in out], dataset.n_features)
    bad = sum(1 for _, ok in out if not ok)
    if bad:
        warnings.warn(f"{bad} of {len(out)} problems hit max_iter", ConvergenceWarning, stacklevel=2)
    return OvrModel(W, dataset.n_features, dataset.n_labels, loss, n_unconverged=bad)


def train_tree(dataset: MultiLabelDataset, tree: LabelTree, loss: LossSpec = LossSpec(),
               eps: float = 0.1, max_iter: int = 1000, seed: int = 0, n_jobs: int = 1) -> TreeModel:
    """Train every edge classifier of ``tree`` on its node's instance subset.

    The edge into child position ``k`` of node ``u`` uses seed ``(seed, u, k)``;
    for a depth-1 tree this coincides with :func:`train_ovr` label by label.
    """
    if tree.n_labels != dataset.n_labels:
        raise ValueError("tree and dataset disagree on the number of labels")
    vectors: list[SparseVector | None] = [None] * tree.n_classifiers
    bad = 0
    empty = SparseVector(np.empty(0, np.int64), np.empty(0))
    pool = ThreadPoolExecutor(max_workers=n_jobs) if n_jobs > 1 else None
    try:
        for node in tree.internal_nodes():
            problems = build_node_problems(tree, node.id, dataset)
            rows = problems[0].instance_indices
            if rows.size == 0:
                for p in problems:
                    vectors[p.child_id - 1] = empty
                continue
            block, used = _compact_block(dataset, rows)
            seeds = [derive_seed(seed, node.id, k) for k in range(len(problems))]
            out = _run_block(block, used, [p.signs for p in problems], seeds, loss, eps, max_iter, pool)
            for p, (vec, ok) in zip(problems, out):
                vectors[p.child_id - 1] = vec
                bad += not ok
    finally:
        if pool:
            pool.shutdown()
    if bad:
        warnings.warn(f"{bad} of {tree.n_classifiers} problems hit max_iter", ConvergenceWarning,
                      stacklevel=2)
    W = _stack(vectors, dataset.n_features)
    return TreeModel(W, dataset.n_features, dataset.n_labels, loss, n_unconverged=bad, tree=tree)


# ---------------------------------------------------------------- size and pruning


def prune_weights(model: LinearModel, tau: float):
    """Copy of ``model`` with every weight in ``[-tau, tau]`` removed; survivors are untouched."""
    if tau < 0:
        raise ValueError("tau must be non-negative")
    W = model.W.tocoo()
    keep = np.abs(W.data) > tau
    Wp = sp.csr_matrix((W.data[keep], (W.row[keep], W.col[keep])), shape=W.shape)
    Wp.sort_indices()
    kwargs = dict(W=Wp, n_features=model.n_features, n_labels=model.n_labels, loss=model.loss,
                  n_unconverged=model.n_unconverged)
    if isinstance(model, TreeModel):
        return TreeModel(tree=model.tree, **kwargs)
    return type(model)(**kwargs)


def model_nnz(model: LinearModel) -> int:
    return model.nnz


def model_bytes(model: LinearModel) -> int:
    """Dense 8-byte accounting for OVR, 12 bytes (index + value) per stored weight for trees."""
    if isinstance(model, OvrModel):
        return model.n_features * model.n_labels * VALUE_BYTES
    return model.nnz * (INDEX_BYTES + VALUE_BYTES)
