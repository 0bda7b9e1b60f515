"""Label trees: label representations, spherical k-means and recursive K-way partitioning."""
from __future__ import annotations

import json
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
import scipy.sparse as sp

from ._seeding import derive_seed
from .data import MultiLabelDataset


@dataclass(frozen=True)
class LabelRepresentations:
    """Row j is the L2-normalised sum of the feature vectors carrying label j."""

    V: sp.csr_matrix
    zero_rows: np.ndarray  # bool mask: labels without positive instances

    @property
    def n_labels(self) -> int:
        return self.V.shape[0]


def label_representations(dataset: MultiLabelDataset) -> LabelRepresentations:
    V = (dataset.Y.T.tocsr() @ dataset.X).tocsr()
    V.sort_indices()
    norms = np.sqrt(np.asarray(V.multiply(V).sum(axis=1)).ravel())
    zero = norms == 0.0
    scale = np.where(zero, 0.0, 1.0 / np.where(zero, 1.0, norms))
    V = sp.diags(scale) @ V
    V = sp.csr_matrix(V)
    V.eliminate_zeros()
    V.sort_indices()
    return LabelRepresentations(V, zero)


# ---------------------------------------------------------------- clustering


class ClusterFallbackWarning(UserWarning):
    pass


@dataclass
class ClusterResult:
    assignment: np.ndarray
    objective_history: list[float] = field(default_factory=list)
    n_iter: int = 0
    fallback: bool = False


def _normalize_rows(M: np.ndarray) -> np.ndarray:
    norms = np.linalg.norm(M, axis=1, keepdims=True)
    return np.divide(M, norms, out=np.zeros_like(M), where=norms > 0)


def _kmeanspp(sub: sp.csr_matrix, K: int, rng: np.random.Generator) -> np.ndarray:
    m = sub.shape[0]
    centers = np.empty((K, sub.shape[1]))
    first = int(rng.integers(m))
    centers[0] = sub[first].toarray().ravel()
    dist = np.clip(1.0 - sub @ centers[0], 0.0, None)
    for c in range(1, K):
        total = dist.sum()
        if total <= 0.0:
            pick = int(rng.integers(m))
        else:
            pick = int(np.searchsorted(np.cumsum(dist), rng.random() * total, side="right"))
            pick = min(pick, m - 1)
        centers[c] = sub[pick].toarray().ravel()
        dist = np.minimum(dist, np.clip(1.0 - sub @ centers[c], 0.0, None))
    return centers


def _fill_empty(assign: np.ndarray, sim: np.ndarray, centers: np.ndarray,
                sub: sp.csr_matrix, K: int) -> None:
    """Give every empty cluster the worst-fitting point of a cluster with >1 member."""
    counts = np.bincount(assign, minlength=K)
    for c in np.flatnonzero(counts == 0):
        fit = sim[np.arange(assign.size), assign].copy()
        fit[counts[assign] <= 1] = np.inf
        p = int(np.argmin(fit))
        counts[assign[p]] -= 1
        assign[p] = c
        counts[c] = 1
        centers[c] = sub[p].toarray().ravel()
        sim[:, c] = sub @ centers[c]


def spherical_kmeans(V: LabelRepresentations | sp.csr_matrix, rows: Sequence[int], K: int,
                     seed: int = 0, max_iter: int = 300, tol: float = 1e-4,
                     return_info: bool = False):
    """Partition ``rows`` of ``V`` into ``K`` non-empty clusters by cosine similarity.

    k-means++ seeding, Lloyd iterations on normalised centroids, ties broken
    toward the lowest cluster index.  Zero rows are dealt to the smallest
    cluster after convergence.  If there are fewer distinct non-zero rows than
    ``K`` the rows are dealt round-robin instead (flagged via a warning and
    ``ClusterResult.fallback``).
    """
    if K < 2:
        raise ValueError("K must be at least 2")
    rows = np.asarray(rows, dtype=np.int64)
    if rows.size <= K:
        raise ValueError(f"need more than K={K} rows, got {rows.size}")
    M = V.V if isinstance(V, LabelRepresentations) else sp.csr_matrix(V)
    sub = M[rows]
    nz = np.diff(sub.indptr) > 0
    nz_idx = np.flatnonzero(nz)
    result = ClusterResult(np.zeros(rows.size, dtype=np.int64))

    distinct = {(sub[i].indices.tobytes(), sub[i].data.tobytes()) for i in nz_idx.tolist()}
    if len(distinct) < K:
        warnings.warn(f"only {len(distinct)} distinct rows for K={K}; dealing round-robin",
                      ClusterFallbackWarning, stacklevel=2)
        result.assignment = np.arange(rows.size, dtype=np.int64) % K
        result.fallback = True
        return result if return_info else result.assignment

    rng = np.random.default_rng(seed)
    X = sub[nz_idx]
    centers = _kmeanspp(X, K, rng)
    assign = None
    prev = np.inf
    for it in range(1, max_iter + 1):
        sim = np.asarray(X @ centers.T)
        new_assign = np.argmax(sim, axis=1)
        _fill_empty(new_assign, sim, centers, X, K)
        obj = float(np.sum(1.0 - sim[np.arange(new_assign.size), new_assign]))
        result.objective_history.append(obj)
        result.n_iter = it
        unchanged = assign is not None and np.array_equal(assign, new_assign)
        assign = new_assign
        if unchanged or prev - obj < tol:
            break
        prev = obj
        member = sp.csr_matrix((np.ones(assign.size), (assign, np.arange(assign.size))),
                               shape=(K, assign.size))
        sums = (member @ X).toarray()
        new_centers = _normalize_rows(sums)
        dead = ~np.any(new_centers, axis=1)
        new_centers[dead] = centers[dead]
        centers = new_centers

    full = np.full(rows.size, -1, dtype=np.int64)
    full[nz_idx] = assign
    counts = np.bincount(assign, minlength=K)
    for i in np.flatnonzero(~nz).tolist():
        c = int(np.argmin(counts))
        full[i] = c
        counts[c] += 1
    result.assignment = full
    return result if return_info else result.assignment


# ---------------------------------------------------------------- tree


@dataclass
class TreeNode:
    id: int
    depth: int
    labels: tuple[int, ...]
    children: list[int] = field(default_factory=list)
    parent: int | None = None

    @property
    def is_leaf(self) -> bool:
        return not self.children

    @property
    def label(self) -> int:
        if not self.is_leaf:
            raise AttributeError("internal nodes carry a label subset, not a label")
        return self.labels[0]


class LabelTree:
    """K-ary label partition with nodes numbered breadth-first.

    Because ids are assigned level by level, the children of every node have
    consecutive ids, and the classifier for the edge into node ``c`` is stored
    at row ``c - 1`` of the weight matrix.
    """

    def __init__(self, nodes: list[TreeNode], n_labels: int, K: int, d_max: int):
        self.nodes = nodes
        self.n_labels = int(n_labels)
        self.K = int(K)
        self.d_max = int(d_max)
        self._check()

    def _check(self):
        seen = []
        for node in self.nodes:
            if node.children:
                ids = node.children
                if ids != list(range(ids[0], ids[0] + len(ids))):
                    raise ValueError(f"children of node {node.id} are not consecutive")
                merged = sorted(lab for c in ids for lab in self.nodes[c].labels)
                if merged != sorted(node.labels):
                    raise ValueError(f"children of node {node.id} do not partition its labels")
            else:
                if len(node.labels) != 1:
                    raise ValueError(f"leaf {node.id} must hold exactly one label")
                seen.append(node.labels[0])
        if sorted(seen) != list(range(self.n_labels)):
            raise ValueError("leaves must cover every label exactly once")

    @property
    def root(self) -> TreeNode:
        return self.nodes[0]

    @property
    def depth(self) -> int:
        return max(node.depth for node in self.nodes)

    @property
    def n_nodes(self) -> int:
        return len(self.nodes)

    @property
    def n_meta_labels(self) -> int:
        return sum(1 for node in self.nodes[1:] if not node.is_leaf)

    @property
    def n_classifiers(self) -> int:
        return len(self.nodes) - 1

    def internal_nodes(self) -> list[TreeNode]:
        return [node for node in self.nodes if not node.is_leaf]

    def leaves(self) -> list[TreeNode]:
        return [node for node in self.nodes if node.is_leaf]

    def leaf_of_label(self) -> np.ndarray:
        out = np.empty(self.n_labels, dtype=np.int64)
        for node in self.leaves():
            out[node.label] = node.id
        return out

    # -- construction helpers

    @classmethod
    def from_partition(cls, partition, n_labels: int | None = None, K: int | None = None,
                       d_max: int | None = None) -> "LabelTree":
        """Build a tree from nested lists, e.g. ``[[0, 1, 2], [3, 4], [[5, 6], 7, 8]]``.

        An int is a leaf; a list is a node whose children are its elements.
        """
        def labels_of(item):
            return (item,) if isinstance(item, (int, np.integer)) else tuple(
                lab for sub in item for lab in labels_of(sub))

        root_labels = tuple(sorted(labels_of(partition)))
        nodes = [TreeNode(0, 0, root_labels)]
        queue = [(0, partition)]
        while queue:
            nxt = []
            for node_id, item in queue:
                if isinstance(item, (int, np.integer)):
                    continue
                for child in item:
                    cid = len(nodes)
                    nodes.append(TreeNode(cid, nodes[node_id].depth + 1,
                                          tuple(sorted(labels_of(child))), parent=node_id))
                    nodes[node_id].children.append(cid)
                    nxt.append((cid, child))
            queue = nxt
        n_labels = len(root_labels) if n_labels is None else n_labels
        depth = max(node.depth for node in nodes)
        widest = max((len(node.children) for node in nodes), default=0)
        return cls(nodes, n_labels, K if K is not None else widest, d_max if d_max is not None else depth)

    # -- serialisation

    def to_dict(self) -> dict:
        return {
            "n_labels": self.n_labels,
            "K": self.K,
            "d_max": self.d_max,
            "nodes": [{"id": n.id, "depth": n.depth, "children": list(n.children),
                       "labels": list(n.labels)} for n in self.nodes],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), separators=(",", ":"))

    @classmethod
    def from_dict(cls, doc: dict) -> "LabelTree":
        nodes = [TreeNode(int(d["id"]), int(d["depth"]), tuple(int(x) for x in d["labels"]),
                          [int(c) for c in d["children"]]) for d in doc["nodes"]]
        for pos, node in enumerate(nodes):
            if node.id != pos:
                raise ValueError("node ids must be 0..N-1 in order")
            for c in node.children:
                nodes[c].parent = node.id
        return cls(nodes, doc["n_labels"], doc["K"], doc["d_max"])

    @classmethod
    def from_json(cls, text: str) -> "LabelTree":
        return cls.from_dict(json.loads(text))

    def __eq__(self, other):
        return isinstance(other, LabelTree) and self.to_dict() == other.to_dict()

    def __repr__(self):
        return (f"LabelTree(n_labels={self.n_labels}, K={self.K}, d_max={self.d_max}, "
                f"depth={self.depth}, n_nodes={self.n_nodes})")


ClusterFn = Callable[[LabelRepresentations, np.ndarray, int, int], np.ndarray]


def _default_cluster(reps, rows, K, seed):
    return spherical_kmeans(reps, rows, K, seed=seed)


def build_label_tree(dataset: MultiLabelDataset, K: int = 100, d_max: int = 10, seed: int = 0,
                     n_jobs: int = 1, cluster_fn: ClusterFn | None = None,
                     reps: LabelRepresentations | None = None) -> LabelTree:
    """Recursively split labels into ``K`` clusters until a node holds <= K labels
    or sits at depth ``d_max - 1``; such a node gets one leaf child per label.

    ``cluster_fn(reps, rows, K, seed)`` replaces spherical k-means (used for
    constructing idealised trees in tests).  Each node's clustering seed is
    derived from ``(seed, node id)``.
    """
    if K < 2:
        raise ValueError("K must be at least 2")
    if d_max < 1:
        raise ValueError("d_max must be at least 1")
    L = dataset.n_labels
    if L < 1:
        raise ValueError("dataset has no labels")
    reps = label_representations(dataset) if reps is None else reps
    cluster_fn = cluster_fn or _default_cluster

    nodes = [TreeNode(0, 0, tuple(range(L)))]
    level = [0]

    def split(node_id: int) -> list[tuple[int, ...]]:
        node = nodes[node_id]
        labs = node.labels
        if len(labs) <= K or node.depth >= d_max - 1:
            return [(lab,) for lab in labs]
        rows = np.asarray(labs, dtype=np.int64)
        assign = np.asarray(cluster_fn(reps, rows, K, derive_seed(seed, node_id)))
        return [tuple(rows[assign == c].tolist()) for c in range(K) if np.any(assign == c)]

    pool = ThreadPoolExecutor(max_workers=n_jobs) if n_jobs > 1 else None
    try:
        while level:
            parts = list(pool.map(split, level)) if pool else [split(i) for i in level]
            nxt = []
            for node_id, groups in zip(level, parts):
                parent = nodes[node_id]
                for group in groups:
                    cid = len(nodes)
                    nodes.append(TreeNode(cid, parent.depth + 1, group, parent=node_id))
                    parent.children.append(cid)
                    if len(group) > 1:
                        nxt.append(cid)
            level = nxt
    finally:
        if pool:
            pool.shutdown()
    return LabelTree(nodes, L, K, d_max)


@dataclass(frozen=True)
class DepthSummary:
    depth: int
    n_nodes: int
    n_internal: int
    n_leaves: int
    children_per_node: tuple[int, ...]
    labels_per_node: tuple[int, ...]


def tree_summary(tree: LabelTree) -> list[DepthSummary]:
    """One row per depth: node counts plus children and label counts of each node."""
    rows = []
    for depth in range(tree.depth + 1):
        at = [n for n in tree.nodes if n.depth == depth]
        rows.append(DepthSummary(
            depth=depth,
            n_nodes=len(at),
            n_internal=sum(1 for n in at if not n.is_leaf),
            n_leaves=sum(1 for n in at if n.is_leaf),
            children_per_node=tuple(len(n.children) for n in at),
            labels_per_node=tuple(len(n.labels) for n in at),
        ))
    return rows
