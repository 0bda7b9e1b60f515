"""Model-size theory for balanced label trees and empirical size/alpha accounting.

Analytic functions work on a K-ary tree of depth d whose used-feature count
shrinks by a factor ``alpha`` per level.  The empirical functions measure the
same quantities on a concrete dataset and tree before any training happens.
"""
from __future__ import annotations

import logging
import math
import warnings
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from .data import MultiLabelDataset, instances_with_labels, used_features
from .tree import LabelTree

logger = logging.getLogger(__name__)

EXCEPTIONAL_WINDOW = 1e-12
BISECTION_TOL = 1e-9
INDEX_OVERHEAD = 1.5  # (4-byte index + 8-byte value) / 8-byte dense value


# ---------------------------------------------------------------- balanced trees


def max_depth_D(L, K) -> int:
    """Largest D with ``L / K**(D-1) >= 2``, found by exact integer search."""
    L, K = _as_int(L, "L"), _as_int(K, "K")
    if L < 2:
        raise ValueError("L must be at least 2")
    if K < 2:
        raise ValueError("K must be at least 2")
    D = 1
    while L >= 2 * K**D:
        D += 1
    closed = math.floor(1 + math.log(L / 2) / math.log(K))
    if closed != D:
        logger.debug("log formula gives D=%d for L=%d K=%d; integer search gives %d", closed, L, K, D)
    return D


def _as_int(x, name):
    if isinstance(x, float):
        if not x.is_integer():
            raise ValueError(f"{name} must be integral, got {x}")
        return int(x)
    return int(x)


@dataclass(frozen=True)
class BalancedTreeParams:
    L: float
    K: int
    d: int
    alpha: float
    n: float = 1.0

    def __post_init__(self):
        if self.K < 2:
            raise ValueError("K must be at least 2")
        if not 0 < self.alpha <= 1:
            raise ValueError("alpha must lie in (0, 1]")
        if self.d < 2:
            raise ValueError("d must be at least 2")
        D = max_depth_D(self.L, self.K)
        if self.d > D:
            warnings.warn(f"d={self.d} exceeds the maximum balanced depth D={D}", stacklevel=2)
        if self.alpha < 1 / self.K:
            warnings.warn(f"alpha={self.alpha} < 1/K: no uniform balanced tree realises it",
                          stacklevel=2)

    @property
    def D(self) -> int:
        return max_depth_D(self.L, self.K)


def _k_alpha_minus_one(K, alpha) -> float:
    # Exact in rationals: K*alpha - 1 loses all relative precision near K*alpha == 1.
    return float(Fraction(K) * Fraction(alpha) - 1)


def _geometric(K, alpha, m: int) -> float:
    """``((K alpha)^m - 1) / (K alpha - 1)``, or ``m`` in the ``K alpha == 1`` window."""
    delta = _k_alpha_minus_one(K, alpha)
    if abs(delta) <= EXCEPTIONAL_WINDOW:
        return float(m)
    return math.expm1(m * math.log1p(delta)) / delta


def balanced_tree_nnz(params: BalancedTreeParams) -> float:
    """Non-zero weights of a balanced tree: ``Kn G + L alpha^(d-1) n`` with G the geometric factor."""
    p = params
    return p.K * p.n * _geometric(p.K, p.alpha, p.d - 1) + p.L * p.alpha ** (p.d - 1) * p.n


def balanced_ratio(params: BalancedTreeParams) -> float:
    """``balanced_tree_nnz / (L n)``: tree non-zeros relative to a dense OVR model."""
    p = params
    return p.K * _geometric(p.K, p.alpha, p.d - 1) / p.L + p.alpha ** (p.d - 1)


@dataclass(frozen=True)
class DepthRow:
    depth: int
    n_nodes: float
    children_per_node: float
    features: float


def depth_table(params: BalancedTreeParams) -> list[DepthRow]:
    """Per-depth counts of the idealised tree (depth 0 .. d-1)."""
    p = params
    rows = [DepthRow(i, float(p.K) ** i, float(p.K), p.alpha**i * p.n) for i in range(p.d - 1)]
    last = p.d - 1
    rows.append(DepthRow(last, float(p.K) ** last, p.L / float(p.K) ** last, p.alpha**last * p.n))
    return rows


def balanced_tree_nnz_by_depth(params: BalancedTreeParams) -> float:
    """Explicit sum of ``nodes * children * features`` over :func:`depth_table`."""
    return math.fsum(r.n_nodes * r.children_per_node * r.features for r in depth_table(params))


def ratio_curve(L, K, depths, alphas) -> list[tuple[int, float, float]]:
    """``(d, alpha, ratio)`` rows for every valid depth and alpha."""
    out = []
    for alpha in alphas:
        for d in depths:
            p = BalancedTreeParams(L, K, d, alpha)
            out.append((d, float(alpha), balanced_ratio(p)))
    return out


# ---------------------------------------------------------------- guarantees


def sub_dense_alpha_bound(K: int, d: int, D: int) -> float:
    """Threshold below which the balanced ratio is guaranteed to be < 1.

    ``d == 2``: ``1 - 1/(2 K^(D-2))``.  ``d > 2`` (requires ``K >= 4``):
    ``max(2/K, a*)`` where ``a*`` solves ``a^(d-2) (K^(d-D) + a) = 1`` on (0, 1).
    The returned root is the lower end of the bisection bracket, so it never
    exceeds the true root.
    """
    if not 2 <= d <= D:
        raise ValueError(f"need 2 <= d <= D, got d={d}, D={D}")
    if d == 2:
        return 1.0 - 1.0 / (2.0 * float(K) ** (D - 2))
    if K < 4:
        raise ValueError("the d > 2 bound needs K >= 4")
    shift = float(K) ** (d - D)

    def f(a):
        return a ** (d - 2) * (shift + a) - 1.0

    lo, hi = 0.0, 1.0
    while hi - lo > BISECTION_TOL:
        mid = 0.5 * (lo + hi)
        if f(mid) < 0:
            lo = mid
        else:
            hi = mid
    return max(2.0 / K, lo)


@dataclass(frozen=True)
class DepthDecreaseClaim:
    alpha_threshold: float
    d_range: tuple[int, int] | None  # inclusive; None when D < 4


def depth_decrease_claim(K: int, L) -> DepthDecreaseClaim:
    D = max_depth_D(L, K)
    rng = (2, D - 2) if D >= 4 else None
    return DepthDecreaseClaim(1.0 - 1.0 / (2.0 * K), rng)


def depth_decrease_holds(K: int, L, alpha: float) -> bool | None:
    """Whether ratio(d) > ratio(d+1) over the claimed range; ``None`` when the claim does not apply."""
    claim = depth_decrease_claim(K, L)
    if claim.d_range is None or alpha >= claim.alpha_threshold:
        return None
    lo, hi = claim.d_range
    ratios = [balanced_ratio(BalancedTreeParams(L, K, d, alpha)) for d in range(lo, hi + 2)]
    return all(a > b for a, b in zip(ratios, ratios[1:]))


def alpha_feasible(alpha: float, K: int) -> bool:
    return alpha >= 1.0 / K


# ---------------------------------------------------------------- training time


@dataclass(frozen=True)
class CostParams:
    ell: float
    nbar: float
    c: float = 1.0
    kmeans_iters: float = 1.0
    nnz_V: float | None = None  # defaults to ell * nbar * c * log L

    def __post_init__(self):
        for name in ("ell", "nbar", "c", "kmeans_iters"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")


@dataclass(frozen=True)
class CostBreakdown:
    ovr_cost: float
    tree_root: float
    tree_middle: float
    n_middle: int
    tree_last: float
    kmeans_cost: float
    tree_train: float
    inner_term: float
    tree_total: float


def training_cost_estimate(L, K: int, d: int, cost: CostParams) -> CostBreakdown:
    """Big-O cost terms with unit constants, in feature-value touches (natural log).

    ``tree_train`` sums the per-depth pieces (root, ``d-2`` middle depths,
    last depth); ``tree_total`` is the compact form
    ``ell * nbar * log L * (K (d-1) + L / K^(d-1))``.
    """
    if d < 2:
        raise ValueError("d must be at least 2")
    logL = math.log(L)
    base = cost.ell * cost.nbar
    root = K * base
    middle = K * base * cost.c * logL
    last = (L / float(K) ** (d - 1)) * base * cost.c * logL
    nnz_v = cost.nnz_V if cost.nnz_V is not None else base * cost.c * logL
    inner = K * (d - 1) + L / float(K) ** (d - 1)
    return CostBreakdown(
        ovr_cost=L * base,
        tree_root=root,
        tree_middle=middle,
        n_middle=d - 2,
        tree_last=last,
        kmeans_cost=nnz_v * K * cost.kmeans_iters * d,
        tree_train=root + (d - 2) * middle + last,
        inner_term=inner,
        tree_total=base * logL * inner,
    )


# ---------------------------------------------------------------- empirical size


def node_used_counts(dataset: MultiLabelDataset, tree: LabelTree) -> dict[int, int]:
    """Used-feature count for every internal node."""
    return {node.id: used_features(dataset, instances_with_labels(dataset, node.labels)).count
            for node in tree.internal_nodes()}


@dataclass(frozen=True)
class NodeSize:
    node: int
    depth: int
    children: int
    used_features: int


@dataclass(frozen=True)
class SizeEstimate:
    per_node: tuple[NodeSize, ...]
    n_features: int
    n_labels: int
    tree_nnz_bound: int
    tree_bytes: int
    ovr_bytes: int
    ratio: float
    raw_ratio: float


def estimate_tree_size(dataset: MultiLabelDataset, tree: LabelTree,
                       used: dict[int, int] | None = None) -> SizeEstimate:
    """Upper bound on tree non-zeros as ``sum_u children(u) * used(u)``, plus byte accounting."""
    used = node_used_counts(dataset, tree) if used is None else used
    per_node = tuple(NodeSize(node.id, node.depth, len(node.children), used[node.id])
                     for node in tree.internal_nodes())
    bound = sum(ns.children * ns.used_features for ns in per_node)
    n, L = dataset.n_features, dataset.n_labels
    dense = n * L
    return SizeEstimate(
        per_node=per_node,
        n_features=n,
        n_labels=L,
        tree_nnz_bound=bound,
        tree_bytes=12 * bound,
        ovr_bytes=8 * dense,
        ratio=INDEX_OVERHEAD * bound / dense if dense else math.nan,
        raw_ratio=bound / dense if dense else math.nan,
    )


@dataclass
class AlphaStats:
    per_node: dict[int, float]
    weighted_avg: dict[int, float]
    histograms: dict[int, np.ndarray]
    bin_edges: np.ndarray
    skipped: list[int] = field(default_factory=list)


def alpha_stats(dataset: MultiLabelDataset, tree: LabelTree, bin_width: float = 0.05,
                used: dict[int, int] | None = None) -> AlphaStats:
    """Per-node reduction ratios ``used(u) / used(parent)`` and their child-weighted depth means.

    Ratios are kept as exact fractions until the final conversion so that
    averages of simple counts come out exact.
    """
    used = node_used_counts(dataset, tree) if used is None else used
    n_bins = int(round(1.0 / bin_width))
    edges = np.linspace(0.0, 1.0, n_bins + 1)
    exact: dict[int, Fraction] = {}
    skipped = []
    for node in tree.internal_nodes():
        if node.parent is None:
            continue
        parent_used = used[node.parent]
        if parent_used == 0:
            warnings.warn(f"parent of node {node.id} uses no features; alpha undefined", stacklevel=2)
            skipped.append(node.id)
            continue
        exact[node.id] = Fraction(used[node.id], parent_used)

    by_depth: dict[int, list[int]] = {}
    for nid in exact:
        by_depth.setdefault(tree.nodes[nid].depth, []).append(nid)
    weighted, hists = {}, {}
    for depth, ids in sorted(by_depth.items()):
        weights = [len(tree.nodes[i].children) for i in ids]
        total = sum(exact[i] * w for i, w in zip(ids, weights))
        weighted[depth] = float(total / sum(weights))
        hists[depth], _ = np.histogram([float(exact[i]) for i in ids], bins=edges)
    return AlphaStats({k: float(v) for k, v in exact.items()}, weighted, hists, edges, skipped)
