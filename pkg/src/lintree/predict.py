"""Top-k inference for OVR and tree models, and precision@k."""
from __future__ import annotations

import heapq
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np
import scipy.sparse as sp

from .data import MultiLabelDataset, SparseVector
from .solver import LinearModel, OvrModel, TreeModel


@dataclass(frozen=True)
class Prediction:
    labels: tuple[int, ...]
    scores: tuple[float, ...]

    def __len__(self):
        return len(self.labels)

    def format(self, label_base: int = 0) -> str:
        return " ".join(f"{lab + label_base}:{s:.6f}" for lab, s in zip(self.labels, self.scores))


def log_sigmoid(z):
    return -np.logaddexp(0.0, -np.asarray(z, dtype=np.float64))


class _ColumnCache:
    """Per-model CSC copy of W so that scoring one instance touches only its features' columns."""

    def __init__(self):
        self._key = None
        self._csc = None

    def get(self, model: LinearModel) -> sp.csc_matrix:
        if self._key is not model.W:
            self._key = model.W
            self._csc = model.W.tocsc()
        return self._csc


_cache = _ColumnCache()


def _scores(model: LinearModel, x: SparseVector) -> np.ndarray:
    """``W x`` for every classifier."""
    if x.nnz == 0:
        return np.zeros(model.n_classifiers)
    keep = x.indices < model.n_features
    idx, val = x.indices[keep], x.values[keep]
    Wc = _cache.get(model)
    return np.asarray(Wc[:, idx] @ val).ravel()


def _rank(labels: np.ndarray, scores: np.ndarray, k: int) -> Prediction:
    order = np.lexsort((labels, -scores))[:k]
    return Prediction(tuple(labels[order].tolist()), tuple(scores[order].tolist()))


def predict_ovr(model: OvrModel, x: SparseVector, k: int = 5) -> Prediction:
    """Labels ranked by decision value, ties to the lowest label index."""
    z = _scores(model, x)
    return _rank(np.arange(model.n_labels), z, min(k, model.n_labels))


def predict_tree(model: TreeModel, x: SparseVector, beam_width: int = 10, k: int = 5) -> Prediction:
    """Level-wise beam search with path score ``sum log sigmoid(w.x)`` along the edges.

    Leaves reached at any depth enter the result pool; the ``beam_width``
    best internal nodes of each depth are expanded further.
    """
    if beam_width < 1:
        raise ValueError("beam_width must be at least 1")
    tree = model.tree
    edge = log_sigmoid(_scores(model, x))
    nodes = tree.nodes
    frontier = [(0.0, 0)]
    leaf_labels, leaf_scores = [], []
    while frontier:
        candidates = []
        for score, u in frontier:
            for c in nodes[u].children:
                s = score + edge[c - 1]
                if nodes[c].is_leaf:
                    leaf_labels.append(nodes[c].label)
                    leaf_scores.append(s)
                else:
                    candidates.append((-s, nodes[c].labels[0], c))
        best = heapq.nsmallest(beam_width, candidates)
        frontier = [(-neg, c) for neg, _, c in best]
    return _rank(np.asarray(leaf_labels, dtype=np.int64), np.asarray(leaf_scores), min(k, tree.n_labels))


def predict(model: LinearModel, x: SparseVector, k: int = 5, beam_width: int = 10) -> Prediction:
    if isinstance(model, TreeModel):
        return predict_tree(model, x, beam_width=beam_width, k=k)
    return predict_ovr(model, x, k=k)


def predict_dataset(model: LinearModel, dataset: MultiLabelDataset, k: int = 5,
                    beam_width: int = 10) -> list[Prediction]:
    return [predict(model, dataset.row(i), k=k, beam_width=beam_width)
            for i in range(dataset.n_instances)]


def precision_at_k(predictions: Sequence[Prediction | Sequence[int]],
                   true_labels: Sequence[Iterable[int]], k_values=(1, 3, 5)) -> dict[int, float]:
    """Mean over instances of ``|top-k ∩ true| / k``, as a percentage."""
    if len(predictions) == 0:
        raise ValueError("empty test set")
    if len(predictions) != len(true_labels):
        raise ValueError("predictions and true labels differ in length")
    out = {}
    for k in k_values:
        hits = 0
        for pred, truth in zip(predictions, true_labels):
            ranked = pred.labels if isinstance(pred, Prediction) else tuple(pred)
            if k > len(ranked):
                raise ValueError(f"k={k} exceeds prediction length {len(ranked)}")
            hits += len(set(ranked[:k]) & set(truth))
        out[k] = 100.0 * hits / (k * len(predictions))
    return out


def format_metrics(metrics: dict[int, float]) -> str:
    return "\n".join(f"P@{k} {v:.2f}" for k, v in sorted(metrics.items()))
