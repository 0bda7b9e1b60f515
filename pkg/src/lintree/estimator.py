"""Estimator wrappers with the familiar ``fit`` / ``predict`` / ``get_params`` surface."""
from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from ._validation import check_dataset, check_features
from .analysis import estimate_tree_size
from .data import MultiLabelDataset, SparseVector
from .predict import precision_at_k, predict_ovr, predict_tree
from .solver import LossSpec, prune_weights, train_ovr, train_tree
from .tree import build_label_tree


class _LinearXMC(BaseEstimator):
    def _loss(self):
        return LossSpec(self.loss, self.lam)

    def _predict_one(self, x, k):
        raise NotImplementedError

    def predict_ranked(self, X, k: int = 5):
        """List of :class:`~lintree.predict.Prediction`, one per row of ``X``."""
        check_is_fitted(self, "model_")
        X = check_features(X, self.n_features_in_)
        out = []
        for i in range(X.shape[0]):
            lo, hi = X.indptr[i], X.indptr[i + 1]
            out.append(self._predict_one(SparseVector(X.indices[lo:hi], X.data[lo:hi]), k))
        return out

    def predict(self, X, k: int | None = None) -> np.ndarray:
        """Top-``k`` label indices per row, shape ``(n_rows, k)``."""
        k = self.top_k if k is None else k
        ranked = self.predict_ranked(X, k)
        return np.array([p.labels for p in ranked], dtype=np.int64).reshape(len(ranked), -1)

    def score(self, X, Y=None, k: int = 1) -> float:
        """Precision@k as a fraction in [0, 1]."""
        ds = check_dataset(X, Y, n_labels=self.n_labels_)
        preds = self.predict_ranked(ds.X, k)
        return precision_at_k(preds, ds.labels, (k,))[k] / 100.0

    def prune(self, tau: float = 0.1):
        """Zero every weight in ``[-tau, tau]`` in place; returns ``self``."""
        check_is_fitted(self, "model_")
        self.model_ = prune_weights(self.model_, tau)
        return self


class LabelTreeClassifier(_LinearXMC):
    """Label-tree linear classifier for sparse multi-label data.

    Parameters
    ----------
    K : int
        Clusters per split.
    d_max : int
        Maximum tree depth.
    loss : {"squared_hinge", "logistic"}
    lam : float
        L2 regularisation weight.
    eps, max_iter : float, int
        Dual coordinate descent stopping rule.
    beam_width : int
        Beam kept per depth at prediction time.
    top_k : int
        Default number of labels returned by :meth:`predict`.
    seed : int
    n_jobs : int

    Attributes
    ----------
    tree_ : LabelTree
    size_estimate_ : SizeEstimate
        Pre-training size bound computed from the tree alone.
    model_ : TreeModel
    """

    def __init__(self, K=100, d_max=10, loss="squared_hinge", lam=1.0, eps=0.1, max_iter=1000,
                 beam_width=10, top_k=5, seed=0, n_jobs=1):
        self.K = K
        self.d_max = d_max
        self.loss = loss
        self.lam = lam
        self.eps = eps
        self.max_iter = max_iter
        self.beam_width = beam_width
        self.top_k = top_k
        self.seed = seed
        self.n_jobs = n_jobs

    def fit(self, X, Y=None):
        ds = check_dataset(X, Y)
        self.tree_ = build_label_tree(ds, K=self.K, d_max=self.d_max, seed=self.seed, n_jobs=self.n_jobs)
        self.size_estimate_ = estimate_tree_size(ds, self.tree_)
        self.model_ = train_tree(ds, self.tree_, self._loss(), eps=self.eps, max_iter=self.max_iter,
                                 seed=self.seed, n_jobs=self.n_jobs)
        self.n_features_in_ = ds.n_features
        self.n_labels_ = ds.n_labels
        return self

    def _predict_one(self, x, k):
        return predict_tree(self.model_, x, beam_width=self.beam_width, k=k)


class LinearOVRClassifier(_LinearXMC):
    """One binary linear classifier per label, trained on every instance."""

    def __init__(self, loss="squared_hinge", lam=1.0, eps=0.1, max_iter=1000, top_k=5, seed=0,
                 n_jobs=1):
        self.loss = loss
        self.lam = lam
        self.eps = eps
        self.max_iter = max_iter
        self.top_k = top_k
        self.seed = seed
        self.n_jobs = n_jobs

    def fit(self, X, Y=None):
        ds: MultiLabelDataset = check_dataset(X, Y)
        self.model_ = train_ovr(ds, self._loss(), eps=self.eps, max_iter=self.max_iter,
                                seed=self.seed, n_jobs=self.n_jobs)
        self.n_features_in_ = ds.n_features
        self.n_labels_ = ds.n_labels
        return self

    def _predict_one(self, x, k):
        return predict_ovr(self.model_, x, k=k)
