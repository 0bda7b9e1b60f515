"""Generators for block-sparse multi-label datasets."""
from __future__ import annotations

import numpy as np
import scipy.sparse as sp

from .data import MultiLabelDataset


def make_block_dataset(n_instances: int = 2000, n_features: int = 5000, n_labels: int = 200,
                       n_groups: int = 20, nnz_per_row: int = 20, shared_features: int = 50,
                       shared_fraction: float = 0.1, max_labels: int = 3, zipf: float | None = None,
                       seed: int = 0) -> MultiLabelDataset:
    """Labels fall into ``n_groups`` topics, each owning a private feature block.

    Every instance picks one topic, 1..``max_labels`` labels inside it, and
    about ``nnz_per_row`` features: mostly from the topic block, the rest
    (``shared_fraction``) from a small block shared by all topics.  With
    ``zipf`` set, feature draws inside a block follow a Zipf-like law, which
    gives the heavy-tailed term frequencies of text data.
    """
    rng = np.random.default_rng(seed)
    if n_labels < n_groups:
        raise ValueError("need at least one label per group")
    private = n_features - shared_features
    if private < n_groups:
        raise ValueError("too few features for the requested groups")
    label_group = np.arange(n_labels) % n_groups
    feat_edges = np.linspace(0, private, n_groups + 1).astype(np.int64) + shared_features

    def draw(lo, hi, size):
        width = hi - lo
        if zipf is None:
            return lo + rng.integers(width, size=size)
        ranks = np.arange(1, width + 1, dtype=np.float64)
        p = ranks ** -zipf
        return lo + rng.choice(width, size=size, p=p / p.sum())

    rows, cols, vals, labels = [], [], [], []
    for i in range(n_instances):
        g = int(rng.integers(n_groups))
        members = np.flatnonzero(label_group == g)
        n_lab = int(rng.integers(1, min(max_labels, members.size) + 1))
        labels.append(sorted(rng.choice(members, size=n_lab, replace=False).tolist()))
        n_shared = int(rng.binomial(nnz_per_row, shared_fraction)) if shared_features else 0
        own = draw(feat_edges[g], feat_edges[g + 1], nnz_per_row - n_shared)
        common = rng.integers(shared_features, size=n_shared) if n_shared else np.empty(0, np.int64)
        feats = np.unique(np.concatenate([own, common]))
        rows.append(np.full(feats.size, i))
        cols.append(feats)
        vals.append(rng.random(feats.size) + 0.1)
    X = sp.csr_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                      shape=(n_instances, n_features))
    # tf-idf style row normalisation
    norms = np.sqrt(np.asarray(X.multiply(X).sum(axis=1)).ravel())
    X = sp.diags(1.0 / np.where(norms > 0, norms, 1.0)) @ X
    return MultiLabelDataset(X, labels, n_labels=n_labels, n_features=n_features)
