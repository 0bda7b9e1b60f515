"""Input checks shared by the estimators."""
from __future__ import annotations

import numpy as np
import scipy.sparse as sp
from sklearn.utils.validation import check_array

from .data import MultiLabelDataset


def check_label_sets(Y, n_rows: int) -> list[tuple[int, ...]]:
    """Accept a sparse/dense 0-1 indicator matrix or a sequence of label iterables."""
    if sp.issparse(Y) or isinstance(Y, np.ndarray):
        Y = sp.csr_matrix(Y)
        if Y.shape[0] != n_rows:
            raise ValueError(f"Y has {Y.shape[0]} rows, X has {n_rows}")
        Y.eliminate_zeros()
        return [tuple(Y.indices[Y.indptr[i]:Y.indptr[i + 1]].tolist()) for i in range(n_rows)]
    sets = [tuple(int(j) for j in row) for row in Y]
    if len(sets) != n_rows:
        raise ValueError(f"Y has {len(sets)} rows, X has {n_rows}")
    return sets


def check_features(X, n_features: int | None = None) -> sp.csr_matrix:
    if isinstance(X, MultiLabelDataset):
        X = X.X
    X = check_array(X, accept_sparse="csr", dtype=np.float64)
    X = sp.csr_matrix(X)
    if n_features is not None and X.shape[1] > n_features:
        extra = X[:, n_features:]
        if extra.nnz:
            raise ValueError(f"X has features beyond the {n_features} seen during fit")
        X = X[:, :n_features]
    elif n_features is not None and X.shape[1] < n_features:
        X = sp.csr_matrix((X.data, X.indices, X.indptr), shape=(X.shape[0], n_features))
    return X


def check_dataset(X, Y=None, n_labels: int | None = None) -> MultiLabelDataset:
    """Coerce ``(X, Y)`` or a ready :class:`MultiLabelDataset` into a dataset."""
    if isinstance(X, MultiLabelDataset):
        if Y is not None:
            raise ValueError("pass either a MultiLabelDataset or (X, Y), not both")
        return X
    if Y is None:
        raise ValueError("Y is required when X is a matrix")
    X = check_features(X)
    labels = check_label_sets(Y, X.shape[0])
    if n_labels is None and (sp.issparse(Y) or isinstance(Y, np.ndarray)):
        n_labels = Y.shape[1]
    return MultiLabelDataset(X, labels, n_labels=n_labels)
