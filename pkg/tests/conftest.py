import numpy as np
import pytest
import scipy.sparse as sp

from lintree import LabelTree, MultiLabelDataset
from lintree.synthetic import make_block_dataset


def dataset_from_rows(rows, labels, n_features=None, n_labels=None):
    """Build a dataset from ``[{feature: value}, ...]`` dicts."""
    r, c, v = [], [], []
    for i, row in enumerate(rows):
        for f, val in sorted(row.items()):
            r.append(i)
            c.append(f)
            v.append(val)
    n = n_features if n_features is not None else (max(c) + 1 if c else 0)
    X = sp.csr_matrix((v, (r, c)), shape=(len(rows), n))
    return MultiLabelDataset(X, labels, n_labels=n_labels, n_features=n)


def nine_label_tree():
    """Labels 0..8 split {0,1,2} {3,4} {5,6,7,8}, the last one again into {5,6} 7 8."""
    return LabelTree.from_partition([[0, 1, 2], [3, 4], [[5, 6], 7, 8]])


def alpha_example():
    """Ten labels under three meta-labels using feature ranges 0-9, 0-29 and 20-99.

    The root therefore sees 100 features; the meta-label children have 2, 2 and 6
    leaves, so their used counts are 10, 30 and 80.
    """
    groups = [(range(0, 10), [0, 1]), (range(0, 30), [2, 3]), (range(20, 100), [4, 5, 6, 7, 8, 9])]
    rows, labels = [], []
    for feats, labs in groups:
        feats = list(feats)
        chunks = np.array_split(feats, len(labs))
        for lab, chunk in zip(labs, chunks):
            rows.append({int(f): 1.0 + 0.01 * int(f) for f in chunk})
            labels.append([lab])
    ds = dataset_from_rows(rows, labels, n_features=100, n_labels=10)
    tree = LabelTree.from_partition([[0, 1], [2, 3], [4, 5, 6, 7, 8, 9]])
    return ds, tree


@pytest.fixture
def nine_tree():
    return nine_label_tree()


@pytest.fixture(scope="session")
def block_data():
    return make_block_dataset(n_instances=400, n_features=1200, n_labels=60, n_groups=6,
                              nnz_per_row=15, shared_features=20, seed=3)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
