import itertools
import warnings

import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import HealthCheck, given, settings
from hypothesis import strategies as st

from lintree.data import instances_with_labels, used_features
from lintree.synthetic import make_block_dataset
from lintree.tree import (
    ClusterFallbackWarning,
    LabelTree,
    build_label_tree,
    label_representations,
    spherical_kmeans,
    tree_summary,
)

from conftest import dataset_from_rows, nine_label_tree


# ------------------------------------------------------------------ representations

def test_label_representation_sums_and_normalises():
    ds = dataset_from_rows([{0: 3.0}, {0: 1.0, 1: 4.0}, {1: 2.0}], [[0], [0], [1]], n_labels=3)
    reps = label_representations(ds)
    v0 = reps.V[0].toarray().ravel()
    np.testing.assert_allclose(v0, [np.sqrt(0.5), np.sqrt(0.5)], atol=1e-12)
    # a single instance: x / ||x||
    np.testing.assert_allclose(reps.V[1].toarray().ravel(), [0.0, 1.0])
    # label 2 has no positives
    assert reps.zero_rows.tolist() == [False, False, True]
    assert reps.V[2].nnz == 0


def test_nonzero_representations_have_unit_norm(block_data):
    reps = label_representations(block_data)
    norms = np.sqrt(np.asarray(reps.V.multiply(reps.V).sum(axis=1)).ravel())
    np.testing.assert_allclose(norms[~reps.zero_rows], 1.0, atol=1e-9)


# ------------------------------------------------------------------ clustering

def _objective(M, assign, K):
    total = 0.0
    for c in range(K):
        members = M[assign == c]
        centre = members.sum(axis=0)
        centre = centre / np.linalg.norm(centre)
        total += np.sum(1.0 - members @ centre)
    return total


def test_orthogonal_copies_get_their_own_cluster():
    K = 4
    M = np.repeat(np.eye(K), 3, axis=0)
    assign = spherical_kmeans(sp.csr_matrix(M), np.arange(M.shape[0]), K, seed=7)
    pure = [len(set(assign[3 * k:3 * k + 3].tolist())) == 1 for k in range(K)]
    assert all(pure) and len(set(assign.tolist())) == K
    assert _objective(M, assign, K) == pytest.approx(0.0, abs=1e-12)


def test_two_pairs_match_exhaustive_partition_oracle():
    M = np.array([[1.0, 0.05, 0.0], [0.95, 0.1, 0.0], [0.0, 0.1, 1.0], [0.05, 0.0, 1.0]])
    M /= np.linalg.norm(M, axis=1, keepdims=True)
    best, best_obj = None, np.inf
    for bits in itertools.product([0, 1], repeat=4):
        a = np.array(bits)
        if a.min() == a.max():
            continue
        obj = _objective(M, a, 2)
        if obj < best_obj - 1e-15:
            best, best_obj = a, obj
    for seed in range(5):
        assign = spherical_kmeans(sp.csr_matrix(M), np.arange(4), 2, seed=seed)
        assert (assign[0] == assign[1]) and (assign[2] == assign[3]) and assign[0] != assign[2]
        assert (assign == best).all() or (assign == 1 - best).all()
        assert _objective(M, assign, 2) == pytest.approx(best_obj, rel=1e-12)


def test_kmeans_is_deterministic(block_data):
    reps = label_representations(block_data)
    rows = np.arange(block_data.n_labels)
    a = spherical_kmeans(reps, rows, 6, seed=11, return_info=True)
    b = spherical_kmeans(reps, rows, 6, seed=11, return_info=True)
    assert np.array_equal(a.assignment, b.assignment)
    assert a.objective_history == b.objective_history
    # objective never increases
    assert all(x >= y - 1e-9 for x, y in zip(a.objective_history, a.objective_history[1:]))


def test_zero_rows_go_to_smallest_cluster():
    M = sp.csr_matrix(np.array([[1.0, 0], [1.0, 0], [0.0, 1], [0.0, 0]]))
    assign = spherical_kmeans(M, np.arange(4), 2, seed=0)
    assert assign[0] == assign[1] != assign[2]
    assert assign[3] == assign[2]


def test_too_few_distinct_rows_falls_back_round_robin():
    M = sp.csr_matrix(np.array([[1.0, 0], [1.0, 0], [1.0, 0], [0.0, 0]]))
    with pytest.warns(ClusterFallbackWarning):
        info = spherical_kmeans(M, np.arange(4), 3, seed=0, return_info=True)
    assert info.fallback and info.assignment.tolist() == [0, 1, 2, 0]


def test_kmeans_needs_more_rows_than_clusters():
    with pytest.raises(ValueError):
        spherical_kmeans(sp.csr_matrix(np.eye(3)), np.arange(3), 3)


# ------------------------------------------------------------------ trees

def _stub(groups_by_labels):
    """Clustering stub returning a predetermined split for each label tuple."""
    def fn(reps, rows, K, seed):
        return np.asarray(groups_by_labels[tuple(rows.tolist())])
    return fn


def _nine_label_data():
    return dataset_from_rows([{j: 1.0} for j in range(9)], [[j] for j in range(9)], n_labels=9)


def test_nine_label_tree_from_clustering_stub():
    stub = _stub({tuple(range(9)): [0, 0, 0, 1, 1, 2, 2, 2, 2], (5, 6, 7, 8): [0, 0, 1, 2]})
    tree = build_label_tree(_nine_label_data(), K=3, d_max=10, cluster_fn=stub)
    expected = nine_label_tree()
    assert [n.labels for n in tree.nodes] == [n.labels for n in expected.nodes]
    assert [n.children for n in tree.nodes] == [n.children for n in expected.nodes]
    assert tree.n_meta_labels == 4
    assert tree.n_classifiers == 13 == 9 + tree.n_meta_labels


def test_nine_label_tree_depth_summary(nine_tree):
    rows = tree_summary(nine_tree)
    assert [r.n_nodes for r in rows] == [1, 3, 8, 2]
    assert rows[0].children_per_node == (3,)
    assert rows[1].children_per_node == (3, 2, 3)
    assert rows[2].n_internal == 1 and rows[2].n_leaves == 7
    assert nine_tree.depth == 3


def test_few_labels_give_one_vs_rest_structure():
    ds = _nine_label_data()
    tree = build_label_tree(ds, K=9)
    assert tree.depth == 1 and tree.n_meta_labels == 0 and tree.n_classifiers == 9
    capped = build_label_tree(ds, K=2, d_max=1)
    assert capped.depth == 1 and len(capped.root.children) == 9


def test_single_label_tree():
    ds = dataset_from_rows([{0: 1.0}], [[0]], n_labels=1)
    tree = build_label_tree(ds, K=2)
    assert len(tree.internal_nodes()) == 1 and len(tree.leaves()) == 1


def test_balanced_construction_has_k_to_the_i_nodes():
    K, d = 3, 3
    L = K**d
    ds = dataset_from_rows([{j: 1.0} for j in range(L)], [[j] for j in range(L)], n_labels=L)

    def even(reps, rows, K, seed):
        return np.arange(rows.size) * K // rows.size

    tree = build_label_tree(ds, K=K, d_max=d + 1, cluster_fn=even)
    assert [r.n_nodes for r in tree_summary(tree)] == [K**i for i in range(d + 1)]


def test_node_ids_of_children_are_consecutive(block_data):
    tree = build_label_tree(block_data, K=4, d_max=4, seed=2)
    for node in tree.internal_nodes():
        assert node.children == list(range(node.children[0], node.children[0] + len(node.children)))


def test_json_round_trip(block_data):
    tree = build_label_tree(block_data, K=5, d_max=3, seed=1)
    assert LabelTree.from_json(tree.to_json()) == tree


def test_invalid_partition_rejected():
    tree = nine_label_tree()
    doc = tree.to_dict()
    doc["nodes"][1]["labels"] = [0, 1]
    with pytest.raises(ValueError):
        LabelTree.from_dict(doc)


def test_tree_build_is_seed_deterministic_across_threads(block_data):
    a = build_label_tree(block_data, K=4, d_max=4, seed=5, n_jobs=1)
    b = build_label_tree(block_data, K=4, d_max=4, seed=5, n_jobs=3)
    assert a == b


# ------------------------------------------------------------------ properties

@st.composite
def small_problems(draw):
    n_labels = draw(st.integers(2, 30))
    seed = draw(st.integers(0, 2**31))
    K = draw(st.integers(2, 5))
    d_max = draw(st.integers(1, 5))
    ds = make_block_dataset(n_instances=draw(st.integers(30, 120)), n_features=200,
                            n_labels=n_labels, n_groups=min(n_labels, draw(st.integers(1, 6))),
                            nnz_per_row=8, shared_features=10, seed=seed)
    return ds, K, d_max, seed


@settings(max_examples=30, deadline=None, suppress_health_check=[HealthCheck.too_slow])
@given(small_problems())
def test_tree_structure_invariants(problem):
    ds, K, d_max, seed = problem
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", ClusterFallbackWarning)
        tree = build_label_tree(ds, K=K, d_max=d_max, seed=seed)
    assert tree.depth <= d_max
    assert sum(len(n.children) for n in tree.nodes) == tree.n_nodes - 1 == ds.n_labels + tree.n_meta_labels
    for node in tree.internal_nodes():
        child_sets = [set(tree.nodes[c].labels) for c in node.children]
        assert sum(len(s) for s in child_sets) == len(node.labels)
        assert set().union(*child_sets) == set(node.labels)
        if node.depth < d_max - 1 and len(node.labels) > K:
            assert len(node.children) == K
    for leaf in tree.leaves():
        assert len(leaf.labels) == 1


@settings(max_examples=20, deadline=None, suppress_health_check=[HealthCheck.too_slow])
@given(small_problems())
def test_children_cover_parent_features(problem):
    ds, K, d_max, seed = problem
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", ClusterFallbackWarning)
        tree = build_label_tree(ds, K=K, d_max=d_max, seed=seed)
    for node in tree.internal_nodes():
        parent = used_features(ds, instances_with_labels(ds, node.labels))
        union = set()
        total = 0
        for c in node.children:
            child = used_features(ds, instances_with_labels(ds, tree.nodes[c].labels))
            union |= child.as_set()
            total += child.count
        assert union == parent.as_set()
        assert total >= parent.count
