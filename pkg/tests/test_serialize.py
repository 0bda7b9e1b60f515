import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import given, settings
from hypothesis import strategies as st

from lintree.serialize import ENTRY_DTYPE, ModelFormatError, dumps, layout_of, load_model, loads, save_model
from lintree.solver import LossSpec, OvrModel, TreeModel, train_tree
from lintree.tree import build_label_tree


def test_entry_is_twelve_bytes():
    assert ENTRY_DTYPE.itemsize == 12


def test_tree_model_round_trip(tmp_path, block_data):
    tree = build_label_tree(block_data, K=4, d_max=3)
    model = train_tree(block_data, tree, LossSpec("logistic", 2.0))
    layout = save_model(model, tmp_path / "m.bin")
    back = load_model(tmp_path / "m.bin")
    assert back == model and back.tree == tree and back.loss == model.loss
    assert layout.payload_bytes == 12 * model.nnz
    assert layout.count_bytes == 4 * model.n_classifiers
    assert layout.total == (tmp_path / "m.bin").stat().st_size


@settings(max_examples=50, deadline=None)
@given(st.integers(1, 8), st.integers(1, 30), st.floats(0, 1), st.integers(0, 2**31))
def test_ovr_round_trip_is_bit_exact(L, n, density, seed):
    rng = np.random.default_rng(seed)
    W = sp.random(L, n, density=density, random_state=rng, format="csr",
                  data_rvs=lambda k: rng.normal(size=k) * 10.0 ** rng.integers(-300, 300, size=k))
    W.data[W.data == 0] = 1.0
    model = OvrModel(W, n, L, LossSpec("squared_hinge", 0.5))
    blob = dumps(model)
    back = loads(blob)
    assert back == model
    assert np.array_equal(back.W.data.view(np.uint64), model.W.data.view(np.uint64))
    assert layout_of(blob).payload_bytes == 12 * model.nnz


def test_dumps_is_deterministic(block_data):
    tree = build_label_tree(block_data, K=4, d_max=3, seed=3)
    a = dumps(train_tree(block_data, tree, seed=1))
    b = dumps(train_tree(block_data, tree, seed=1))
    assert a == b


@pytest.mark.parametrize("mutate", [
    lambda b: b"XXXX" + b[4:],
    lambda b: b[:10],
    lambda b: b[:-3],
    lambda b: b + b"\x00",
])
def test_corrupt_files_are_rejected(mutate):
    model = OvrModel(sp.csr_matrix(np.array([[1.0, 0.0], [0.0, -2.0]])), 2, 2, LossSpec())
    with pytest.raises(ModelFormatError):
        loads(mutate(dumps(model)))


def test_equality_is_bitwise():
    W = sp.csr_matrix(np.array([[0.1 + 0.2]]))
    a = OvrModel(W, 1, 1, LossSpec())
    b = OvrModel(sp.csr_matrix(np.array([[0.3]])), 1, 1, LossSpec())
    assert a != b
    t = TreeModel(W, 1, 1, LossSpec(), tree=None)
    assert t != a
