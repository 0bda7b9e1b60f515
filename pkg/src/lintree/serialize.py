"""Binary model files.

Layout (little-endian)::

    header   magic "LTXM" | version u16 | kind u8 | loss u8 | n u32 | L u32 | lam f64
    tree     (tree kind only) length u32 | UTF-8 JSON of the label tree
    weights  per classifier: entry_count u32 | entry_count x (index u32, value f64)

Entries are packed without padding, so the weight payload is exactly
12 bytes per stored weight.
"""
from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .solver import LOSSES, LinearModel, LossSpec, OvrModel, TreeModel
from .tree import LabelTree

MAGIC = b"LTXM"
VERSION = 1
KINDS = ("ovr", "tree")
_HEADER = struct.Struct("<4sHBBIId")
_U32 = struct.Struct("<I")
ENTRY_DTYPE = np.dtype([("index", "<u4"), ("value", "<f8")])
assert ENTRY_DTYPE.itemsize == 12


class ModelFormatError(ValueError):
    pass


@dataclass(frozen=True)
class FileLayout:
    header_bytes: int
    tree_bytes: int
    count_bytes: int
    payload_bytes: int

    @property
    def total(self) -> int:
        return self.header_bytes + self.tree_bytes + self.count_bytes + self.payload_bytes


def dumps(model: LinearModel) -> bytes:
    kind = KINDS.index(model.kind)
    parts = [_HEADER.pack(MAGIC, VERSION, kind, model.loss.loss_id, model.n_features,
                          model.n_labels, model.loss.lam)]
    if isinstance(model, TreeModel):
        doc = model.tree.to_json().encode("utf-8")
        parts += [_U32.pack(len(doc)), doc]
    W = model.W
    counts = np.diff(W.indptr).astype("<u4")
    entries = np.empty(W.nnz, dtype=ENTRY_DTYPE)
    entries["index"] = W.indices
    entries["value"] = W.data
    raw = entries.tobytes()
    for i in range(W.shape[0]):
        lo, hi = int(W.indptr[i]), int(W.indptr[i + 1])
        parts.append(counts[i].tobytes())
        parts.append(raw[12 * lo:12 * hi])
    return b"".join(parts)


def save_model(model: LinearModel, path) -> FileLayout:
    blob = dumps(model)
    with open(path, "wb") as fh:
        fh.write(blob)
    return layout_of(blob)


def _read_header(blob: bytes):
    if len(blob) < _HEADER.size:
        raise ModelFormatError("file too short for header")
    magic, version, kind, loss_id, n, L, lam = _HEADER.unpack_from(blob, 0)
    if magic != MAGIC:
        raise ModelFormatError("bad magic")
    if version != VERSION:
        raise ModelFormatError(f"unsupported version {version}")
    if kind >= len(KINDS) or loss_id >= len(LOSSES):
        raise ModelFormatError("bad kind or loss id")
    return KINDS[kind], LossSpec(LOSSES[loss_id], lam), n, L


def loads(blob: bytes) -> LinearModel:
    try:
        return _loads(blob)
    except ModelFormatError:
        raise
    except (struct.error, ValueError, KeyError, UnicodeDecodeError) as exc:
        raise ModelFormatError(f"corrupt model file: {exc}") from exc


def _loads(blob: bytes) -> LinearModel:
    kind, loss, n, L = _read_header(blob)
    pos = _HEADER.size
    tree = None
    if kind == "tree":
        (size,) = _U32.unpack_from(blob, pos)
        pos += 4
        tree = LabelTree.from_json(blob[pos:pos + size].decode("utf-8"))
        pos += size
        n_rows = tree.n_classifiers
    else:
        n_rows = L
    indptr = np.zeros(n_rows + 1, dtype=np.int64)
    chunks = []
    for i in range(n_rows):
        (cnt,) = _U32.unpack_from(blob, pos)
        pos += 4
        chunks.append(np.frombuffer(blob, dtype=ENTRY_DTYPE, count=cnt, offset=pos))
        pos += 12 * cnt
        indptr[i + 1] = indptr[i] + cnt
    if pos != len(blob):
        raise ModelFormatError(f"{len(blob) - pos} trailing bytes")
    entries = np.concatenate(chunks) if chunks else np.empty(0, dtype=ENTRY_DTYPE)
    if entries.size and int(entries["index"].max()) >= n:
        raise ModelFormatError("weight index out of range")
    W = sp.csr_matrix((entries["value"].astype(np.float64), entries["index"].astype(np.int32), indptr),
                      shape=(n_rows, n))
    if kind == "tree":
        return TreeModel(W, n, L, loss, tree=tree)
    return OvrModel(W, n, L, loss)


def load_model(path) -> LinearModel:
    with open(path, "rb") as fh:
        return loads(fh.read())


def layout_of(blob: bytes) -> FileLayout:
    """Split a serialised model into its header / tree / count / payload byte totals."""
    kind, _, _, L = _read_header(blob)
    pos = _HEADER.size
    tree_bytes = 0
    if kind == "tree":
        (size,) = _U32.unpack_from(blob, pos)
        tree_bytes = 4 + size
        n_rows = LabelTree.from_json(blob[pos + 4:pos + 4 + size].decode("utf-8")).n_classifiers
        pos += tree_bytes
    else:
        n_rows = L
    payload = 0
    for _ in range(n_rows):
        (cnt,) = _U32.unpack_from(blob, pos)
        pos += 4 + 12 * cnt
        payload += 12 * cnt
    return FileLayout(_HEADER.size, tree_bytes, 4 * n_rows, payload)
