"""Sparse multi-label data: LIBSVM parsing, compaction and feature-usage bookkeeping.

Features live in a CSR matrix (64-bit values, 32-bit indices).  Label sets are
kept both as sorted tuples and as a sparse indicator matrix so that
"which instances carry any of these labels" is a column gather.
"""
from __future__ import annotations

import io
import os
from dataclasses import dataclass
from typing import IO, Iterable, Sequence

import numpy as np
import scipy.sparse as sp

INDEX_LIMIT = 2**32 - 1


class ParseError(ValueError):
    """Malformed LIBSVM multi-label input."""

    def __init__(self, message: str, lineno: int | None = None):
        self.lineno = lineno
        if lineno is not None:
            message = f"line {lineno}: {message}"
        super().__init__(message)


@dataclass(frozen=True)
class SparseVector:
    indices: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        idx = np.asarray(self.indices, dtype=np.int64)
        val = np.asarray(self.values, dtype=np.float64)
        if idx.shape != val.shape or idx.ndim != 1:
            raise ValueError("indices and values must be 1-d arrays of equal length")
        if idx.size and (np.any(np.diff(idx) <= 0) or idx[0] < 0):
            raise ValueError("feature indices must be non-negative and strictly increasing")
        if np.any(val == 0.0):
            raise ValueError("stored values must be non-zero")
        object.__setattr__(self, "indices", idx)
        object.__setattr__(self, "values", val)

    @classmethod
    def from_pairs(cls, pairs: Iterable[tuple[int, float]]) -> "SparseVector":
        pairs = sorted((int(i), float(v)) for i, v in pairs if v != 0.0)
        if not pairs:
            return cls(np.empty(0, np.int64), np.empty(0, np.float64))
        idx, val = zip(*pairs)
        return cls(np.array(idx), np.array(val))

    @property
    def entries(self) -> list[tuple[int, float]]:
        return list(zip(self.indices.tolist(), self.values.tolist()))

    @property
    def nnz(self) -> int:
        return int(self.indices.size)

    def dot(self, dense: np.ndarray) -> float:
        return float(np.dot(dense[self.indices], self.values))

    def __len__(self):
        return self.nnz


@dataclass(frozen=True)
class FeatureUsage:
    """Sorted array of feature indices touched by a set of instances."""

    used: np.ndarray

    @property
    def count(self) -> int:
        return int(self.used.size)

    def as_set(self) -> set[int]:
        return set(self.used.tolist())

    def union(self, other: "FeatureUsage") -> "FeatureUsage":
        return FeatureUsage(np.union1d(self.used, other.used))


def _canonical_csr(X, n_features: int | None) -> sp.csr_matrix:
    X = sp.csr_matrix(X, dtype=np.float64, copy=True)
    X.sum_duplicates()
    X.eliminate_zeros()
    X.sort_indices()
    if n_features is not None and n_features != X.shape[1]:
        if X.nnz and X.indices.max() >= n_features:
            raise ValueError("feature index exceeds n_features")
        X = sp.csr_matrix((X.data, X.indices, X.indptr), shape=(X.shape[0], n_features))
    return X


class MultiLabelDataset:
    """Immutable feature matrix plus per-instance label sets.

    Parameters
    ----------
    X : sparse matrix of shape (n_instances, n_features)
    labels : sequence of iterables of 0-based label indices, one per row
    n_labels : int, optional
        Declared label count L; inferred as ``max label + 1`` when omitted.
    n_features : int, optional
        Declared feature count n; defaults to ``X.shape[1]``.
    """

    def __init__(self, X, labels: Sequence[Iterable[int]], n_labels: int | None = None,
                 n_features: int | None = None):
        X = _canonical_csr(X, n_features)
        labels = tuple(tuple(sorted(set(int(j) for j in row))) for row in labels)
        if len(labels) != X.shape[0]:
            raise ValueError(f"{len(labels)} label sets for {X.shape[0]} rows")
        max_label = max((row[-1] for row in labels if row), default=-1)
        if n_labels is None:
            n_labels = max_label + 1
        if max_label >= n_labels:
            raise ValueError(f"label {max_label} out of range for n_labels={n_labels}")
        if any(row and row[0] < 0 for row in labels):
            raise ValueError("negative label index")
        if X.shape[1] > INDEX_LIMIT or n_labels > INDEX_LIMIT:
            raise ValueError("n_features and n_labels must fit in 32 bits")

        indptr = np.zeros(len(labels) + 1, dtype=np.int64)
        indptr[1:] = np.cumsum([len(row) for row in labels])
        cols = np.fromiter((j for row in labels for j in row), dtype=np.int64, count=int(indptr[-1]))
        Y = sp.csr_matrix((np.ones(cols.size), cols, indptr), shape=(len(labels), n_labels))

        self._X = X
        self._labels = labels
        self._Y = Y
        self._Y_csc = Y.tocsc()
        self.n_labels = int(n_labels)
        self.n_features = int(X.shape[1])
        self.n_instances = int(X.shape[0])

    @property
    def X(self) -> sp.csr_matrix:
        return self._X

    @property
    def labels(self) -> tuple[tuple[int, ...], ...]:
        return self._labels

    @property
    def Y(self) -> sp.csr_matrix:
        """Binary indicator matrix of shape (n_instances, n_labels)."""
        return self._Y

    @property
    def label_columns(self) -> sp.csc_matrix:
        return self._Y_csc

    @property
    def nnz(self) -> int:
        return int(self._X.nnz)

    @property
    def density(self) -> float:
        cells = self.n_instances * self.n_features
        return self.nnz / cells if cells else 0.0

    def row(self, i: int) -> SparseVector:
        lo, hi = self._X.indptr[i], self._X.indptr[i + 1]
        return SparseVector(self._X.indices[lo:hi], self._X.data[lo:hi])

    def rows(self) -> list[SparseVector]:
        return [self.row(i) for i in range(self.n_instances)]

    def __len__(self):
        return self.n_instances

    def __repr__(self):
        return (f"MultiLabelDataset(n_instances={self.n_instances}, "
                f"n_features={self.n_features}, n_labels={self.n_labels}, nnz={self.nnz})")


# ---------------------------------------------------------------- parsing


def _open_text(source) -> IO[str]:
    if isinstance(source, bytes):
        return io.StringIO(source.decode("utf-8"))
    if isinstance(source, str):
        # Raw text vs. path: treat anything that exists on disk as a path.
        if "\n" not in source and os.path.exists(source):
            return open(source, "r", encoding="utf-8")
        return io.StringIO(source)
    if isinstance(source, os.PathLike):
        return open(source, "r", encoding="utf-8")
    if isinstance(source, io.TextIOBase):
        return source
    return io.TextIOWrapper(source, encoding="utf-8")


def parse_libsvm_multilabel(source, n_features: int | None = None, n_labels: int | None = None,
                            zero_based: bool = False, zero_based_labels: bool = False,
                            expected_instances: int | None = None) -> MultiLabelDataset:
    """Parse ``lab1,lab2 idx:val idx:val ...`` lines into a dataset.

    ``source`` may be bytes, raw text, a path or a file object.  On disk,
    feature indices and labels are 1-based unless the corresponding
    ``zero_based*`` flag is set; in memory everything is 0-based.
    Explicit zero values are dropped.  Any malformed token raises
    :class:`ParseError` carrying the offending line number.
    """
    feat_base = 0 if zero_based else 1
    label_base = 0 if zero_based_labels else 1
    indptr = [0]
    indices: list[int] = []
    data: list[float] = []
    labels: list[tuple[int, ...]] = []

    fh = _open_text(source)
    try:
        for lineno, line in enumerate(fh, start=1):
            line = line.rstrip("\r\n")
            if not line:
                continue
            tokens = line.split()
            if not tokens or line[0].isspace() or ":" in tokens[0]:
                label_token = ""
            else:
                label_token = tokens.pop(0)
            row_labels = []
            if label_token:
                for tok in label_token.split(","):
                    try:
                        lab = int(tok)
                    except ValueError:
                        raise ParseError(f"invalid label {tok!r}", lineno) from None
                    if lab < label_base:
                        raise ParseError(f"label {lab} below base {label_base}", lineno)
                    row_labels.append(lab - label_base)
            prev = -1
            for tok in tokens:
                key, sep, val = tok.partition(":")
                if not sep:
                    raise ParseError(f"missing ':' in {tok!r}", lineno)
                try:
                    idx = int(key)
                except ValueError:
                    raise ParseError(f"invalid feature index {key!r}", lineno) from None
                try:
                    value = float(val)
                except ValueError:
                    raise ParseError(f"non-numeric value {val!r}", lineno) from None
                if idx < feat_base:
                    raise ParseError(f"feature index {idx} below base {feat_base}", lineno)
                idx -= feat_base
                if idx <= prev:
                    raise ParseError(f"feature indices not strictly increasing at {tok!r}", lineno)
                if n_features is not None and idx >= n_features:
                    raise ParseError(f"feature index {idx + feat_base} exceeds n_features={n_features}",
                                     lineno)
                prev = idx
                if value != 0.0:
                    indices.append(idx)
                    data.append(value)
            if n_labels is not None and row_labels and max(row_labels) >= n_labels:
                raise ParseError(f"label exceeds n_labels={n_labels}", lineno)
            labels.append(tuple(row_labels))
            indptr.append(len(indices))
    finally:
        if fh is not source:
            fh.close()

    if expected_instances is not None and expected_instances != len(labels):
        raise ParseError(f"expected {expected_instances} instances, found {len(labels)}")
    if n_features is None:
        n_features = (max(indices) + 1) if indices else 0
    X = sp.csr_matrix((np.asarray(data, dtype=np.float64), np.asarray(indices, dtype=np.int64),
                       np.asarray(indptr, dtype=np.int64)), shape=(len(labels), n_features))
    return MultiLabelDataset(X, labels, n_labels=n_labels, n_features=n_features)


def write_libsvm_multilabel(dataset: MultiLabelDataset, dest, zero_based: bool = False,
                            zero_based_labels: bool = False) -> None:
    """Inverse of :func:`parse_libsvm_multilabel`; values use ``repr`` so they round-trip."""
    fb = 0 if zero_based else 1
    lb = 0 if zero_based_labels else 1
    own = isinstance(dest, (str, os.PathLike))
    fh = open(dest, "w", encoding="utf-8") if own else dest
    try:
        X = dataset.X
        for i, row_labels in enumerate(dataset.labels):
            lo, hi = X.indptr[i], X.indptr[i + 1]
            feats = " ".join(f"{j + fb}:{v!r}" for j, v in zip(X.indices[lo:hi].tolist(),
                                                               X.data[lo:hi].tolist()))
            labs = ",".join(str(j + lb) for j in row_labels)
            fh.write(f"{labs} {feats}".rstrip() + "\n" if labs else f" {feats}\n")
    finally:
        if own:
            fh.close()


def read_metadata(path) -> dict[str, int]:
    """Read a sidecar ``n=<int> L=<int>`` file."""
    with open(path, "r", encoding="utf-8") as fh:
        text = fh.read()
    meta = {}
    for tok in text.split():
        key, sep, val = tok.partition("=")
        if not sep or key not in ("n", "L"):
            raise ParseError(f"bad metadata token {tok!r}")
        meta[key] = int(val)
    return meta


def write_metadata(path, n_features: int, n_labels: int) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"n={n_features} L={n_labels}\n")


# ---------------------------------------------------------------- bookkeeping


def compact_features(dataset: MultiLabelDataset) -> tuple[MultiLabelDataset, dict[int, int]]:
    """Drop globally unused features; returns the new dataset and the old->new map."""
    used = np.unique(dataset.X.indices)
    remap = {int(old): new for new, old in enumerate(used.tolist())}
    return apply_feature_remap(dataset, remap, n_features=used.size), remap


def apply_feature_remap(dataset: MultiLabelDataset, remap: dict[int, int],
                        n_features: int | None = None) -> MultiLabelDataset:
    """Re-index features through ``remap``; features missing from it are dropped.

    Use this to bring a test set into the feature space of a compacted training set.
    """
    if n_features is None:
        n_features = (max(remap.values()) + 1) if remap else 0
    lookup = np.full(dataset.n_features, -1, dtype=np.int64)
    for old, new in remap.items():
        if old < dataset.n_features:
            lookup[old] = new
    X = dataset.X.tocoo()
    new_cols = lookup[X.col]
    keep = new_cols >= 0
    X = sp.csr_matrix((X.data[keep], (X.row[keep], new_cols[keep])),
                      shape=(dataset.n_instances, n_features))
    return MultiLabelDataset(X, dataset.labels, n_labels=dataset.n_labels, n_features=n_features)


def instances_with_labels(dataset: MultiLabelDataset, label_subset: Iterable[int]) -> np.ndarray:
    """Ascending indices of rows whose label set meets ``label_subset``."""
    cols = np.fromiter(label_subset, dtype=np.int64)
    if cols.size == 0:
        return np.empty(0, dtype=np.int64)
    if cols.min() < 0 or cols.max() >= dataset.n_labels:
        raise ValueError("label subset out of range")
    Yc = dataset.label_columns
    hits = [Yc.indices[Yc.indptr[j]:Yc.indptr[j + 1]] for j in cols.tolist()]
    return np.unique(np.concatenate(hits)).astype(np.int64)


def used_features(dataset: MultiLabelDataset, instance_indices) -> FeatureUsage:
    """Union of feature indices over the selected rows."""
    rows = np.asarray(instance_indices, dtype=np.int64)
    if rows.size == 0:
        return FeatureUsage(np.empty(0, dtype=np.int64))
    sub = dataset.X[rows]
    return FeatureUsage(np.unique(sub.indices).astype(np.int64))
