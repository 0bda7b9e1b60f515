"""A small real-text multi-label corpus built from docstrings of installed packages.

Each documented function or class is an instance; its features are tf-idf
weights of the words in its docstring and its labels are the enclosing
module paths (``scipy.sparse`` and ``scipy.sparse.linalg`` for a function in
``scipy/sparse/linalg/_isolve.py``).  Sources are parsed with :mod:`ast`,
not imported, so building the corpus has no side effects.
"""
from __future__ import annotations

import ast
import importlib.util
import math
import re
from collections import Counter
from pathlib import Path

import numpy as np
import scipy.sparse as sp

from lintree.data import MultiLabelDataset

WORD = re.compile(r"[a-z]{3,}")


def _package_root(name: str) -> Path | None:
    spec = importlib.util.find_spec(name)
    if spec is None or not spec.submodule_search_locations:
        return None
    return Path(list(spec.submodule_search_locations)[0])


def _module_labels(root: Path, path: Path) -> list[str]:
    parts = [root.name] + [p for p in path.relative_to(root).with_suffix("").parts]
    parts = [p for p in parts if not p.startswith("_") or p == parts[0]]
    parts = [p for p in parts if p not in ("tests", "__init__")]
    return [".".join(parts[:i]) for i in (2, 3) if len(parts) >= i]


def docstring_corpus(packages=("numpy", "scipy", "sklearn"), max_docs: int = 4000,
                     min_words: int = 15, min_df: int = 2) -> MultiLabelDataset:
    docs: list[tuple[Counter, list[str]]] = []
    for pkg in packages:
        root = _package_root(pkg)
        if root is None:
            continue
        for path in sorted(root.rglob("*.py")):
            if "tests" in path.parts:
                continue
            labels = _module_labels(root, path)
            if not labels:
                continue
            try:
                tree = ast.parse(path.read_text(encoding="utf-8", errors="ignore"))
            except SyntaxError:
                continue
            for node in ast.walk(tree):
                if isinstance(node, (ast.FunctionDef, ast.ClassDef, ast.AsyncFunctionDef)):
                    text = ast.get_docstring(node) or ""
                    words = WORD.findall(text.lower())
                    if len(words) >= min_words:
                        docs.append((Counter(words), labels))
    docs = docs[:: max(1, len(docs) // max_docs)][:max_docs]

    df = Counter(w for counts, _ in docs for w in counts)
    vocab = {w: i for i, w in enumerate(sorted(w for w, c in df.items() if c >= min_df))}
    label_ids = {lab: i for i, lab in enumerate(sorted({lab for _, labs in docs for lab in labs}))}
    n_docs = len(docs)
    rows, cols, vals, labels = [], [], [], []
    for r, (counts, labs) in enumerate(docs):
        for w, tf in counts.items():
            j = vocab.get(w)
            if j is not None:
                rows.append(r)
                cols.append(j)
                vals.append((1 + math.log(tf)) * math.log(n_docs / df[w]))
        labels.append(sorted(label_ids[lab] for lab in labs))
    X = sp.csr_matrix((vals, (rows, cols)), shape=(n_docs, len(vocab)))
    X.eliminate_zeros()
    norms = np.sqrt(np.asarray(X.multiply(X).sum(axis=1)).ravel())
    X = sp.csr_matrix(sp.diags(1.0 / np.where(norms > 0, norms, 1.0)) @ X)
    return MultiLabelDataset(X, labels, n_labels=len(label_ids), n_features=len(vocab))
