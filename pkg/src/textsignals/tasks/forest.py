"""Random forest over binary indicator features.

Each tree is grown on a bootstrap sample of size n. At every node
``floor(sqrt(V))`` candidate features are drawn without replacement from
the features that are not constant within the node, and the split with the
largest Gini decrease is taken (lowest feature index on ties). A node
becomes a leaf when it is pure, at ``max_depth``, holds fewer than two
samples, or has no non-constant feature. Prediction averages the trees' leaf class
fractions (the usual probability vote); plain per-tree majority voting is
available too. An exact tie predicts 0.

Per-tree seeds come from the master seed through SplitMix64, so trees can
be trained in any order or in parallel with identical results.
"""
from __future__ import annotations

import json
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

MODEL_FORMAT = "textsignals-forest/1"
_MODEL_KEYS = ("format", "n_trees", "max_depth", "seed", "n_features", "trees")
_MASK64 = (1 << 64) - 1


def splitmix64(state: int) -> tuple[int, int]:
    """One SplitMix64 step: returns (next_state, output)."""
    state = (state + 0x9E3779B97F4A7C15) & _MASK64
    z = state
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return state, z ^ (z >> 31)


def tree_seeds(seed: int, n: int) -> list[int]:
    state = seed & _MASK64
    out = []
    for _ in range(n):
        state, value = splitmix64(state)
        out.append(value)
    return out


@dataclass
class Tree:
    # feature == -1 marks a leaf; counts are (negatives, positives) of the training rows
    feature: list[int] = field(default_factory=list)
    left: list[int] = field(default_factory=list)
    right: list[int] = field(default_factory=list)
    counts: list[tuple[int, int]] = field(default_factory=list)

    def _add(self, counts) -> int:
        self.feature.append(-1)
        self.left.append(-1)
        self.right.append(-1)
        self.counts.append((int(counts[0]), int(counts[1])))
        return len(self.feature) - 1

    @property
    def depth(self) -> int:
        depth = {0: 0}
        for node in range(len(self.feature)):
            if self.feature[node] >= 0:
                depth[self.left[node]] = depth[self.right[node]] = depth[node] + 1
        return max(depth.values())

    def predict_proba(self, X: np.ndarray) -> np.ndarray:
        """Positive-class fraction of the training rows in each row's leaf (dense boolean X)."""
        feature = np.asarray(self.feature)
        left = np.asarray(self.left)
        right = np.asarray(self.right)
        counts = np.asarray(self.counts, dtype=np.float64).reshape(-1, 2)
        node = np.zeros(X.shape[0], dtype=np.int64)
        rows = np.arange(X.shape[0])
        active = feature[node] >= 0
        while active.any():
            r = rows[active]
            f = feature[node[r]]
            go_right = X[r, f]
            node[r] = np.where(go_right, right[node[r]], left[node[r]])
            active = feature[node] >= 0
        leaf = counts[node]
        return leaf[:, 1] / leaf.sum(axis=1)

    def predict(self, X: np.ndarray) -> np.ndarray:
        """Leaf majority labels; an evenly split leaf predicts 0."""
        return (self.predict_proba(X) > 0.5).astype(np.int64)

    def to_dict(self) -> dict:
        return {"feature": self.feature, "left": self.left, "right": self.right,
                "counts": [list(c) for c in self.counts]}

    @classmethod
    def from_dict(cls, d: dict) -> Tree:
        return cls(list(d["feature"]), list(d["left"]), list(d["right"]), [tuple(c) for c in d["counts"]])


@dataclass
class ForestModel:
    trees: list[Tree]
    n_trees: int
    max_depth: int
    seed: int
    n_features: int

    def to_dict(self) -> dict:
        return {"format": MODEL_FORMAT, "n_trees": self.n_trees, "max_depth": self.max_depth,
                "seed": self.seed, "n_features": self.n_features,
                "trees": [t.to_dict() for t in self.trees]}

    @classmethod
    def from_dict(cls, d: dict) -> ForestModel:
        if d.get("format") != MODEL_FORMAT:
            raise ValueError(f"unsupported model format {d.get('format')!r}")
        return cls([Tree.from_dict(t) for t in d["trees"]], d["n_trees"], d["max_depth"], d["seed"],
                   d["n_features"])


def _gini(pos: np.ndarray, n: np.ndarray) -> np.ndarray:
    with np.errstate(divide="ignore", invalid="ignore"):
        p = np.where(n > 0, pos / n, 0.0)
    return 2.0 * p * (1.0 - p)


def _gather(indptr: np.ndarray, indices: np.ndarray, rows: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Position-in-``rows`` and feature index of every stored entry of those CSR rows."""
    starts = indptr[rows]
    lens = indptr[rows + 1] - starts
    row_of = np.repeat(np.arange(len(rows)), lens)
    offsets = np.arange(int(lens.sum())) - np.repeat(np.cumsum(lens) - lens, lens) + np.repeat(starts, lens)
    return row_of, indices[offsets]


def _grow_tree(X: sp.csr_matrix, y: np.ndarray, max_depth: int, max_features: int, seed: int) -> Tree:
    rng = np.random.default_rng(seed)
    n, n_features = X.shape
    sample = rng.integers(0, n, size=n)
    tree = Tree()
    stack = [(sample, 0, None, None)]
    while stack:
        idx, depth, parent, side = stack.pop()
        yn = y[idx]
        n_node = len(idx)
        n_pos = int(yn.sum())
        node = tree._add((n_node - n_pos, n_pos))
        if parent is not None:
            (tree.left if side == 0 else tree.right)[parent] = node
        if n_pos in (0, n_node) or depth >= max_depth or n_node < 2:
            continue
        row_of, feats = _gather(X.indptr, X.indices, idx)
        on = np.bincount(feats, minlength=n_features)
        candidates = np.flatnonzero((on > 0) & (on < n_node))
        if candidates.size == 0:
            continue
        if candidates.size > max_features:
            candidates = np.sort(rng.choice(candidates, size=max_features, replace=False))
        pos_on = np.bincount(feats, weights=yn[row_of], minlength=n_features)[candidates]
        n_on = on[candidates]
        n_off = n_node - n_on
        weighted = (n_on * _gini(pos_on, n_on) + n_off * _gini(n_pos - pos_on, n_off)) / n_node
        best = int(candidates[int(np.argmin(weighted))])
        tree.feature[node] = best
        col = np.zeros(n_node, dtype=bool)
        col[row_of[feats == best]] = True
        # push right first so the left child gets the lower node id
        stack.append((idx[col], depth + 1, node, 1))
        stack.append((idx[~col], depth + 1, node, 0))
    return tree


def _as_csr(X) -> sp.csr_matrix:
    X = sp.csr_matrix(X, dtype=np.float64) if sp.issparse(X) else sp.csr_matrix(np.asarray(X, dtype=np.float64))
    X.sum_duplicates()
    X.eliminate_zeros()
    return X


def train_forest(X, y, n_trees: int = 100, max_depth: int = 20, seed: int = 0,
                 max_features: int | None = None, n_jobs: int = 1) -> ForestModel:
    X = _as_csr(X)
    y = np.asarray(y, dtype=np.int64)
    if X.shape[0] != len(y) or len(y) < 2:
        raise ValueError("X and y must have the same length, at least 2")
    if not np.all((y == 0) | (y == 1)):
        raise ValueError("labels must be binary")
    if y.min() == y.max():
        raise ValueError(f"training labels contain a single class ({int(y[0])})")
    if max_features is None:
        max_features = max(1, int(math.isqrt(X.shape[1])))
    seeds = tree_seeds(seed, n_trees)
    grow = lambda s: _grow_tree(X, y, max_depth, max_features, s)  # noqa: E731
    if n_jobs > 1:
        with ThreadPoolExecutor(max_workers=n_jobs) as pool:
            trees = list(pool.map(grow, seeds))
    else:
        trees = [grow(s) for s in seeds]
    return ForestModel(trees, n_trees, max_depth, seed, X.shape[1])


def predict(model: ForestModel, X, batch_size: int = 2048, vote: str = "soft") -> np.ndarray:
    """Forest labels. ``vote="soft"`` averages leaf class fractions over trees,
    ``"hard"`` counts per-tree labels; either way an exact tie predicts 0."""
    if vote not in ("soft", "hard"):
        raise ValueError(f"vote must be 'soft' or 'hard', got {vote!r}")
    X = _as_csr(X)
    if X.shape[1] != model.n_features:
        raise ValueError(f"model expects {model.n_features} features, got {X.shape[1]}")
    out = np.empty(X.shape[0], dtype=np.int64)
    for start in range(0, X.shape[0], batch_size):
        dense = X[start:start + batch_size].toarray() > 0
        if vote == "soft":
            score = sum(tree.predict_proba(dense) for tree in model.trees) / len(model.trees)
            out[start:start + batch_size] = (score > 0.5).astype(np.int64)
        else:
            votes = sum(tree.predict(dense) for tree in model.trees)
            out[start:start + batch_size] = (2 * votes > len(model.trees)).astype(np.int64)
    return out


def save_model(model: ForestModel, path: str | os.PathLike, **extra) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump({**model.to_dict(), **extra}, fh, sort_keys=True, separators=(",", ":"))
        fh.write("\n")


def load_model(path: str | os.PathLike) -> tuple[ForestModel, dict]:
    with open(path, encoding="utf-8") as fh:
        d = json.load(fh)
    extra = {k: v for k, v in d.items() if k not in _MODEL_KEYS}
    return ForestModel.from_dict(d), extra
