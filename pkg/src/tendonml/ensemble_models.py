"""CART regression trees with vector leaves, random forests and gradient boosting."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .numerics import as_matrix, stream_for


@dataclass(frozen=True)
class RegressionTree:
    feature: np.ndarray    # -1 marks a leaf
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray      # (n_nodes, n_outputs) training-target means
    max_depth: int | None
    min_samples_leaf: int

    @property
    def n_leaves(self) -> int:
        return int((self.feature < 0).sum())

    def apply(self, X) -> np.ndarray:
        """Index of the leaf each row of ``X`` lands in (``x <= threshold`` goes left)."""
        X = np.asarray(X, dtype=np.float64)
        node = np.zeros(X.shape[0], dtype=np.int64)
        while True:
            f = self.feature[node]
            inner = np.nonzero(f >= 0)[0]
            if inner.size == 0:
                return node
            nd = node[inner]
            go_left = X[inner, f[inner]] <= self.threshold[nd]
            node[inner] = np.where(go_left, self.left[nd], self.right[nd])

    def predict(self, X) -> np.ndarray:
        return self.value[self.apply(X)]


def best_split(X: np.ndarray, Y: np.ndarray, min_samples_leaf: int):
    """Greedy split maximising total SSE reduction summed over outputs.

    Candidates are midpoints between consecutive distinct sorted values.
    Returns ``(gain, feature, threshold)`` or ``None`` when no admissible
    split exists. Ties go to the lower feature index, then the lower
    threshold.
    """
    n = X.shape[0]
    if n < 2:
        return None
    parent = float(((Y - Y.mean(axis=0)) ** 2).sum())
    best = None
    for f in range(X.shape[1]):
        order = np.argsort(X[:, f], kind="stable")
        xs = X[order, f]
        Ys = Y[order]
        csum = np.cumsum(Ys, axis=0)[:-1]
        csq = np.cumsum((Ys ** 2).sum(axis=1))[:-1]
        nl = np.arange(1, n, dtype=np.float64)
        nr = n - nl
        total = Ys.sum(axis=0)
        total_sq = float((Ys ** 2).sum())
        sse_l = csq - (csum ** 2).sum(axis=1) / nl
        rsum = total - csum
        sse_r = (total_sq - csq) - (rsum ** 2).sum(axis=1) / nr
        gain = parent - sse_l - sse_r
        ok = (xs[1:] > xs[:-1]) & (nl >= min_samples_leaf) & (nr >= min_samples_leaf)
        if not ok.any():
            continue
        gain = np.where(ok, gain, -np.inf)
        i = int(np.argmax(gain))
        if best is None or gain[i] > best[0]:
            best = (float(gain[i]), f, 0.5 * (xs[i] + xs[i + 1]))
    return best


def fit_tree(X, Y, max_depth: int | None = 8, min_samples_leaf: int = 1) -> RegressionTree:
    """Grow a CART regression tree.

    Splitting stops at ``max_depth`` (``None`` for unlimited), when a child
    would hold fewer than ``min_samples_leaf`` rows, or when the node's
    targets are all identical.
    """
    X = as_matrix(X, "X")
    Y = as_matrix(Y, "Y")
    if X.shape[0] < 1:
        raise ValueError("fit_tree needs at least one sample")
    min_samples_leaf = max(1, int(min_samples_leaf))
    feature, threshold, left, right, value = [], [], [], [], []

    def new_node(rows):
        feature.append(-1)
        threshold.append(0.0)
        left.append(-1)
        right.append(-1)
        value.append(Y[rows].mean(axis=0))
        return len(feature) - 1

    root_rows = np.arange(X.shape[0])
    stack = [(new_node(root_rows), root_rows, 0)]
    while stack:
        node, rows, depth = stack.pop()
        if max_depth is not None and depth >= max_depth:
            continue
        if rows.size < 2 * min_samples_leaf:
            continue
        Yn = Y[rows]
        if np.all(Yn == Yn[0]):
            continue
        found = best_split(X[rows], Yn, min_samples_leaf)
        if found is None or found[0] <= 0.0:
            continue
        _, f, thr = found
        mask = X[rows, f] <= thr
        lrows, rrows = rows[mask], rows[~mask]
        feature[node], threshold[node] = f, thr
        left[node] = new_node(lrows)
        right[node] = new_node(rrows)
        stack.append((right[node], rrows, depth + 1))
        stack.append((left[node], lrows, depth + 1))

    return RegressionTree(
        np.array(feature, dtype=np.int64),
        np.array(threshold, dtype=np.float64),
        np.array(left, dtype=np.int64),
        np.array(right, dtype=np.int64),
        np.array(value, dtype=np.float64),
        max_depth,
        min_samples_leaf,
    )


@dataclass(frozen=True)
class ForestModel:
    trees: tuple
    seeds: tuple

    def predict(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64)
        out = np.zeros((X.shape[0], self.trees[0].value.shape[1]))
        for t in self.trees:
            out += t.predict(X)
        return out / len(self.trees)


def fit_forest(
    X, Y, n_trees: int = 100, max_depth: int | None = 8, min_samples_leaf: int = 2,
    seed: int = 0, bootstrap: bool = True,
) -> ForestModel:
    """Bagged CART trees; each tree draws its resample from its own stream.

    With ``bootstrap=False`` every tree sees the data unchanged (the
    identity resample), which makes a one-tree forest equal ``fit_tree``.
    """
    if n_trees < 1:
        raise ValueError("n_trees must be >= 1")
    X = as_matrix(X, "X")
    Y = as_matrix(Y, "Y")
    n = X.shape[0]
    trees = []
    for t in range(n_trees):
        if bootstrap:
            idx = stream_for(seed, "forest", t).integers(n, size=n)
        else:
            idx = np.arange(n)
        trees.append(fit_tree(X[idx], Y[idx], max_depth, min_samples_leaf))
    return ForestModel(tuple(trees), tuple(range(n_trees)))


@dataclass(frozen=True)
class BoostedModel:
    init: np.ndarray            # (k,) initial constant per output
    stages: tuple               # one vector-leaf tree per stage
    learning_rate: float
    n_stages: int
    train_mse: np.ndarray       # (n_stages + 1, k); row 0 is the constant model

    def predict(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64)
        out = np.tile(self.init, (X.shape[0], 1))
        for t in self.stages:
            out += self.learning_rate * t.predict(X)
        return out


def fit_boosted(
    X, Y, n_stages: int = 200, learning_rate: float = 0.05, max_depth: int | None = 3,
    min_samples_leaf: int = 1, seed: int = 0,
) -> BoostedModel:
    """Squared-loss gradient boosting.

    Each stage fits one vector-leaf tree to the residual matrix of all
    outputs, so predictions stay linear in the targets within every leaf
    partition and sum-zero targets give sum-zero predictions. Per-output
    training MSE is recorded after every stage and never increases.
    ``seed`` is accepted for interface symmetry; fitting is deterministic.
    """
    if n_stages < 1:
        raise ValueError("n_stages must be >= 1")
    if not 0.0 <= learning_rate <= 1.0:
        raise ValueError("learning_rate must lie in [0, 1]")
    X = as_matrix(X, "X")
    Y = as_matrix(Y, "Y")
    init = Y.mean(axis=0)
    F = np.tile(init, (Y.shape[0], 1))
    mse = np.empty((n_stages + 1, Y.shape[1]))
    mse[0] = np.mean((Y - F) ** 2, axis=0)
    trees = []
    for m in range(n_stages):
        tree = fit_tree(X, Y - F, max_depth, min_samples_leaf)
        F = F + learning_rate * tree.predict(X)
        mse[m + 1] = np.mean((Y - F) ** 2, axis=0)
        trees.append(tree)
    return BoostedModel(init, tuple(trees), float(learning_rate), int(n_stages), mse)
