"""Gradient boosted decision trees with multi-class softmax loss.

Exact greedy split search on presorted feature columns; one regression tree
per class per boosting round, fitted to the softmax gradients with a
second-order leaf weight. Kept free of external learners so that split
gains, feature importances, and tie-breaking stay fully deterministic and
inspectable.
"""

from __future__ import annotations

import numpy as np

MIN_GAIN = 1e-12


class Tree:
    """Flat-array binary regression tree.

    feature[i] < 0 marks node i as a leaf with value value[i]; internal
    nodes send x to left[i] when x[feature[i]] <= threshold[i].
    """

    __slots__ = ("feature", "threshold", "left", "right", "value")

    def __init__(self):
        self.feature: list[int] = []
        self.threshold: list[float] = []
        self.left: list[int] = []
        self.right: list[int] = []
        self.value: list[float] = []

    def add_leaf(self, value: float) -> int:
        self.feature.append(-1)
        self.threshold.append(0.0)
        self.left.append(-1)
        self.right.append(-1)
        self.value.append(float(value))
        return len(self.feature) - 1

    def add_split(self, feature: int, threshold: float) -> int:
        self.feature.append(int(feature))
        self.threshold.append(float(threshold))
        self.left.append(-1)
        self.right.append(-1)
        self.value.append(0.0)
        return len(self.feature) - 1

    def predict(self, X: np.ndarray) -> np.ndarray:
        feature = np.asarray(self.feature)
        threshold = np.asarray(self.threshold)
        left = np.asarray(self.left)
        right = np.asarray(self.right)
        value = np.asarray(self.value)
        idx = np.zeros(len(X), dtype=int)
        while True:
            f = feature[idx]
            internal = f >= 0
            if not internal.any():
                break
            rows = np.nonzero(internal)[0]
            go_left = X[rows, f[rows]] <= threshold[idx[rows]]
            idx[rows[go_left]] = left[idx[rows[go_left]]]
            idx[rows[~go_left]] = right[idx[rows[~go_left]]]
        return value[idx]


def softmax(margins: np.ndarray) -> np.ndarray:
    z = margins - margins.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


class _Builder:
    """Grows one tree on (gradient, hessian) targets for a fixed sample set."""

    def __init__(self, X, grad, hess, max_depth, min_samples_leaf, reg_lambda,
                 feature_gain):
        self.X = X
        self.grad = grad
        self.hess = hess
        self.max_depth = max_depth
        self.min_leaf = min_samples_leaf
        self.lam = reg_lambda
        self.feature_gain = feature_gain
        self.tree = Tree()

    def build(self, order):
        """`order`: per-feature presorted row indices restricted to this node."""
        self._grow(order, depth=0)
        return self.tree

    def _leaf_value(self, rows):
        g = self.grad[rows].sum()
        h = self.hess[rows].sum()
        return -g / (h + self.lam)

    def _grow(self, order, depth):
        rows = order[0]
        n = len(rows)
        if depth >= self.max_depth or n < 2 * self.min_leaf:
            return self.tree.add_leaf(self._leaf_value(rows))

        g_total = self.grad[rows].sum()
        h_total = self.hess[rows].sum()
        parent_score = g_total * g_total / (h_total + self.lam)

        best_gain = MIN_GAIN
        best = None  # (feature, position in sorted order)
        for f in range(self.X.shape[1]):
            idx = order[f]
            xs = self.X[idx, f]
            gl = np.cumsum(self.grad[idx])[:-1]
            hl = np.cumsum(self.hess[idx])[:-1]
            gr = g_total - gl
            hr = h_total - hl
            gain = 0.5 * (gl * gl / (hl + self.lam) + gr * gr / (hr + self.lam)
                          - parent_score)
            # a split after position p is valid when both sides are large
            # enough and the feature value actually changes there
            pos = np.arange(1, n)
            valid = ((pos >= self.min_leaf) & (pos <= n - self.min_leaf)
                     & (xs[1:] > xs[:-1]))
            if not valid.any():
                continue
            gain = np.where(valid, gain, -np.inf)
            p = int(np.argmax(gain))
            if gain[p] > best_gain:
                best_gain = float(gain[p])
                best = (f, p + 1)

        if best is None:
            return self.tree.add_leaf(self._leaf_value(rows))

        f, p = best
        idx = order[f]
        threshold = 0.5 * (self.X[idx[p - 1], f] + self.X[idx[p], f])
        left_rows = idx[:p]
        self.feature_gain[f] += best_gain

        in_left = np.zeros(self.X.shape[0], dtype=bool)
        in_left[left_rows] = True
        left_order = [o[in_left[o]] for o in order]
        right_order = [o[~in_left[o]] for o in order]

        node = self.tree.add_split(f, threshold)
        self.tree.left[node] = self._grow(left_order, depth + 1)
        self.tree.right[node] = self._grow(right_order, depth + 1)
        return node


class GradientBoostedTrees:
    """One-tree-per-class-per-round softmax boosting ensemble."""

    def __init__(self, n_classes, learning_rate=0.1, n_rounds=200, max_depth=4,
                 min_samples_leaf=10, reg_lambda=1.0):
        self.n_classes = n_classes
        self.learning_rate = learning_rate
        self.n_rounds = n_rounds
        self.max_depth = max_depth
        self.min_samples_leaf = min_samples_leaf
        self.reg_lambda = reg_lambda
        self.trees: list[list[Tree]] = []   # [round][class]
        self.n_features = None
        self.feature_gain = None

    def fit(self, X, y):
        """X: (n, d) float array; y: (n,) integer class indices."""
        X = np.asarray(X, dtype=float)
        y = np.asarray(y, dtype=int)
        n, d = X.shape
        self.n_features = d
        self.feature_gain = np.zeros(d)

        onehot = np.zeros((n, self.n_classes))
        onehot[np.arange(n), y] = 1.0
        margins = np.zeros((n, self.n_classes))
        base_order = [np.argsort(X[:, f], kind="stable") for f in range(d)]

        self.trees = []
        for _ in range(self.n_rounds):
            p = softmax(margins)
            grad = p - onehot
            hess = p * (1.0 - p)
            round_trees = []
            for k in range(self.n_classes):
                builder = _Builder(X, grad[:, k], hess[:, k], self.max_depth,
                                   self.min_samples_leaf, self.reg_lambda,
                                   self.feature_gain)
                tree = builder.build(base_order)
                margins[:, k] += self.learning_rate * tree.predict(X)
                round_trees.append(tree)
            self.trees.append(round_trees)
        return self

    def decision_function(self, X):
        X = np.asarray(X, dtype=float)
        if X.shape[1] != self.n_features:
            raise ValueError(
                f"expected {self.n_features} features, got {X.shape[1]}")
        margins = np.zeros((len(X), self.n_classes))
        for round_trees in self.trees:
            for k, tree in enumerate(round_trees):
                margins[:, k] += self.learning_rate * tree.predict(X)
        return margins

    def predict_proba(self, X):
        return softmax(self.decision_function(X))

    def predict(self, X):
        return np.argmax(self.predict_proba(X), axis=1)

    def feature_importances(self):
        total = self.feature_gain.sum()
        if total == 0:
            return np.zeros_like(self.feature_gain)
        return self.feature_gain / total
