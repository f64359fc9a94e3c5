"""Classical comparison models: linear SGD (hinge), k-NN, CART and a small MLP.

All four are written against numpy directly and share one interface::

    model = fit("knn", train_split, seed=0, k=5)
    code = predict(model, x)
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .data import DataSplit
from .errors import DimensionMismatch, EmptySplit, NotFitted
from .network import NetworkConfig, QNetworkParams, backward, forward, forward_cached, init_params, sgd_update

KINDS = ("sgd-linear", "knn", "decision-tree", "mlp")
DISPLAY_NAMES = {
    "sgd-linear": "SGD (linear hinge)",
    "knn": "KNN",
    "decision-tree": "Decision Tree Classifier",
    "mlp": "MLP",
}


class BaselineModel:
    kind = ""

    def __init__(self, seed: int = 0):
        self.seed = seed
        self.dim: int | None = None
        self.num_classes: int | None = None

    @property
    def fitted(self) -> bool:
        return self.dim is not None

    def fit(self, split: DataSplit) -> "BaselineModel":
        if len(split) == 0:
            raise EmptySplit("cannot fit on an empty split")
        self.dim = split.dim
        self.num_classes = split.num_classes
        self._fit(split.X, split.y)
        return self

    def _check(self, X: np.ndarray) -> np.ndarray:
        if not self.fitted:
            raise NotFitted(f"{self.kind} model used before fit")
        X = np.asarray(X, dtype=np.float64)
        if X.ndim == 1:
            X = X.reshape(1, -1)
        if X.shape[1] != self.dim:
            raise DimensionMismatch(f"expected {self.dim} features, got {X.shape[1]}")
        return X

    def predict_batch(self, X) -> np.ndarray:
        return self._predict(self._check(X))

    def predict(self, x) -> int:
        return int(self.predict_batch(x)[0])

    def accuracy(self, split: DataSplit) -> float:
        if len(split) == 0:
            return 0.0
        return float(np.mean(self.predict_batch(split.X) == split.y))

    def _fit(self, X, y):
        raise NotImplementedError

    def _predict(self, X):
        raise NotImplementedError


class SGDLinear(BaselineModel):
    """One-vs-rest linear model, hinge loss with L2 penalty, per-sample SGD."""

    kind = "sgd-linear"

    def __init__(self, seed=0, epochs=30, eta0=0.1, alpha=1e-4):
        super().__init__(seed)
        self.epochs = epochs
        self.eta0 = eta0
        self.alpha = alpha

    def _fit(self, X, y):
        n, d = X.shape
        k = self.num_classes
        rng = np.random.default_rng(self.seed)
        W = np.zeros((d, k))
        b = np.zeros(k)
        signs = np.where(np.arange(k)[None, :] == y[:, None], 1.0, -1.0)
        for epoch in range(self.epochs):
            eta = self.eta0 / np.sqrt(1.0 + epoch)
            for i in rng.permutation(n):
                x = X[i]
                s = signs[i]
                active = s * (x @ W + b) < 1.0
                W *= 1.0 - eta * self.alpha
                if active.any():
                    W[:, active] += eta * np.outer(x, s[active])
                    b[active] += eta * s[active]
        self.W, self.b = W, b

    def decision_function(self, X):
        return self._check(X) @ self.W + self.b

    def _predict(self, X):
        return np.argmax(X @ self.W + self.b, axis=1)


class KNN(BaselineModel):
    kind = "knn"

    def __init__(self, seed=0, k=5):
        super().__init__(seed)
        self.k = k

    def _fit(self, X, y):
        self.X_train = X.copy()
        self.y_train = y.copy()

    def _predict(self, X):
        k = min(self.k, len(self.X_train))
        out = np.empty(len(X), dtype=np.int64)
        for i, x in enumerate(X):
            d2 = ((self.X_train - x) ** 2).sum(axis=1)
            nearest = np.argsort(d2, kind="stable")[:k]
            votes = np.bincount(self.y_train[nearest], minlength=self.num_classes)
            out[i] = int(np.argmax(votes))
        return out


@dataclass
class _Node:
    label: int
    feature: int = -1
    threshold: float = 0.0
    left: "_Node | None" = None
    right: "_Node | None" = None

    @property
    def is_leaf(self) -> bool:
        return self.left is None


def _gini_sums(counts: np.ndarray, totals: np.ndarray) -> np.ndarray:
    # n * gini = n - sum(c^2)/n ; returned per candidate split
    with np.errstate(invalid="ignore", divide="ignore"):
        g = totals - (counts.astype(np.float64) ** 2).sum(axis=-1) / totals
    return np.where(totals > 0, g, 0.0)


class DecisionTree(BaselineModel):
    """CART with Gini impurity, grown until leaves are pure or unsplittable.

    Candidate thresholds are midpoints between consecutive distinct values.
    Equal-impurity candidates go to the lowest feature index, then the lowest
    threshold.
    """

    kind = "decision-tree"

    def __init__(self, seed=0, max_depth: int | None = None):
        super().__init__(seed)
        self.max_depth = max_depth

    def _best_split(self, X, y):
        n, d = X.shape
        k = self.num_classes
        best = None  # (score, feature, threshold)
        onehot = np.eye(k, dtype=np.int64)[y]
        for f in range(d):
            order = np.argsort(X[:, f], kind="stable")
            xs = X[order, f]
            left = np.cumsum(onehot[order], axis=0)[:-1]
            valid = xs[1:] > xs[:-1]
            if not valid.any():
                continue
            right = left[-1] + onehot[order[-1]] - left
            nl = np.arange(1, n, dtype=np.float64)
            score = _gini_sums(left, nl) + _gini_sums(right, n - nl)
            score = np.where(valid, score, np.inf)
            j = int(np.argmin(score))
            if best is None or score[j] < best[0] - 1e-12:
                best = (float(score[j]), f, 0.5 * (xs[j] + xs[j + 1]))
        return best

    def _fit(self, X, y):
        self.root = self._grow(X, y, 0)

    def _grow(self, X, y, depth):
        counts = np.bincount(y, minlength=self.num_classes)
        node = _Node(int(np.argmax(counts)))
        if counts.max() == len(y) or (self.max_depth is not None and depth >= self.max_depth):
            return node
        split = self._best_split(X, y)
        if split is None:
            return node
        _, f, thr = split
        go_left = X[:, f] <= thr
        node.feature, node.threshold = f, thr
        node.left = self._grow(X[go_left], y[go_left], depth + 1)
        node.right = self._grow(X[~go_left], y[~go_left], depth + 1)
        return node

    def _predict(self, X):
        out = np.empty(len(X), dtype=np.int64)
        for i, x in enumerate(X):
            node = self.root
            while not node.is_leaf:
                node = node.left if x[node.feature] <= node.threshold else node.right
            out[i] = node.label
        return out

    def depth(self) -> int:
        def walk(node):
            return 0 if node.is_leaf else 1 + max(walk(node.left), walk(node.right))

        return walk(self.root)


class MLPClassifier(BaselineModel):
    """The Q-network reused as a softmax cross-entropy classifier (minibatch SGD)."""

    kind = "mlp"

    def __init__(self, seed=0, hidden=(128,), epochs=200, batch_size=32, lr=0.1):
        super().__init__(seed)
        self.hidden = tuple(hidden)
        self.epochs = epochs
        self.batch_size = batch_size
        self.lr = lr

    def _fit(self, X, y):
        self.config = NetworkConfig(X.shape[1], self.num_classes, hidden=self.hidden)
        rng = np.random.default_rng(self.seed)
        params = init_params(self.config, int(rng.integers(2**31)))
        n = len(X)
        for _ in range(self.epochs):
            order = rng.permutation(n)
            for start in range(0, n, self.batch_size):
                idx = order[start:start + self.batch_size]
                cache = forward_cached(params, self.config, X[idx], training=True, rng=rng)
                logits = cache.out - cache.out.max(axis=1, keepdims=True)
                p = np.exp(logits)
                p /= p.sum(axis=1, keepdims=True)
                p[np.arange(len(idx)), y[idx]] -= 1.0
                sgd_update(params, backward(params, self.config, cache, p / len(idx)), self.lr)
        self.params: QNetworkParams = params

    def _predict(self, X):
        return np.argmax(forward(self.params, self.config, X), axis=1)


_REGISTRY = {cls.kind: cls for cls in (SGDLinear, KNN, DecisionTree, MLPClassifier)}


def fit(kind: str, train: DataSplit, seed: int = 0, **config) -> BaselineModel:
    try:
        cls = _REGISTRY[kind]
    except KeyError:
        raise ValueError(f"unknown baseline kind {kind!r}; choose from {KINDS}") from None
    return cls(seed=seed, **config).fit(train)


def predict(model: BaselineModel, x) -> int:
    return model.predict(x)


@dataclass
class Comparison:
    rows: list[tuple[str, float]] = field(default_factory=list)

    def as_dict(self) -> dict[str, float]:
        return dict(self.rows)


def benchmark(models: dict[str, BaselineModel], test: DataSplit, extra: dict[str, float] | None = None) -> Comparison:
    """Test accuracy per model, in insertion order, with ``extra`` rows (e.g. the DQN) appended."""
    rows = [(name, m.accuracy(test)) for name, m in models.items()]
    rows += list((extra or {}).items())
    return Comparison(rows)
