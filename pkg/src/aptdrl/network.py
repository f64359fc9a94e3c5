"""Dense leaky-ReLU perceptron with hand-written backpropagation.

Layers compute ``X @ W + b`` with ``W`` shaped ``(fan_in, fan_out)``. Hidden
layers use a leaky rectifier; the output layer is linear, optionally followed
by a per-row min-max rescale.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ShapeMismatch

DEFAULT_HIDDEN = (1024, 512, 512, 256)


@dataclass(frozen=True)
class NetworkConfig:
    input_dim: int
    output_dim: int
    hidden: tuple[int, ...] = DEFAULT_HIDDEN
    negative_slope: float = 0.01
    dropout_rate: float = 0.0
    output_normalization: bool = False
    # arithmetic precision; parameters are always checkpointed as float64
    dtype: str = "float64"

    def __post_init__(self):
        object.__setattr__(self, "hidden", tuple(int(h) for h in self.hidden))
        widths = (self.input_dim, *self.hidden, self.output_dim)
        if any(w < 1 for w in widths):
            raise ShapeMismatch(f"all layer widths must be >= 1, got {widths}")
        if not 0.0 <= self.negative_slope <= 1.0:
            raise ValueError(f"negative_slope must be in [0, 1], got {self.negative_slope}")
        if not 0.0 <= self.dropout_rate < 1.0:
            raise ValueError(f"dropout_rate must be in [0, 1), got {self.dropout_rate}")
        if self.dtype not in ("float64", "float32"):
            raise ValueError(f"dtype must be float64 or float32, got {self.dtype!r}")

    @property
    def widths(self) -> tuple[int, ...]:
        return (self.input_dim, *self.hidden, self.output_dim)

    @property
    def np_dtype(self):
        return np.dtype(self.dtype)


@dataclass
class QNetworkParams:
    weights: list[np.ndarray]
    biases: list[np.ndarray]
    init: dict = field(default_factory=dict)

    def copy(self) -> "QNetworkParams":
        return QNetworkParams([w.copy() for w in self.weights], [b.copy() for b in self.biases], dict(self.init))

    def tensors(self) -> list[np.ndarray]:
        out = []
        for w, b in zip(self.weights, self.biases):
            out.extend((w, b))
        return out

    def shapes(self) -> list[tuple[int, ...]]:
        return [t.shape for t in self.tensors()]

    def num_parameters(self) -> int:
        return sum(t.size for t in self.tensors())

    def all_finite(self) -> bool:
        return all(np.isfinite(t).all() for t in self.tensors())

    def equals(self, other: "QNetworkParams") -> bool:
        a, b = self.tensors(), other.tensors()
        return len(a) == len(b) and all(x.shape == y.shape and np.array_equal(x, y) for x, y in zip(a, b))


def init_params(config: NetworkConfig, seed: int) -> QNetworkParams:
    """Uniform He initialisation: ``W ~ U(-sqrt(6/fan_in), sqrt(6/fan_in))``, zero biases."""
    rng = np.random.default_rng(seed)
    dtype = config.np_dtype
    weights, biases = [], []
    widths = config.widths
    for fan_in, fan_out in zip(widths[:-1], widths[1:]):
        bound = np.sqrt(6.0 / fan_in)
        weights.append(rng.uniform(-bound, bound, size=(fan_in, fan_out)).astype(dtype))
        biases.append(np.zeros(fan_out, dtype=dtype))
    return QNetworkParams(weights, biases, {"scheme": "he-uniform", "seed": int(seed)})


def zeros_like_params(params: QNetworkParams) -> QNetworkParams:
    return QNetworkParams([np.zeros_like(w) for w in params.weights], [np.zeros_like(b) for b in params.biases])


def check_compatible(params: QNetworkParams, config: NetworkConfig) -> None:
    widths = config.widths
    expected = [(a, b) for a, b in zip(widths[:-1], widths[1:])]
    got = [w.shape for w in params.weights]
    if got != expected or [b.shape for b in params.biases] != [(s[1],) for s in expected]:
        raise ShapeMismatch(f"parameter shapes {got} do not match architecture {widths}")


def leaky_relu(z: np.ndarray, slope: float) -> np.ndarray:
    # max(z, slope*z) equals the leaky rectifier for 0 <= slope <= 1 and is far cheaper than np.where
    tmp = z * slope
    return np.maximum(z, tmp, out=tmp)


def leaky_relu_grad(z: np.ndarray, slope: float) -> np.ndarray:
    d = np.greater(z, 0).astype(z.dtype)
    d *= 1.0 - slope
    d += slope
    return d


def minmax_rows(q: np.ndarray) -> np.ndarray:
    lo = q.min(axis=1, keepdims=True)
    span = q.max(axis=1, keepdims=True) - lo
    safe = np.where(span > 0, span, 1.0)
    return np.where(span > 0, (q - lo) / safe, 0.0)


@dataclass
class ForwardCache:
    inputs: list[np.ndarray]  # input to each layer
    pre: list[np.ndarray]  # pre-activation of each hidden layer
    masks: list[np.ndarray | None]  # dropout masks (already scaled), per hidden layer
    raw_out: np.ndarray
    out: np.ndarray


def _as_batch(states, config: NetworkConfig) -> np.ndarray:
    X = np.asarray(states, dtype=config.np_dtype)
    if X.ndim == 1:
        X = X.reshape(1, -1)
    if X.ndim != 2 or X.shape[1] != config.input_dim:
        raise ShapeMismatch(f"expected states of width {config.input_dim}, got shape {X.shape}")
    return X


def forward_cached(params: QNetworkParams, config: NetworkConfig, states, training: bool = False, rng=None) -> ForwardCache:
    X = _as_batch(states, config)
    drop = config.dropout_rate if training else 0.0
    if drop > 0 and rng is None:
        raise ValueError("dropout in training mode needs an rng")
    inputs, pre, masks = [], [], []
    h = X
    last = len(params.weights) - 1
    for i, (w, b) in enumerate(zip(params.weights, params.biases)):
        inputs.append(h)
        z = h @ w
        z += b
        if i == last:
            h = z
            break
        pre.append(z)
        h = leaky_relu(z, config.negative_slope)
        if drop > 0:
            mask = (rng.random(h.shape) >= drop).astype(h.dtype) / (1.0 - drop)
            h = h * mask
            masks.append(mask)
        else:
            masks.append(None)
    out = minmax_rows(h) if config.output_normalization else h
    return ForwardCache(inputs, pre, masks, h, out)


def forward(params: QNetworkParams, config: NetworkConfig, states, training: bool = False, rng=None) -> np.ndarray:
    """Q-values for a batch of states, shape ``(batch, output_dim)``."""
    return forward_cached(params, config, states, training, rng).out


def _minmax_rows_backward(raw: np.ndarray, g: np.ndarray) -> np.ndarray:
    n = raw.shape[0]
    rows = np.arange(n)
    imin = raw.argmin(axis=1)
    imax = raw.argmax(axis=1)
    lo = raw[rows, imin][:, None]
    span = raw[rows, imax][:, None] - lo
    ok = span[:, 0] > 0
    safe = np.where(span > 0, span, 1.0)
    y = (raw - lo) / safe
    gy = (g * y).sum(axis=1)
    gs = g.sum(axis=1)
    d = g / safe
    d[rows, imin] += (gy - gs) / safe[:, 0]
    d[rows, imax] -= gy / safe[:, 0]
    d[~ok] = 0.0
    return d


def backward(params: QNetworkParams, config: NetworkConfig, cache: ForwardCache, grad_out: np.ndarray) -> QNetworkParams:
    """Gradients of a scalar loss w.r.t. every weight and bias, given dLoss/dOutput."""
    g = np.asarray(grad_out, dtype=cache.raw_out.dtype)
    if config.output_normalization:
        g = _minmax_rows_backward(cache.raw_out, g)
    n_layers = len(params.weights)
    gw: list[np.ndarray] = [None] * n_layers  # type: ignore[list-item]
    gb: list[np.ndarray] = [None] * n_layers  # type: ignore[list-item]
    slope = config.negative_slope
    for i in range(n_layers - 1, -1, -1):
        gw[i] = cache.inputs[i].T @ g
        gb[i] = g.sum(axis=0)
        if i == 0:
            break
        g = g @ params.weights[i].T
        mask = cache.masks[i - 1]
        if mask is not None:
            g = g * mask
        g *= leaky_relu_grad(cache.pre[i - 1], slope)
    return QNetworkParams(gw, gb)


def global_norm(grads: QNetworkParams) -> float:
    return float(np.sqrt(sum(float(np.vdot(t, t)) for t in grads.tensors())))


def sgd_update(params: QNetworkParams, grads: QNetworkParams, lr: float) -> None:
    """In-place ``theta <- theta - lr * grad``."""
    for p, g in zip(params.tensors(), grads.tensors()):
        p -= lr * g


class Adam:
    """Bias-corrected Adam moments for one parameter set; updates in place."""

    # elements per pass; keeps the working set of one chunk inside L2
    CHUNK = 1 << 15

    def __init__(self, params: QNetworkParams, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self.m = [np.zeros_like(t) for t in params.tensors()]
        self.v = [np.zeros_like(t) for t in params.tensors()]
        self._scratch = np.empty(self.CHUNK, dtype=params.weights[0].dtype)
        self.t = 0

    def update(self, params: QNetworkParams, grads: QNetworkParams, lr: float) -> None:
        self.t += 1
        step = lr / (1.0 - self.beta1**self.t)
        inv_root_c2 = 1.0 / np.sqrt(1.0 - self.beta2**self.t)
        for p, g, m, v in zip(params.tensors(), grads.tensors(), self.m, self.v):
            p, g, m, v = p.reshape(-1), np.ascontiguousarray(g).reshape(-1), m.reshape(-1), v.reshape(-1)
            for lo in range(0, p.size, self.CHUNK):
                hi = min(lo + self.CHUNK, p.size)
                self._chunk(p[lo:hi], g[lo:hi], m[lo:hi], v[lo:hi], self._scratch[: hi - lo], step, inv_root_c2)

    def _chunk(self, p, g, m, v, tmp, step, inv_root_c2) -> None:
        np.multiply(g, 1.0 - self.beta1, out=tmp)
        m *= self.beta1
        m += tmp
        np.multiply(g, g, out=tmp)
        tmp *= 1.0 - self.beta2
        v *= self.beta2
        v += tmp
        # tmp <- step * m_hat / (sqrt(v_hat) + eps)
        np.sqrt(v, out=tmp)
        tmp *= inv_root_c2
        tmp += self.eps
        np.divide(m, tmp, out=tmp)
        tmp *= step
        p -= tmp
