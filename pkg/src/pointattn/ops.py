"""Differentiable building blocks with hand-written backward passes.

Every op follows the same contract: ``forward`` caches what backward needs
on ``self._*`` attributes, ``backward`` takes the upstream gradient, adds
parameter gradients into the ``Param`` buffers and returns the gradient
with respect to the input.  One forward per backward.
"""

from __future__ import annotations

import numpy as np

from .core import DEFAULT_DTYPE, Buffer, Module, Param, as_dtype_2d, uniform_init

NORM_EPS = 1e-5
NORM_STAT_MOMENTUM = 0.1


class Linear(Module):
    """y = x W + b over the last axis of an (n, d_in) input."""

    def __init__(self, d_in: int, d_out: int, rng: np.random.Generator, dtype=DEFAULT_DTYPE):
        self.d_in = d_in
        self.d_out = d_out
        self.W = Param(uniform_init(rng, (d_in, d_out), fan_in=d_in, dtype=dtype))
        self.b = Param(np.zeros(d_out, dtype=dtype))
        self._x = None

    def forward(self, x: np.ndarray) -> np.ndarray:
        x = as_dtype_2d(x, self.W.value.dtype, "linear input")
        if x.shape[1] != self.d_in:
            raise ValueError(f"linear expects {self.d_in} input channels, got {x.shape[1]}")
        self._x = x
        return x @ self.W.value + self.b.value

    def backward(self, dy: np.ndarray) -> np.ndarray:
        self.W.grad += self._x.T @ dy
        self.b.grad += dy.sum(axis=0)
        return dy @ self.W.value.T


class Relu(Module):
    def __init__(self):
        self._x = None

    def forward(self, x: np.ndarray) -> np.ndarray:
        self._x = x
        return np.where(x > 0, x, 0)

    def backward(self, dy: np.ndarray) -> np.ndarray:
        return np.where(self._x > 0, dy, 0)


class Mlp(Module):
    """Two linear layers around one ReLU."""

    def __init__(self, d_in: int, d_hidden: int, d_out: int, rng, dtype=DEFAULT_DTYPE):
        self.lin1 = Linear(d_in, d_hidden, rng, dtype)
        self.act = Relu()
        self.lin2 = Linear(d_hidden, d_out, rng, dtype)

    def forward(self, x: np.ndarray) -> np.ndarray:
        return self.lin2.forward(self.act.forward(self.lin1.forward(x)))

    def backward(self, dy: np.ndarray) -> np.ndarray:
        return self.lin1.backward(self.act.backward(self.lin2.backward(dy)))


class PointNorm(Module):
    """Channel standardization over the point axis.

    Points within one cloud play the role of batch elements: training mode
    normalizes with the current cloud's per-channel mean and (biased)
    variance and updates running statistics; eval mode uses the running
    statistics.  Training mode needs at least two points.
    """

    def __init__(self, channels: int, dtype=DEFAULT_DTYPE):
        self.channels = channels
        self.gain = Param(np.ones(channels, dtype=dtype))
        self.bias = Param(np.zeros(channels, dtype=dtype))
        self.running_mean = Buffer(np.zeros(channels, dtype=dtype))
        self.running_var = Buffer(np.ones(channels, dtype=dtype))
        self._cache = None

    def forward(self, x: np.ndarray, training: bool) -> np.ndarray:
        x = as_dtype_2d(x, self.gain.value.dtype, "norm input")
        if x.shape[1] != self.channels:
            raise ValueError(f"norm expects {self.channels} channels, got {x.shape[1]}")
        if training:
            if x.shape[0] < 2:
                raise RuntimeError("point normalization needs n >= 2 points in training mode")
            mean = x.mean(axis=0)
            var = x.var(axis=0)
            m = NORM_STAT_MOMENTUM
            self.running_mean.value = ((1 - m) * self.running_mean.value + m * mean).astype(x.dtype)
            self.running_var.value = ((1 - m) * self.running_var.value + m * var).astype(x.dtype)
        else:
            mean = self.running_mean.value
            var = self.running_var.value
        inv_std = 1.0 / np.sqrt(var + NORM_EPS)
        xhat = (x - mean) * inv_std
        self._cache = (xhat, inv_std, training, x.shape[0])
        return self.gain.value * xhat + self.bias.value

    def backward(self, dy: np.ndarray) -> np.ndarray:
        xhat, inv_std, training, n = self._cache
        self.gain.grad += (dy * xhat).sum(axis=0)
        self.bias.grad += dy.sum(axis=0)
        dxhat = dy * self.gain.value
        if not training:
            return dxhat * inv_std
        # Batch-statistics backward: mean and variance both depend on x.
        return (inv_std / n) * (n * dxhat - dxhat.sum(axis=0) - xhat * (dxhat * xhat).sum(axis=0))


class NeighborSoftmax(Module):
    """Softmax over the neighbor axis (axis 1) of (n, k) or (n, k, c) logits,
    independently per point and per channel."""

    def __init__(self):
        self._probs = None

    def forward(self, logits: np.ndarray) -> np.ndarray:
        if logits.ndim not in (2, 3):
            raise ValueError(f"expected (n, k) or (n, k, c) logits, got shape {logits.shape}")
        if logits.shape[1] == 0:
            raise ValueError("empty neighbor axis")
        shifted = logits - logits.max(axis=1, keepdims=True)
        e = np.exp(shifted)
        self._probs = e / e.sum(axis=1, keepdims=True)
        return self._probs

    def backward(self, dy: np.ndarray) -> np.ndarray:
        p = self._probs
        return p * (dy - (dy * p).sum(axis=1, keepdims=True))


class MaxPoolNeighbors(Module):
    """(n, k, c) -> (n, c) channel-wise max over neighbors; backward routes
    the gradient to the recorded argmax only."""

    def __init__(self):
        self._cache = None

    def forward(self, feats: np.ndarray) -> np.ndarray:
        if feats.ndim != 3:
            raise ValueError(f"expected (n, k, c) features, got shape {feats.shape}")
        if feats.shape[1] == 0:
            raise ValueError("empty neighbor axis")
        arg = feats.argmax(axis=1)
        self._cache = (arg, feats.shape)
        return np.take_along_axis(feats, arg[:, None, :], axis=1)[:, 0, :]

    def backward(self, dy: np.ndarray) -> np.ndarray:
        arg, shape = self._cache
        dx = np.zeros(shape, dtype=dy.dtype)
        np.put_along_axis(dx, arg[:, None, :], dy[:, None, :], axis=1)
        return dx


class GlobalAvgPool(Module):
    """(n, c) -> (1, c) mean over all points."""

    def __init__(self):
        self._n = None

    def forward(self, feats: np.ndarray) -> np.ndarray:
        if feats.ndim != 2 or feats.shape[0] == 0:
            raise ValueError(f"expected nonempty (n, c) features, got shape {feats.shape}")
        self._n = feats.shape[0]
        return feats.mean(axis=0, keepdims=True)

    def backward(self, dy: np.ndarray) -> np.ndarray:
        return np.broadcast_to(dy / self._n, (self._n, dy.shape[1])).copy()


def relu(x: np.ndarray) -> np.ndarray:
    return np.maximum(x, 0)


def softmax_over_neighbors(logits: np.ndarray) -> np.ndarray:
    """Forward-only convenience wrapper around :class:`NeighborSoftmax`."""
    return NeighborSoftmax().forward(logits)


def scatter_add_rows(n_rows: int, idx: np.ndarray, vals: np.ndarray) -> np.ndarray:
    """Sum (n, k, c) values into an (n_rows, c) array at row indices ``idx``
    (shape (n, k)).  Single bincount over a combined (row, channel) key."""
    c = vals.shape[-1]
    combined = (idx[..., None] * c + np.arange(c)).ravel()
    out = np.bincount(combined, weights=vals.ravel().astype(np.float64), minlength=n_rows * c)
    return out.reshape(n_rows, c).astype(vals.dtype)
