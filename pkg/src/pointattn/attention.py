"""Local self-attention over point neighborhoods, with ablation variants.

The layer aggregates each point's k-nearest neighbors.  Four operators are
selectable:

* ``vector``  - attention weights are per-channel vectors produced by an
  MLP of the query/neighbor feature difference, modulating transformed
  neighbor features elementwise,
* ``scalar``  - classic dot-product attention with one weight per neighbor,
* ``mlp``     - pointwise two-layer MLP, no neighbor exchange,
* ``mlp_pool``- pointwise MLP followed by channel-wise max over each
  neighborhood.

A trainable position encoding of the coordinate difference p_i - p_j can
enter the attention logits, the transformed features, both, or neither
(``pos_mode``); the ``absolute`` mode instead sums encodings of the two
endpoint coordinates.  Neighbor weights are normalized per channel with a
softmax over the neighborhood, or left raw (``normalize='identity'``).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .core import DEFAULT_DTYPE, Module
from .geometry import NeighborTable
from .ops import Linear, MaxPoolNeighbors, Mlp, NeighborSoftmax, scatter_add_rows

OPERATORS = ("vector", "scalar", "mlp", "mlp_pool")
POS_MODES = ("none", "absolute", "relative", "relative_attn_only", "relative_feat_only")
NORMALIZE = ("softmax", "identity")


@dataclass(frozen=True)
class AttentionConfig:
    d: int
    k: int
    operator: str = "vector"
    pos_mode: str = "relative"
    normalize: str = "softmax"
    # Optional 1/sqrt(d) temperature on scalar logits; off by default.
    scaled: bool = False

    def __post_init__(self):
        if self.d < 1 or self.k < 1:
            raise ValueError("channel width and neighbor count must be >= 1")
        if self.operator not in OPERATORS:
            raise ValueError(f"unknown operator {self.operator!r}; expected one of {OPERATORS}")
        if self.pos_mode not in POS_MODES:
            raise ValueError(f"unknown pos_mode {self.pos_mode!r}; expected one of {POS_MODES}")
        if self.normalize not in NORMALIZE:
            raise ValueError(f"unknown normalize {self.normalize!r}; expected one of {NORMALIZE}")

    @property
    def pos_in_attn(self) -> bool:
        return self.pos_mode in ("relative", "relative_attn_only", "absolute")

    @property
    def pos_in_feat(self) -> bool:
        return self.pos_mode in ("relative", "relative_feat_only", "absolute")


def canonical_rows(table: NeighborTable) -> tuple[np.ndarray, np.ndarray]:
    """Neighbor rows re-sorted ascending by (sq_dist, index).

    Tables from knn_search arrive in this order already; re-sorting makes
    the layer's output independent of the row order it is handed, so the
    neighborhood truly acts as a set.
    """
    order = np.lexsort((table.indices, table.sq_dists), axis=1)
    return (
        np.take_along_axis(table.indices, order, axis=1),
        np.take_along_axis(table.sq_dists, order, axis=1),
    )


class LocalAttention(Module):
    def __init__(self, cfg: AttentionConfig, rng: np.random.Generator, dtype=DEFAULT_DTYPE):
        self.cfg = cfg
        d = cfg.d
        uses_pos = cfg.pos_in_attn or cfg.pos_in_feat
        if cfg.operator in ("vector", "scalar"):
            self.phi = Linear(d, d, rng, dtype)
            self.psi = Linear(d, d, rng, dtype)
            self.alpha = Linear(d, d, rng, dtype)
        if cfg.operator == "vector":
            self.gamma = Mlp(d, d, d, rng, dtype)
            if uses_pos:
                # One shared encoder feeds both the attention and the
                # feature branch; its gradient accumulates from both uses.
                self.theta = Mlp(3, d, d, rng, dtype)
        elif cfg.operator == "scalar":
            if cfg.pos_in_attn:
                self.theta_scalar = Mlp(3, d, 1, rng, dtype)
        else:
            self.gamma = Mlp(d, d, d, rng, dtype)
        if cfg.normalize == "softmax":
            self.rho = NeighborSoftmax()
        if cfg.operator == "mlp_pool":
            self.pool = MaxPoolNeighbors()
        self._cache = None

    # -- forward ---------------------------------------------------------

    def forward(self, x: np.ndarray, positions: np.ndarray, table: NeighborTable) -> np.ndarray:
        cfg = self.cfg
        n, d = x.shape
        if d != cfg.d:
            raise ValueError(f"expected {cfg.d} channels, got {d}")
        if table.indices.shape[0] != n:
            raise ValueError("neighbor table does not match the point count")
        idx, _ = canonical_rows(table)
        k = idx.shape[1]
        if cfg.operator == "mlp":
            return self.gamma.forward(x)
        if cfg.operator == "mlp_pool":
            z = self.gamma.forward(x)
            self._cache = ("mlp_pool", x.shape, idx)
            return self.pool.forward(z[idx])
        if cfg.operator == "vector":
            return self._forward_vector(x, positions, idx, k)
        return self._forward_scalar(x, positions, idx, k)

    def _encode_positions(self, theta: Mlp, positions: np.ndarray, idx: np.ndarray, out_dim: int):
        """delta_ij for the active pos_mode: theta(p_i - p_j) for relative
        modes, theta(p_i) + theta(p_j) for absolute.  Returns (delta, ctx)."""
        n, k = idx.shape
        dtype = positions.dtype
        if self.cfg.pos_mode == "absolute":
            enc = theta.forward(positions)
            delta = enc[:, None, :] + enc[idx]
            return delta, ("absolute", n, k)
        rel = positions[:, None, :] - positions[idx]
        delta = theta.forward(rel.reshape(n * k, 3)).reshape(n, k, out_dim)
        return delta, ("relative", n, k)

    def _backward_positions(self, theta: Mlp, ddelta: np.ndarray, ctx, idx: np.ndarray) -> None:
        mode, n, k = ctx
        if mode == "absolute":
            denc = ddelta.sum(axis=1) + scatter_add_rows(n, idx, ddelta)
            theta.backward(denc)
        else:
            theta.backward(ddelta.reshape(n * k, -1))

    def _forward_vector(self, x, positions, idx, k):
        cfg = self.cfg
        n, d = x.shape
        q = self.phi.forward(x)
        s = self.psi.forward(x)
        v = self.alpha.forward(x)
        delta, pos_ctx = None, None
        if cfg.pos_in_attn or cfg.pos_in_feat:
            delta, pos_ctx = self._encode_positions(self.theta, positions.astype(x.dtype), idx, d)
        pre = q[:, None, :] - s[idx]
        if cfg.pos_in_attn:
            pre = pre + delta
        logits = self.gamma.forward(pre.reshape(n * k, d)).reshape(n, k, d)
        w = self.rho.forward(logits) if cfg.normalize == "softmax" else logits
        vals = v[idx]
        if cfg.pos_in_feat:
            vals = vals + delta
        y = (w * vals).sum(axis=1)
        self._cache = ("vector", x.shape, idx, pos_ctx, w, vals)
        return y

    def _forward_scalar(self, x, positions, idx, k):
        cfg = self.cfg
        n, d = x.shape
        q = self.phi.forward(x)
        s = self.psi.forward(x)
        v = self.alpha.forward(x)
        sj = s[idx]
        logits = (q[:, None, :] * sj).sum(axis=2)
        if cfg.scaled:
            logits = logits / math.sqrt(d)
        pos_ctx = None
        if cfg.pos_in_attn:
            delta, pos_ctx = self._encode_positions(self.theta_scalar, positions.astype(x.dtype), idx, 1)
            logits = logits + delta[..., 0]
        w = self.rho.forward(logits) if cfg.normalize == "softmax" else logits
        vj = v[idx]
        y = (w[:, :, None] * vj).sum(axis=1)
        self._cache = ("scalar", x.shape, idx, pos_ctx, w, vj, q, sj)
        return y

    # -- backward --------------------------------------------------------

    def backward(self, dy: np.ndarray) -> np.ndarray:
        op = self.cfg.operator
        if op == "mlp":
            return self.gamma.backward(dy)
        if op == "mlp_pool":
            return self._backward_mlp_pool(dy)
        if op == "vector":
            return self._backward_vector(dy)
        return self._backward_scalar(dy)

    def _backward_mlp_pool(self, dy):
        _, (n, d), idx = self._cache
        dgathered = self.pool.backward(dy)
        dz = scatter_add_rows(n, idx, dgathered)
        return self.gamma.backward(dz)

    def _backward_vector(self, dy):
        cfg = self.cfg
        kind, (n, d), idx, pos_ctx, w, vals = self._cache
        k = idx.shape[1]
        dw = dy[:, None, :] * vals
        dvals = w * dy[:, None, :]
        if cfg.normalize == "softmax":
            dlogits = self.rho.backward(dw)
        else:
            dlogits = dw
        dpre = self.gamma.backward(dlogits.reshape(n * k, d)).reshape(n, k, d)
        dq = dpre.sum(axis=1)
        ds = scatter_add_rows(n, idx, -dpre)
        dv = scatter_add_rows(n, idx, dvals)
        if pos_ctx is not None:
            ddelta = np.zeros_like(dvals)
            if cfg.pos_in_attn:
                ddelta += dpre
            if cfg.pos_in_feat:
                ddelta += dvals
            self._backward_positions(self.theta, ddelta, pos_ctx, idx)
        dx = self.phi.backward(dq)
        dx += self.psi.backward(ds)
        dx += self.alpha.backward(dv)
        return dx

    def _backward_scalar(self, dy):
        cfg = self.cfg
        kind, (n, d), idx, pos_ctx, w, vj, q, sj = self._cache
        dw = (dy[:, None, :] * vj).sum(axis=2)
        dvj = w[:, :, None] * dy[:, None, :]
        if cfg.normalize == "softmax":
            dlogits = self.rho.backward(dw)
        else:
            dlogits = dw
        if pos_ctx is not None:
            self._backward_positions(self.theta_scalar, dlogits[..., None], pos_ctx, idx)
        if cfg.scaled:
            dlogits = dlogits / math.sqrt(d)
        dq = (dlogits[:, :, None] * sj).sum(axis=1)
        dsj = dlogits[:, :, None] * q[:, None, :]
        ds = scatter_add_rows(n, idx, dsj)
        dv = scatter_add_rows(n, idx, dvj)
        dx = self.phi.backward(dq)
        dx += self.psi.backward(ds)
        dx += self.alpha.backward(dv)
        return dx
