"""Backbone assembly: residual attention blocks, cardinality transitions,
and the segmentation (U-shaped) and classification networks.

The encoder runs a configurable number of stages over progressively
downsampled point sets (farthest point sampling picks the subset, a
kNN max-pool carries features onto it).  The segmentation decoder walks
back up, interpolating features onto each finer point set and summing
them with a linear map of the matching encoder stage's output.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .attention import AttentionConfig, LocalAttention, canonical_rows
from .core import DEFAULT_DTYPE, Module
from .geometry import PointSet, fps_sample, interpolation_weights, knn_search
from .ops import GlobalAvgPool, Linear, MaxPoolNeighbors, Mlp, PointNorm, Relu, scatter_add_rows


@dataclass(frozen=True)
class StageConfig:
    width: int
    blocks: int = 1
    downsample: int = 1

    def __post_init__(self):
        if self.width < 1 or self.blocks < 0:
            raise ValueError("stage width must be >= 1 and block count >= 0")
        if self.downsample not in (1, 4):
            raise ValueError("downsample rate must be 1 or 4")


@dataclass(frozen=True)
class BackboneConfig:
    stages: tuple[StageConfig, ...]
    k: int = 16
    head: str = "segmentation"
    num_classes: int = 2
    in_dim: int = 3
    operator: str = "vector"
    pos_mode: str = "relative"
    normalize: str = "softmax"
    scaled: bool = False
    bottleneck: int = 1

    def __post_init__(self):
        if not self.stages:
            raise ValueError("at least one stage is required")
        if self.stages[0].downsample != 1:
            raise ValueError("the first stage must not downsample")
        if self.head not in ("segmentation", "classification"):
            raise ValueError(f"unknown head {self.head!r}")
        if self.num_classes < 2:
            raise ValueError("need at least two classes")
        if self.k < 1 or self.in_dim < 1 or self.bottleneck < 1:
            raise ValueError("k, in_dim and bottleneck must be >= 1")

    @classmethod
    def from_widths(cls, widths, blocks: int = 1, **kwargs) -> "BackboneConfig":
        stages = tuple(
            StageConfig(width=w, blocks=blocks, downsample=1 if i == 0 else 4)
            for i, w in enumerate(widths)
        )
        return cls(stages=stages, **kwargs)

    @property
    def widths(self) -> list[int]:
        return [s.width for s in self.stages]

    @property
    def min_points(self) -> int:
        rate = 1
        for s in self.stages:
            rate *= s.downsample
        return rate

    def cardinalities(self, n: int) -> list[int]:
        sizes = [n]
        for s in self.stages[1:]:
            sizes.append(math.ceil(sizes[-1] / s.downsample))
        return sizes

    def to_dict(self) -> dict:
        return {
            "stages": [{"width": s.width, "blocks": s.blocks, "downsample": s.downsample} for s in self.stages],
            "k": self.k,
            "head": self.head,
            "num_classes": self.num_classes,
            "in_dim": self.in_dim,
            "operator": self.operator,
            "pos_mode": self.pos_mode,
            "normalize": self.normalize,
            "scaled": self.scaled,
            "bottleneck": self.bottleneck,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "BackboneConfig":
        stages = tuple(StageConfig(**s) for s in d["stages"])
        rest = {k: v for k, v in d.items() if k != "stages"}
        return cls(stages=stages, **rest)


class AttentionBlock(Module):
    """Residual block: x + linear_out(attention(linear_in(x))).

    The inner projections keep the width by default; a bottleneck ratio
    shrinks the attention width to d // bottleneck.
    """

    def __init__(self, d: int, bb: BackboneConfig, rng, dtype=DEFAULT_DTYPE):
        db = max(1, d // bb.bottleneck)
        cfg = AttentionConfig(
            d=db, k=bb.k, operator=bb.operator, pos_mode=bb.pos_mode,
            normalize=bb.normalize, scaled=bb.scaled,
        )
        self.linear_in = Linear(d, db, rng, dtype)
        self.attn = LocalAttention(cfg, rng, dtype)
        self.linear_out = Linear(db, d, rng, dtype)

    def forward(self, x, positions, table):
        z = self.linear_in.forward(x)
        z = self.attn.forward(z, positions, table)
        return x + self.linear_out.forward(z)

    def backward(self, dy):
        dz = self.linear_out.backward(dy)
        dz = self.attn.backward(dz)
        return dy + self.linear_in.backward(dz)


class TransitionDown(Module):
    """Farthest point sampling to ceil(n/rate) points, then a channel-wise
    max over each sampled point's k nearest dense-set neighbors of
    relu(norm(linear(x)))."""

    def __init__(self, d_in: int, d_out: int, k: int, rate: int, rng, dtype=DEFAULT_DTYPE):
        self.k = k
        self.rate = rate
        self.linear = Linear(d_in, d_out, rng, dtype)
        self.norm = PointNorm(d_out, dtype)
        self.act = Relu()
        self.pool = MaxPoolNeighbors()
        self._cache = None

    def forward(self, x, positions, training: bool, fps_start: int = 0):
        n = len(positions)
        m = math.ceil(n / self.rate)
        sample = fps_sample(positions, m, start=fps_start)
        p2 = positions[sample.selected]
        table = knn_search(positions, p2, min(self.k, n))
        idx, _ = canonical_rows(table)
        z = self.act.forward(self.norm.forward(self.linear.forward(x), training))
        self._cache = (n, idx)
        return self.pool.forward(z[idx]), p2, sample.selected

    def backward(self, dy):
        n, idx = self._cache
        dz = scatter_add_rows(n, idx, self.pool.backward(dy))
        return self.linear.backward(self.norm.backward(self.act.backward(dz)))


class TransitionUp(Module):
    """Map coarse features onto a finer point set by inverse-squared-distance
    interpolation over 3 nearest coarse points and add a linear map of the
    skip features from the matching encoder stage."""

    def __init__(self, d_in: int, d_skip: int, rng, dtype=DEFAULT_DTYPE):
        self.linear_up = Linear(d_in, d_skip, rng, dtype)
        self.norm = PointNorm(d_skip, dtype)
        self.act = Relu()
        self.linear_skip = Linear(d_skip, d_skip, rng, dtype)
        self._cache = None

    def forward(self, x2, p2, x_skip, p1, training: bool):
        if len(x2) != len(p2):
            raise RuntimeError(
                f"stage pairing mismatch: {len(x2)} coarse features for {len(p2)} coarse points"
            )
        z = self.act.forward(self.norm.forward(self.linear_up.forward(x2), training))
        idx, w = interpolation_weights(p2, p1, p=min(3, len(p2)))
        w = w.astype(z.dtype)
        up = (w[:, :, None] * z[idx]).sum(axis=1)
        self._cache = (idx, w, len(p2))
        return up + self.linear_skip.forward(x_skip)

    def backward(self, dy):
        idx, w, m = self._cache
        dskip = self.linear_skip.backward(dy)
        dz = scatter_add_rows(m, idx, w[:, :, None] * dy[:, None, :])
        dx2 = self.linear_up.backward(self.norm.backward(self.act.backward(dz)))
        return dx2, dskip


class Encoder(Module):
    """Embedding followed by the downsampling stage pyramid; returns every
    stage's (features, positions) pair plus the per-stage neighbor tables."""

    def __init__(self, bb: BackboneConfig, rng, dtype=DEFAULT_DTYPE):
        ws = bb.widths
        self.embed = Linear(bb.in_dim, ws[0], rng, dtype)
        self.embed_norm = PointNorm(ws[0], dtype)
        self.embed_act = Relu()
        self.transitions = [
            TransitionDown(ws[i - 1], ws[i], bb.k, bb.stages[i].downsample, rng, dtype)
            for i in range(1, len(ws))
        ]
        self.blocks = [
            [AttentionBlock(ws[i], bb, rng, dtype) for _ in range(bb.stages[i].blocks)]
            for i in range(len(ws))
        ]
        self.k = bb.k
        self._stage_count = len(ws)

    def forward(self, feats, positions, training: bool, fps_start: int = 0):
        outs, tables = [], []
        x = self.embed_act.forward(self.embed_norm.forward(self.embed.forward(feats), training))
        p = positions
        for s in range(self._stage_count):
            if s > 0:
                x, p, _ = self.transitions[s - 1].forward(
                    x, p, training, fps_start=fps_start if s == 1 else 0
                )
            table = knn_search(p, p, min(self.k, len(p)))
            for blk in self.blocks[s]:
                x = blk.forward(x, p, table)
            outs.append((x, p))
            tables.append(table)
        return outs, tables

    def backward(self, dstage_outs: list[np.ndarray]):
        dx = dstage_outs[-1]
        for s in reversed(range(self._stage_count)):
            for blk in reversed(self.blocks[s]):
                dx = blk.backward(dx)
            if s > 0:
                dx = self.transitions[s - 1].backward(dx)
                dx = dx + dstage_outs[s - 1]
        return self.embed.backward(self.embed_norm.backward(self.embed_act.backward(dx)))


def _prepare(cloud, in_dim: int, dtype):
    if isinstance(cloud, PointSet):
        positions = cloud.positions
        feats = cloud.features if cloud.features is not None else positions
    else:
        positions = np.asarray(cloud, dtype=np.float64)
        feats = positions
    feats = np.asarray(feats, dtype=dtype)
    if feats.shape[1] != in_dim:
        raise ValueError(f"expected {in_dim} input feature channels, got {feats.shape[1]}")
    return feats, np.asarray(positions, dtype=np.float64)


def _check_min_points(bb: BackboneConfig, n: int, strict: bool):
    if strict and n < bb.min_points:
        raise ValueError(
            f"{bb.head} forward with {len(bb.stages)} stages needs at least "
            f"{bb.min_points} points, got {n} (strict_min_points=False overrides)"
        )


class SegmentationNet(Module):
    """U-shaped encoder/decoder emitting one row of class logits per input
    point, in input order."""

    def __init__(self, bb: BackboneConfig, rng, dtype=DEFAULT_DTYPE):
        if bb.head != "segmentation":
            raise ValueError("config head is not 'segmentation'")
        self.bb_config = bb
        ws = bb.widths
        s_count = len(ws)
        self.encoder = Encoder(bb, rng, dtype)
        self.dec_blocks = [
            [AttentionBlock(ws[s], bb, rng, dtype) for _ in range(bb.stages[s].blocks)]
            for s in range(s_count)
        ]
        self.ups = [TransitionUp(ws[s + 1], ws[s], rng, dtype) for s in range(s_count - 1)]
        self.head = Mlp(ws[0], ws[0], bb.num_classes, rng, dtype)
        self._dtype = dtype

    def forward(self, cloud, training: bool = False, fps_start: int = 0,
                strict_min_points: bool = True) -> np.ndarray:
        bb = self.bb_config
        feats, positions = _prepare(cloud, bb.in_dim, self._dtype)
        _check_min_points(bb, len(positions), strict_min_points)
        outs, tables = self.encoder.forward(feats, positions, training, fps_start)
        top = len(bb.stages) - 1
        y = outs[top][0]
        for blk in self.dec_blocks[top]:
            y = blk.forward(y, outs[top][1], tables[top])
        for s in range(top - 1, -1, -1):
            y = self.ups[s].forward(y, outs[s + 1][1], outs[s][0], outs[s][1], training)
            for blk in self.dec_blocks[s]:
                y = blk.forward(y, outs[s][1], tables[s])
        return self.head.forward(y)

    def backward(self, dlogits: np.ndarray) -> np.ndarray:
        top = len(self.bb_config.stages) - 1
        dy = self.head.backward(dlogits)
        dstage = [None] * (top + 1)
        for s in range(top):
            for blk in reversed(self.dec_blocks[s]):
                dy = blk.backward(dy)
            dy, dskip = self.ups[s].backward(dy)
            dstage[s] = dskip
        for blk in reversed(self.dec_blocks[top]):
            dy = blk.backward(dy)
        dstage[top] = dy
        return self.encoder.backward(dstage)


class ClassificationNet(Module):
    """Encoder followed by global average pooling and an MLP head; one row
    of class logits per cloud."""

    def __init__(self, bb: BackboneConfig, rng, dtype=DEFAULT_DTYPE):
        if bb.head != "classification":
            raise ValueError("config head is not 'classification'")
        self.bb_config = bb
        self.encoder = Encoder(bb, rng, dtype)
        self.pool = GlobalAvgPool()
        self.head = Mlp(bb.widths[-1], bb.widths[-1], bb.num_classes, rng, dtype)
        self._dtype = dtype

    def forward(self, cloud, training: bool = False, fps_start: int = 0,
                strict_min_points: bool = True) -> np.ndarray:
        bb = self.bb_config
        feats, positions = _prepare(cloud, bb.in_dim, self._dtype)
        _check_min_points(bb, len(positions), strict_min_points)
        outs, _ = self.encoder.forward(feats, positions, training, fps_start)
        return self.head.forward(self.pool.forward(outs[-1][0]))

    def backward(self, dlogits: np.ndarray) -> np.ndarray:
        dx = self.pool.backward(self.head.backward(dlogits))
        dstage = [0.0] * len(self.bb_config.stages)
        dstage[-1] = dx
        return self.encoder.backward(dstage)


def build_network(bb: BackboneConfig, seed: int, dtype=DEFAULT_DTYPE):
    rng = np.random.default_rng(seed)
    cls = SegmentationNet if bb.head == "segmentation" else ClassificationNet
    return cls(bb, rng, dtype)
