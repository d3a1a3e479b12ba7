"""Independent reference implementations used as oracles.

Everything here deliberately recomputes results the slow, obvious way
(full sorts, from-scratch scans, plain Python loops) and never shares code
with the library paths under test.
"""

from __future__ import annotations

import math

import numpy as np


def brute_force_knn(points: np.ndarray, queries: np.ndarray, k: int):
    """Full pairwise distance matrix + lexicographic (distance, index) sort."""
    points = np.asarray(points, dtype=np.float64)
    queries = np.asarray(queries, dtype=np.float64)
    d = ((queries[:, None, :] - points[None, :, :]) ** 2).sum(axis=2)
    n_q, n_p = d.shape
    all_idx = np.broadcast_to(np.arange(n_p), (n_q, n_p))
    order = np.lexsort((all_idx, d), axis=1)[:, :k]
    return order, np.take_along_axis(d, order, axis=1)


def greedy_fps_reference(points: np.ndarray, m: int, start: int = 0):
    """Farthest point sampling that recomputes every point's distance to the
    whole selected set from scratch at each step (no incremental state)."""
    points = np.asarray(points, dtype=np.float64)
    selected = [start]
    for _ in range(m - 1):
        sel = points[np.array(selected)]
        dists = ((points[:, None, :] - sel[None, :, :]) ** 2).sum(axis=2).min(axis=1)
        dists[np.array(selected)] = -np.inf
        selected.append(int(np.argmax(dists)))
    return np.array(selected, dtype=np.int64)


def interpolate_reference(src_pos, src_feat, tgt_pos, p: int = 3, eps: float = 1e-8):
    """Per-target loop: sort all source distances, take p nearest, weight by
    inverse squared distance."""
    src_pos = np.asarray(src_pos, dtype=np.float64)
    src_feat = np.asarray(src_feat, dtype=np.float64)
    tgt_pos = np.asarray(tgt_pos, dtype=np.float64)
    out = np.zeros((len(tgt_pos), src_feat.shape[1]))
    for t in range(len(tgt_pos)):
        d = ((src_pos - tgt_pos[t]) ** 2).sum(axis=1)
        order = np.lexsort((np.arange(len(src_pos)), d))[:p]
        w = 1.0 / (d[order] + eps)
        w = w / w.sum()
        out[t] = (w[:, None] * src_feat[order]).sum(axis=0)
    return out


# -- plain-loop layer references -------------------------------------------


def linear_ref(x, w, b):
    n, d_in = x.shape
    d_out = w.shape[1]
    y = np.zeros((n, d_out))
    for i in range(n):
        for o in range(d_out):
            acc = b[o]
            for j in range(d_in):
                acc += x[i, j] * w[j, o]
            y[i, o] = acc
    return y


def mlp_ref(x, layer):
    """Two-linear + ReLU reference for an ops.Mlp instance."""
    h = linear_ref(x, layer.lin1.W.value, layer.lin1.b.value)
    h = np.maximum(h, 0)
    return linear_ref(h, layer.lin2.W.value, layer.lin2.b.value)


def softmax_ref(v):
    e = np.exp(v - np.max(v))
    return e / e.sum()


def vector_attention_ref(x, pos, idx, layer):
    """Index-by-index re-computation of the vector attention output."""
    cfg = layer.cfg
    n, d = x.shape
    q = mlp_like_linear(x, layer.phi)
    s = mlp_like_linear(x, layer.psi)
    v = mlp_like_linear(x, layer.alpha)
    y = np.zeros((n, d))
    for i in range(n):
        neighbors = list(idx[i])
        pre = np.zeros((len(neighbors), d))
        vals = np.zeros((len(neighbors), d))
        for a, j in enumerate(neighbors):
            delta = _delta_ref(pos, i, j, layer, d)
            pre[a] = q[i] - s[j] + (delta if cfg.pos_in_attn else 0)
            vals[a] = v[j] + (delta if cfg.pos_in_feat else 0)
        logits = mlp_ref(pre, layer.gamma)
        if cfg.normalize == "softmax":
            w = np.zeros_like(logits)
            for c in range(d):
                w[:, c] = softmax_ref(logits[:, c])
        else:
            w = logits
        for a in range(len(neighbors)):
            y[i] += w[a] * vals[a]
    return y


def _delta_ref(pos, i, j, layer, d):
    cfg = layer.cfg
    if cfg.pos_mode == "none":
        return np.zeros(d)
    theta = layer.theta if cfg.operator == "vector" else layer.theta_scalar
    if cfg.pos_mode == "absolute":
        ei = mlp_ref(pos[i][None, :], theta)[0]
        ej = mlp_ref(pos[j][None, :], theta)[0]
        return ei + ej
    return mlp_ref((pos[i] - pos[j])[None, :], theta)[0]


def scalar_attention_ref(x, pos, idx, layer):
    cfg = layer.cfg
    n, d = x.shape
    q = mlp_like_linear(x, layer.phi)
    s = mlp_like_linear(x, layer.psi)
    v = mlp_like_linear(x, layer.alpha)
    y = np.zeros((n, d))
    for i in range(n):
        neighbors = list(idx[i])
        logits = np.zeros(len(neighbors))
        for a, j in enumerate(neighbors):
            acc = float(np.dot(q[i], s[j]))
            if cfg.scaled:
                acc /= math.sqrt(d)
            if cfg.pos_in_attn:
                acc += _delta_ref(pos, i, j, layer, 1)[0]
            logits[a] = acc
        w = softmax_ref(logits) if cfg.normalize == "softmax" else logits
        for a, j in enumerate(neighbors):
            y[i] += w[a] * v[j]
    return y


def mlp_pool_ref(x, idx, layer):
    z = mlp_ref(x, layer.gamma)
    n, d = z.shape
    y = np.zeros((n, d))
    for i in range(n):
        for c in range(d):
            y[i, c] = max(z[j, c] for j in idx[i])
    return y


def mlp_like_linear(x, lin):
    return linear_ref(x, lin.W.value, lin.b.value)


def transition_down_ref(x, pos, td, sel, idx):
    """Recompute linear -> norm(training stats) -> relu -> neighborhood max
    with plain loops, given the sampled indices and neighbor rows."""
    z = linear_ref(x, td.linear.W.value, td.linear.b.value)
    mean = z.mean(axis=0)
    var = z.var(axis=0)
    z = (z - mean) / np.sqrt(var + 1e-5)
    z = td.norm.gain.value * z + td.norm.bias.value
    z = np.maximum(z, 0)
    m = len(sel)
    d = z.shape[1]
    y = np.zeros((m, d))
    for i in range(m):
        for c in range(d):
            y[i, c] = max(z[j, c] for j in idx[i])
    return y


def transition_up_ref(x2, p2, x_skip, p1, tu, p_neighbors: int):
    z = linear_ref(x2, tu.linear_up.W.value, tu.linear_up.b.value)
    mean = z.mean(axis=0)
    var = z.var(axis=0)
    z = tu.norm.gain.value * (z - mean) / np.sqrt(var + 1e-5) + tu.norm.bias.value
    z = np.maximum(z, 0)
    up = interpolate_reference(p2, z, p1, p=p_neighbors)
    skip = linear_ref(x_skip, tu.linear_skip.W.value, tu.linear_skip.b.value)
    return up + skip


def confusion_metrics_ref(truth, pred, num_classes):
    """Set-arithmetic OA / mAcc / mIoU, one class at a time."""
    truth = np.asarray(truth)
    pred = np.asarray(pred)
    oa = float((truth == pred).sum() / len(truth))
    accs, ious = [], []
    for c in range(num_classes):
        t = set(np.flatnonzero(truth == c).tolist())
        p = set(np.flatnonzero(pred == c).tolist())
        if t:
            accs.append(len(t & p) / len(t))
        if t | p:
            ious.append(len(t & p) / len(t | p))
    return oa, float(np.mean(accs)), float(np.mean(ious))
