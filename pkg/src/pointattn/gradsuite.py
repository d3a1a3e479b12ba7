"""The full gradient verification suite: every differentiable op, every
attention variant combination, the composite blocks and transitions, and
the end-to-end networks, all checked against central finite differences at
64-bit precision.

Fixtures are resampled until no ReLU input sits within 10h of its kink, so
finite differences never straddle a nondifferentiable point.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .attention import NORMALIZE, OPERATORS, POS_MODES, AttentionConfig, LocalAttention
from .core import CHECK_DTYPE, Module
from .geometry import knn_search
from .gradcheck import check_gradients, worst_row
from .harness import cross_entropy
from .network import AttentionBlock, BackboneConfig, TransitionDown, TransitionUp, build_network
from .ops import GlobalAvgPool, Linear, MaxPoolNeighbors, NeighborSoftmax, PointNorm, Relu

KINK_MARGIN_FACTOR = 10.0
MAX_FIXTURE_TRIES = 40


@dataclass
class SuiteRow:
    component: str
    variant: str
    max_rel_err: float
    tol: float

    @property
    def passed(self) -> bool:
        return self.max_rel_err <= self.tol


def relu_margin(*roots: Module) -> float:
    """Smallest |pre-activation| over every ReLU reached in the last forward."""
    margin = np.inf
    for root in roots:
        for mod in root.modules():
            if isinstance(mod, Relu) and mod._x is not None:
                margin = min(margin, float(np.abs(mod._x).min()))
    return margin


def _randomize_params(model: Module, rng: np.random.Generator, scale: float = 0.4) -> None:
    """Move every parameter to a generic point.  Freshly initialized zeros
    (biases in particular) can pin ReLU inputs exactly onto the kink: the
    self-neighbor's relative offset is exactly zero, so the position
    encoder's first layer emits its raw bias."""
    for _, p in model.named_params():
        p.value[...] = rng.uniform(-scale, scale, p.shape)


def _module_case(build, h: float):
    """Build fixtures until the forward pass clears the ReLU kink margin."""
    case = None
    for attempt in range(MAX_FIXTURE_TRIES):
        case = build(attempt)
        case["loss_fn"]()
        if relu_margin(*case["models"]) > KINK_MARGIN_FACTOR * h:
            return case
    return case


def _run(name, variant, build, tol, h=1e-5, entry_cap=None) -> SuiteRow:
    case = _module_case(build, h)
    rows = check_gradients(
        case["loss_fn"], case["grads_fn"], case["targets"], h=h, tol=tol, entry_cap=entry_cap
    )
    return SuiteRow(name, variant, worst_row(rows).max_rel_err, tol)


def _param_targets(model: Module, prefix: str = "") -> list[tuple[str, np.ndarray]]:
    return [(prefix + n, p.value) for n, p in model.named_params()]


def _param_grads(model: Module, prefix: str = "") -> dict[str, np.ndarray]:
    return {prefix + n: p.grad.copy() for n, p in model.named_params()}


# -- individual op cases --------------------------------------------------


def _linear_case(attempt):
    rng = np.random.default_rng(100 + attempt)
    lin = Linear(8, 5, rng, dtype=CHECK_DTYPE)
    x = rng.standard_normal((5, 8))
    r = rng.standard_normal((5, 5))

    def loss_fn():
        return float((lin.forward(x) * r).sum())

    def grads_fn():
        lin.zero_grads()
        lin.forward(x)
        dx = lin.backward(r)
        return {**_param_grads(lin), "input": dx}

    return {"loss_fn": loss_fn, "grads_fn": grads_fn,
            "targets": _param_targets(lin) + [("input", x)], "models": [lin]}


def _relu_case(attempt):
    rng = np.random.default_rng(200 + attempt)
    act = Relu()
    # Inputs sampled away from zero: the kink-exclusion rule.
    x = rng.uniform(0.2, 1.5, (6, 7)) * rng.choice([-1.0, 1.0], (6, 7))
    r = rng.standard_normal((6, 7))

    def loss_fn():
        return float((act.forward(x) * r).sum())

    def grads_fn():
        act.forward(x)
        return {"input": act.backward(r)}

    return {"loss_fn": loss_fn, "grads_fn": grads_fn, "targets": [("input", x)], "models": [act]}


def _softmax_case(attempt):
    rng = np.random.default_rng(300 + attempt)
    sm = NeighborSoftmax()
    x = rng.standard_normal((5, 4, 3))
    r = rng.standard_normal((5, 4, 3))

    def loss_fn():
        return float((sm.forward(x) * r).sum())

    def grads_fn():
        sm.forward(x)
        return {"input": sm.backward(r)}

    return {"loss_fn": loss_fn, "grads_fn": grads_fn, "targets": [("input", x)], "models": [sm]}


def _max_pool_case(attempt):
    rng = np.random.default_rng(400 + attempt)
    pool = MaxPoolNeighbors()
    x = rng.standard_normal((5, 4, 3))
    r = rng.standard_normal((5, 3))

    def loss_fn():
        return float((pool.forward(x) * r).sum())

    def grads_fn():
        pool.forward(x)
        return {"input": pool.backward(r)}

    return {"loss_fn": loss_fn, "grads_fn": grads_fn, "targets": [("input", x)], "models": [pool]}


def _avg_pool_case(attempt):
    rng = np.random.default_rng(500 + attempt)
    pool = GlobalAvgPool()
    x = rng.standard_normal((6, 5))
    r = rng.standard_normal((1, 5))

    def loss_fn():
        return float((pool.forward(x) * r).sum())

    def grads_fn():
        pool.forward(x)
        return {"input": pool.backward(r)}

    return {"loss_fn": loss_fn, "grads_fn": grads_fn, "targets": [("input", x)], "models": [pool]}


def _norm_case(attempt):
    rng = np.random.default_rng(600 + attempt)
    norm = PointNorm(4, dtype=CHECK_DTYPE)
    x = rng.standard_normal((7, 4)) * 2.0
    r = rng.standard_normal((7, 4))
    base_mean = norm.running_mean.value.copy()
    base_var = norm.running_var.value.copy()

    def loss_fn():
        # Forward in training mode mutates running stats; restore them so
        # the loss stays a pure function of the inputs.
        norm.running_mean.value = base_mean.copy()
        norm.running_var.value = base_var.copy()
        return float((norm.forward(x, training=True) * r).sum())

    def grads_fn():
        norm.zero_grads()
        loss_fn()
        dx = norm.backward(r)
        return {**_param_grads(norm), "input": dx}

    return {"loss_fn": loss_fn, "grads_fn": grads_fn,
            "targets": _param_targets(norm) + [("input", x)], "models": [norm]}


def _cross_entropy_case(attempt):
    rng = np.random.default_rng(700 + attempt)
    logits = rng.standard_normal((9, 4))
    labels = rng.integers(0, 4, 9)

    def loss_fn():
        return cross_entropy(logits, labels)[0]

    def grads_fn():
        return {"logits": cross_entropy(logits, labels)[1].copy()}

    return {"loss_fn": loss_fn, "grads_fn": grads_fn, "targets": [("logits", logits)],
            "models": []}


def _attention_case_builder(operator, pos_mode, normalize, seed_base: int):
    def build(attempt):
        rng = np.random.default_rng(seed_base + attempt)
        n, k, d = 8, 4, 6
        positions = rng.uniform(0, 2, (n, 3))
        x = rng.standard_normal((n, d))
        table = knn_search(positions, positions, k)
        cfg = AttentionConfig(d=d, k=k, operator=operator, pos_mode=pos_mode, normalize=normalize)
        layer = LocalAttention(cfg, rng, dtype=CHECK_DTYPE)
        _randomize_params(layer, rng)
        r = rng.standard_normal((n, d))

        def loss_fn():
            return float((layer.forward(x, positions, table) * r).sum())

        def grads_fn():
            layer.zero_grads()
            layer.forward(x, positions, table)
            dx = layer.backward(r)
            return {**_param_grads(layer), "input": dx}

        return {"loss_fn": loss_fn, "grads_fn": grads_fn,
                "targets": _param_targets(layer) + [("input", x)], "models": [layer]}

    return build


def _block_case(attempt):
    rng = np.random.default_rng(800 + attempt)
    n, d = 8, 6
    bb = BackboneConfig.from_widths([d], k=4, num_classes=2)
    positions = rng.uniform(0, 2, (n, 3))
    x = rng.standard_normal((n, d))
    table = knn_search(positions, positions, 4)
    block = AttentionBlock(d, bb, rng, dtype=CHECK_DTYPE)
    _randomize_params(block, rng)
    r = rng.standard_normal((n, d))

    def loss_fn():
        return float((block.forward(x, positions, table) * r).sum())

    def grads_fn():
        block.zero_grads()
        block.forward(x, positions, table)
        dx = block.backward(r)
        return {**_param_grads(block), "input": dx}

    return {"loss_fn": loss_fn, "grads_fn": grads_fn,
            "targets": _param_targets(block) + [("input", x)], "models": [block]}


def _transition_down_case(attempt):
    rng = np.random.default_rng(900 + attempt)
    n, d_in, d_out = 12, 5, 7
    positions = rng.uniform(0, 2, (n, 3))
    x = rng.standard_normal((n, d_in))
    td = TransitionDown(d_in, d_out, k=4, rate=4, rng=rng, dtype=CHECK_DTYPE)
    _randomize_params(td, rng)
    r = rng.standard_normal((3, d_out))
    base_mean = td.norm.running_mean.value.copy()
    base_var = td.norm.running_var.value.copy()

    def loss_fn():
        td.norm.running_mean.value = base_mean.copy()
        td.norm.running_var.value = base_var.copy()
        y, _, _ = td.forward(x, positions, training=True)
        return float((y * r).sum())

    def grads_fn():
        td.zero_grads()
        loss_fn()
        dx = td.backward(r)
        return {**_param_grads(td), "input": dx}

    return {"loss_fn": loss_fn, "grads_fn": grads_fn,
            "targets": _param_targets(td) + [("input", x)], "models": [td]}


def _transition_up_case(attempt):
    rng = np.random.default_rng(1000 + attempt)
    m, n, d_in, d_skip = 4, 10, 6, 5
    p1 = rng.uniform(0, 2, (n, 3))
    p2 = p1[rng.choice(n, m, replace=False)]
    x2 = rng.standard_normal((m, d_in))
    x_skip = rng.standard_normal((n, d_skip))
    tu = TransitionUp(d_in, d_skip, rng, dtype=CHECK_DTYPE)
    _randomize_params(tu, rng)
    r = rng.standard_normal((n, d_skip))
    base_mean = tu.norm.running_mean.value.copy()
    base_var = tu.norm.running_var.value.copy()

    def loss_fn():
        tu.norm.running_mean.value = base_mean.copy()
        tu.norm.running_var.value = base_var.copy()
        return float((tu.forward(x2, p2, x_skip, p1, training=True) * r).sum())

    def grads_fn():
        tu.zero_grads()
        loss_fn()
        dx2, dskip = tu.backward(r)
        return {**_param_grads(tu), "x2": dx2, "skip": dskip}

    return {"loss_fn": loss_fn, "grads_fn": grads_fn,
            "targets": _param_targets(tu) + [("x2", x2), ("skip", x_skip)], "models": [tu]}


def _end_to_end_case_builder(head: str):
    def build(attempt):
        rng = np.random.default_rng(1100 + attempt)
        n, num_classes = 64, 3
        bb = BackboneConfig.from_widths(
            [8, 8, 8, 8, 8], k=4, head=head, num_classes=num_classes
        )
        net = build_network(bb, seed=1200 + attempt, dtype=CHECK_DTYPE)
        _randomize_params(net, rng, scale=0.3)
        positions = rng.uniform(0, 2, (n, 3))
        rows = n if head == "segmentation" else 1
        r = rng.standard_normal((rows, num_classes))

        def loss_fn():
            # Norms run on their initial running statistics (eval mode);
            # the coarsest stages are too small for batch statistics.
            out = net.forward(positions, training=False, strict_min_points=False)
            return float((out * r).sum())

        def grads_fn():
            net.zero_grads()
            loss_fn()
            net.backward(r)
            return _param_grads(net)

        return {"loss_fn": loss_fn, "grads_fn": grads_fn,
                "targets": _param_targets(net), "models": [net]}

    return build


# -- suite ----------------------------------------------------------------


def run_gradient_suite(tol: float = 1e-4, e2e_tol: float = 1e-3,
                       e2e_entry_cap: int = 6, verbose: bool = False) -> list[SuiteRow]:
    rows = []

    def add(row: SuiteRow):
        rows.append(row)
        if verbose:
            status = "pass" if row.passed else "FAIL"
            print(f"{row.component:<18} {row.variant:<40} {row.max_rel_err:9.2e}  {row.tol:7.0e}  {status}")

    add(_run("linear", "-", _linear_case, tol=1e-6))
    add(_run("relu", "kink-excluded", _relu_case, tol=tol))
    add(_run("softmax_neighbors", "-", _softmax_case, tol=tol))
    add(_run("max_pool_neighbors", "-", _max_pool_case, tol=tol))
    add(_run("global_avg_pool", "-", _avg_pool_case, tol=tol))
    add(_run("point_norm", "training", _norm_case, tol=tol))
    add(_run("cross_entropy", "-", _cross_entropy_case, tol=1e-6))
    combo = 0
    for operator in OPERATORS:
        for pos_mode in POS_MODES:
            for normalize in NORMALIZE:
                add(_run(
                    "attention",
                    f"{operator}/{pos_mode}/{normalize}",
                    _attention_case_builder(operator, pos_mode, normalize, 2000 + 100 * combo),
                    tol=tol,
                ))
                combo += 1
    add(_run("attention_block", "residual", _block_case, tol=tol))
    add(_run("transition_down", "-", _transition_down_case, tol=tol))
    add(_run("transition_up", "-", _transition_up_case, tol=tol))
    add(_run("network", "segmentation/end-to-end",
             _end_to_end_case_builder("segmentation"), tol=e2e_tol, entry_cap=e2e_entry_cap))
    add(_run("network", "classification/end-to-end",
             _end_to_end_case_builder("classification"), tol=e2e_tol, entry_cap=e2e_entry_cap))
    return rows
