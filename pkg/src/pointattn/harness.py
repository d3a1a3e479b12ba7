"""Training and evaluation loop: cross-entropy on synthetic scenes with
SGD (momentum + weight decay + stepped learning-rate drops), one cloud per
optimization step."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .metrics import MetricsReport, confusion_matrix, segmentation_metrics
from .network import ClassificationNet, SegmentationNet
from .optim import OptimizerState, Sgd
from .scenes import SyntheticScene


class TrainingDiverged(RuntimeError):
    pass


def cross_entropy(logits: np.ndarray, labels: np.ndarray) -> tuple[float, np.ndarray]:
    """Mean over rows of -log softmax(logits)[label]; returns (loss, dlogits)."""
    logits = np.asarray(logits)
    labels = np.asarray(labels, dtype=np.int64).ravel()
    n, c = logits.shape
    if labels.shape[0] != n:
        raise ValueError(f"{n} logit rows but {labels.shape[0]} labels")
    if labels.min(initial=0) < 0 or labels.max(initial=0) >= c:
        raise ValueError("labels out of range for the logit width")
    shifted = logits - logits.max(axis=1, keepdims=True)
    log_z = np.log(np.exp(shifted).sum(axis=1))
    loss = float((log_z - shifted[np.arange(n), labels]).mean())
    probs = np.exp(shifted - log_z[:, None])
    probs[np.arange(n), labels] -= 1.0
    return loss, (probs / n).astype(logits.dtype)


@dataclass
class CurvePoint:
    iteration: int
    learning_rate: float
    loss: float


@dataclass
class TrainResult:
    curve: list[CurvePoint]

    @property
    def final_loss(self) -> float:
        return self.curve[-1].loss


def _scene_targets(net, scene: SyntheticScene):
    if isinstance(net, SegmentationNet):
        if scene.cloud.labels is None:
            raise ValueError("segmentation training needs per-point labels")
        return scene.cloud.labels
    if scene.label is None:
        raise ValueError("classification training needs a cloud-level label")
    return np.array([scene.label], dtype=np.int64)


def train(net, scenes: list[SyntheticScene], optimizer_state: OptimizerState,
          iterations: int, log_every: int = 1) -> TrainResult:
    """Run forward/backward/step for ``iterations`` steps, cycling through
    the scenes one cloud at a time.  Aborts on a non-finite loss."""
    if not scenes:
        raise ValueError("no training scenes")
    opt = Sgd(net, optimizer_state)
    curve = []
    for it in range(iterations):
        scene = scenes[it % len(scenes)]
        logits = net.forward(scene.cloud, training=True)
        loss, dlogits = cross_entropy(logits, _scene_targets(net, scene))
        if not np.isfinite(loss):
            raise TrainingDiverged(
                f"non-finite loss {loss} at iteration {it} (lr={opt.learning_rate:g}); "
                "lower the learning rate or check the data scale"
            )
        net.backward(dlogits)
        opt.step()
        if it % log_every == 0 or it == iterations - 1:
            curve.append(CurvePoint(it, opt.learning_rate, loss))
    return TrainResult(curve=curve)


def predict(net, scene: SyntheticScene) -> np.ndarray:
    logits = net.forward(scene.cloud, training=False)
    return logits.argmax(axis=1)


def evaluate(net, scenes: list[SyntheticScene], num_classes: int) -> MetricsReport:
    """Accumulate a confusion matrix over scenes and derive the metrics.
    Segmentation scores per point; classification scores per cloud."""
    if not scenes:
        raise ValueError("no evaluation scenes")
    confusion = np.zeros((num_classes, num_classes), dtype=np.int64)
    for scene in scenes:
        pred = predict(net, scene)
        truth = _scene_targets(net, scene)
        if isinstance(net, ClassificationNet):
            pred = pred[:1]
        confusion += confusion_matrix(truth, pred, num_classes)
    return segmentation_metrics(confusion)


def drop_schedule(iterations: int, drop_at: list[float], factor: float) -> list[tuple[int, float]]:
    """Learning-rate drops at the given fractions of the run, e.g. the
    classic 10x drops at 60% and 80% of total iterations."""
    sched = []
    for frac in drop_at:
        if not 0 < frac < 1:
            raise ValueError(f"drop fraction {frac} must be in (0, 1)")
        step = max(1, int(round(frac * iterations)))
        sched.append((step, factor))
    return sched
