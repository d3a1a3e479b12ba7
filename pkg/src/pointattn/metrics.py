"""Confusion-matrix metrics: overall accuracy, mean class accuracy, mean
IoU, plus the per-object instance/category mIoU used for part-style tasks.

A class absent from both prediction and ground truth is excluded from
every classwise mean; a class present in either counts (with IoU 0 if the
two sets never overlap).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass
class MetricsReport:
    oa: float
    macc: float
    miou: float
    per_class_iou: list[float]  # NaN marks classes excluded from the mean
    confusion: np.ndarray  # (C, C), rows = truth, cols = prediction

    def to_dict(self) -> dict:
        return {
            "oa": self.oa,
            "macc": self.macc,
            "miou": self.miou,
            "per_class_iou": [None if np.isnan(v) else float(v) for v in self.per_class_iou],
            "confusion": self.confusion.tolist(),
        }


def confusion_matrix(truth: np.ndarray, pred: np.ndarray, num_classes: int) -> np.ndarray:
    truth = np.asarray(truth, dtype=np.int64).ravel()
    pred = np.asarray(pred, dtype=np.int64).ravel()
    if truth.shape != pred.shape:
        raise ValueError("prediction and truth must have the same length")
    if truth.min(initial=0) < 0 or truth.max(initial=0) >= num_classes:
        raise ValueError("truth labels out of range")
    if pred.min(initial=0) < 0 or pred.max(initial=0) >= num_classes:
        raise ValueError("predicted labels out of range")
    flat = truth * num_classes + pred
    return np.bincount(flat, minlength=num_classes * num_classes).reshape(num_classes, num_classes)


def segmentation_metrics(confusion: np.ndarray) -> MetricsReport:
    confusion = np.asarray(confusion, dtype=np.int64)
    total = confusion.sum()
    if total == 0:
        raise ValueError("empty confusion matrix")
    tp = np.diag(confusion).astype(np.float64)
    truth_count = confusion.sum(axis=1).astype(np.float64)
    pred_count = confusion.sum(axis=0).astype(np.float64)
    union = truth_count + pred_count - tp
    present = union > 0
    iou = np.full(len(confusion), np.nan)
    iou[present] = tp[present] / union[present]
    acc = np.full(len(confusion), np.nan)
    seen = truth_count > 0
    acc[seen] = tp[seen] / truth_count[seen]
    return MetricsReport(
        oa=float(tp.sum() / total),
        macc=float(np.nanmean(acc)),
        miou=float(np.nanmean(iou)),
        per_class_iou=list(iou),
        confusion=confusion,
    )


@dataclass
class PartObject:
    """One object's per-point part predictions for instance/category mIoU."""

    category: int
    pred: np.ndarray
    truth: np.ndarray


def object_part_miou(obj: PartObject, parts: list[int]) -> float:
    pred = np.asarray(obj.pred)
    truth = np.asarray(obj.truth)
    ious = []
    for part in parts:
        p = pred == part
        t = truth == part
        union = np.logical_or(p, t).sum()
        if union == 0:
            continue
        ious.append(np.logical_and(p, t).sum() / union)
    if not ious:
        raise ValueError("object has no labeled parts from its category")
    return float(np.mean(ious))


def part_miou(objects: list[PartObject], category_parts: dict[int, list[int]]) -> tuple[float, float]:
    """(category mIoU, instance mIoU) over a collection of objects.

    Instance mIoU averages each object's mean part IoU over all objects;
    category mIoU first averages objects within each category, then
    averages the category means.
    """
    if not objects:
        raise ValueError("no objects to score")
    per_object = []
    by_category: dict[int, list[float]] = {}
    for obj in objects:
        if obj.category not in category_parts:
            raise ValueError(f"object category {obj.category} missing from category_parts")
        score = object_part_miou(obj, category_parts[obj.category])
        per_object.append(score)
        by_category.setdefault(obj.category, []).append(score)
    ins = float(np.mean(per_object))
    cat = float(np.mean([np.mean(v) for v in by_category.values()]))
    return cat, ins
