"""Local self-attention networks for 3D point clouds, built from scratch:
exact geometric queries, manual-backprop layers, U-shaped backbones, and a
desk-scale training/evaluation/benchmark harness."""

from .attention import AttentionConfig, LocalAttention
from .core import Buffer, Module, Param
from .geometry import (
    NeighborTable,
    PointSet,
    SampleResult,
    fps_sample,
    interpolate,
    interpolation_weights,
    knn_search,
)
from .harness import TrainingDiverged, cross_entropy, evaluate, train
from .metrics import MetricsReport, PartObject, confusion_matrix, part_miou, segmentation_metrics
from .network import (
    AttentionBlock,
    BackboneConfig,
    ClassificationNet,
    SegmentationNet,
    StageConfig,
    TransitionDown,
    TransitionUp,
    build_network,
)
from .optim import OptimizerState, Sgd, sgd_step
from .scenes import SceneSpec, SyntheticScene, gen_scene, gen_scenes

__version__ = "0.1.0"

__all__ = [
    "AttentionBlock",
    "AttentionConfig",
    "BackboneConfig",
    "Buffer",
    "ClassificationNet",
    "LocalAttention",
    "MetricsReport",
    "Module",
    "NeighborTable",
    "OptimizerState",
    "Param",
    "PartObject",
    "PointSet",
    "SampleResult",
    "SceneSpec",
    "SegmentationNet",
    "Sgd",
    "StageConfig",
    "SyntheticScene",
    "TrainingDiverged",
    "TransitionDown",
    "TransitionUp",
    "build_network",
    "confusion_matrix",
    "cross_entropy",
    "evaluate",
    "fps_sample",
    "gen_scene",
    "gen_scenes",
    "interpolate",
    "interpolation_weights",
    "knn_search",
    "part_miou",
    "segmentation_metrics",
    "sgd_step",
    "train",
]
