"""Synthetic labeled point cloud scenes for desk-scale training and tests.

Three generators, all deterministic per seed:

* ``planes``  - one horizontal plane per class, stacked with wide vertical
  separation, so classes are linearly separable by height.
* ``patches`` - small planar patches scattered at random locations; the
  class is the patch orientation, so a point's class is only recoverable
  from its local neighborhood, never from its own coordinates.
* ``object``  - a single primitive (plane / sphere / box shell) per scene
  with a cloud-level class label, for classification runs.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .geometry import PointSet

GENERATORS = ("planes", "patches", "object")

_PLANE_SPACING = 4.0
_PLANE_EXTENT = 2.0
_PATCH_RADIUS = 0.6
_PATCH_BOX = 10.0
_POINTS_PER_PATCH = 48


@dataclass(frozen=True)
class SceneSpec:
    generator: str = "planes"
    num_points: int = 512
    num_classes: int = 3
    noise: float = 0.02
    seed: int = 0
    object_class: int | None = None  # object generator only; default seed % classes

    def __post_init__(self):
        if self.generator not in GENERATORS:
            raise ValueError(f"unknown generator {self.generator!r}; expected one of {GENERATORS}")
        if self.num_classes < 2:
            raise ValueError("need at least two classes")
        if self.num_points < self.num_classes and self.generator != "object":
            raise ValueError("need at least one point per class")
        if self.noise < 0:
            raise ValueError("noise sigma must be nonnegative")
        if self.object_class is not None and not 0 <= self.object_class < self.num_classes:
            raise ValueError("object_class out of range")


@dataclass
class SyntheticScene:
    cloud: PointSet
    spec: SceneSpec
    label: int | None = None  # cloud-level class for object scenes


def class_allocation(num_points: int, num_classes: int) -> np.ndarray:
    """Per-class point counts, as even as possible, summing to num_points."""
    base = num_points // num_classes
    counts = np.full(num_classes, base, dtype=np.int64)
    counts[: num_points - base * num_classes] += 1
    return counts


def _plane_points(rng, count, sigma):
    pts = np.empty((count, 3))
    pts[:, 0] = rng.uniform(0, _PLANE_EXTENT, count)
    pts[:, 1] = rng.uniform(0, _PLANE_EXTENT, count)
    pts[:, 2] = rng.normal(0, sigma, count) if sigma > 0 else 0.0
    return pts


def _gen_planes(spec: SceneSpec, rng) -> SyntheticScene:
    counts = class_allocation(spec.num_points, spec.num_classes)
    chunks, labels = [], []
    for c, count in enumerate(counts):
        pts = _plane_points(rng, count, spec.noise)
        pts[:, 2] += c * _PLANE_SPACING
        chunks.append(pts)
        labels.append(np.full(count, c, dtype=np.int64))
    cloud = PointSet(np.concatenate(chunks), labels=np.concatenate(labels))
    return SyntheticScene(cloud=cloud, spec=spec)


def _patch_frame(cls: int, rng) -> np.ndarray:
    """Orthonormal (u, v, normal) rows; the normal axis encodes the class."""
    normal = np.zeros(3)
    normal[cls % 3] = 1.0
    if cls >= 3:
        # Extra classes get tilted orientations, rotated away from the axes.
        tilt = np.zeros(3)
        tilt[(cls + 1) % 3] = 1.0
        normal = (normal + tilt) / np.sqrt(2.0)
    u = np.cross(normal, [0.7548, 0.5698, 0.3251])
    u /= np.linalg.norm(u)
    v = np.cross(normal, u)
    return np.stack([u, v, normal])


def _gen_patches(spec: SceneSpec, rng) -> SyntheticScene:
    counts = class_allocation(spec.num_points, spec.num_classes)
    chunks, labels = [], []
    for c, count in enumerate(counts):
        frame = _patch_frame(c, rng)
        remaining = int(count)
        while remaining > 0:
            take = min(_POINTS_PER_PATCH, remaining)
            center = rng.uniform(0, _PATCH_BOX, 3)
            r = _PATCH_RADIUS * np.sqrt(rng.uniform(0, 1, take))
            ang = rng.uniform(0, 2 * np.pi, take)
            in_plane = r[:, None] * (np.cos(ang)[:, None] * frame[0] + np.sin(ang)[:, None] * frame[1])
            off_plane = rng.normal(0, spec.noise, take)[:, None] * frame[2] if spec.noise > 0 else 0.0
            chunks.append(center + in_plane + off_plane)
            labels.append(np.full(take, c, dtype=np.int64))
            remaining -= take
    cloud = PointSet(np.concatenate(chunks), labels=np.concatenate(labels))
    return SyntheticScene(cloud=cloud, spec=spec)


def _gen_object(spec: SceneSpec, rng) -> SyntheticScene:
    cls = spec.object_class if spec.object_class is not None else spec.seed % spec.num_classes
    n = spec.num_points
    kind = cls % 3
    if kind == 0:  # flat disc
        r = np.sqrt(rng.uniform(0, 1, n))
        ang = rng.uniform(0, 2 * np.pi, n)
        pts = np.stack([r * np.cos(ang), r * np.sin(ang), np.zeros(n)], axis=1)
    elif kind == 1:  # sphere shell
        vec = rng.normal(size=(n, 3))
        pts = vec / np.linalg.norm(vec, axis=1, keepdims=True)
    else:  # box shell: project random cube points onto the nearest face
        pts = rng.uniform(-1, 1, (n, 3))
        face = np.abs(pts).argmax(axis=1)
        pts[np.arange(n), face] = np.sign(pts[np.arange(n), face] + 1e-12)
    if spec.noise > 0:
        pts = pts + rng.normal(0, spec.noise, (n, 3))
    cloud = PointSet(pts, labels=np.full(n, cls, dtype=np.int64))
    return SyntheticScene(cloud=cloud, spec=spec, label=cls)


def gen_scene(spec: SceneSpec) -> SyntheticScene:
    rng = np.random.default_rng(spec.seed)
    if spec.generator == "planes":
        return _gen_planes(spec, rng)
    if spec.generator == "patches":
        return _gen_patches(spec, rng)
    return _gen_object(spec, rng)


def gen_scenes(spec: SceneSpec, count: int) -> list[SyntheticScene]:
    """``count`` scenes with consecutive seeds starting at spec.seed."""
    from dataclasses import replace

    return [gen_scene(replace(spec, seed=spec.seed + i)) for i in range(count)]
