"""Parameter containers and the tiny module system shared by all layers.

There is no autodiff tape here: every layer implements an explicit
``forward``/``backward`` pair and caches whatever its backward needs.
Gradients accumulate (``+=``) into :class:`Param` buffers so that a value
used in several branches of a computation receives all of its
contributions; the optimizer zeroes them after each step.
"""

from __future__ import annotations

import math
from typing import Iterator

import numpy as np

DEFAULT_DTYPE = np.float32
# Gradient checking needs the headroom of 64-bit floats.
CHECK_DTYPE = np.float64


class Param:
    """A trainable tensor: value plus same-shape gradient and momentum buffers."""

    __slots__ = ("value", "grad", "momentum")

    def __init__(self, value: np.ndarray):
        self.value = np.ascontiguousarray(value)
        self.grad = np.zeros_like(self.value)
        self.momentum = np.zeros_like(self.value)

    @property
    def shape(self) -> tuple[int, ...]:
        return self.value.shape

    @property
    def size(self) -> int:
        return self.value.size


class Buffer:
    """Non-trainable state that still belongs in checkpoints (running norm stats)."""

    __slots__ = ("value",)

    def __init__(self, value: np.ndarray):
        self.value = np.ascontiguousarray(value)


class Module:
    """Base for layers; discovers Param/Buffer/child Module attributes by walking
    ``vars(self)`` in insertion order, so traversal is deterministic.

    Attributes whose name starts with an underscore are forward caches and are
    never traversed.
    """

    def _children(self):
        for name, obj in vars(self).items():
            if name.startswith("_"):
                continue
            if isinstance(obj, (Param, Buffer, Module)):
                yield name, obj
            elif isinstance(obj, (list, tuple)):
                for i, item in enumerate(obj):
                    if isinstance(item, (Param, Buffer, Module)):
                        yield f"{name}.{i}", item

    def named_params(self, prefix: str = "") -> Iterator[tuple[str, Param]]:
        for name, obj in self._children():
            full = f"{prefix}{name}"
            if isinstance(obj, Param):
                yield full, obj
            elif isinstance(obj, Module):
                yield from obj.named_params(prefix=full + ".")

    def named_buffers(self, prefix: str = "") -> Iterator[tuple[str, Buffer]]:
        for name, obj in self._children():
            full = f"{prefix}{name}"
            if isinstance(obj, Buffer):
                yield full, obj
            elif isinstance(obj, Module):
                yield from obj.named_buffers(prefix=full + ".")

    def modules(self) -> Iterator["Module"]:
        yield self
        for _, obj in self._children():
            if isinstance(obj, Module):
                yield from obj.modules()

    def zero_grads(self) -> None:
        for _, p in self.named_params():
            p.grad[...] = 0

    def param_count(self) -> int:
        return sum(p.size for _, p in self.named_params())


def uniform_init(rng: np.random.Generator, shape, fan_in: int, dtype=DEFAULT_DTYPE) -> np.ndarray:
    """Uniform weights in [-s, s] with s = sqrt(1 / fan_in)."""
    s = math.sqrt(1.0 / fan_in)
    return rng.uniform(-s, s, size=shape).astype(dtype)


def as_dtype_2d(x: np.ndarray, dtype, name: str) -> np.ndarray:
    x = np.asarray(x, dtype=dtype)
    if x.ndim != 2:
        raise ValueError(f"{name} must be 2-D, got shape {x.shape}")
    return x
