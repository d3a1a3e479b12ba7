"""Run configuration: a flat key = value text format with dotted sections.

One file fully determines a run (architecture, attention variant,
optimizer schedule, data generator, seeds), which keeps experiment records
diff-able.  Example::

    seed = 0
    task = segmentation
    iterations = 2000

    arch.widths = 8, 16, 32, 64, 128
    arch.blocks = 1
    arch.k = 16

    attention.operator = vector
    attention.pos_mode = relative
    attention.normalize = softmax

    optim.lr = 0.05
    optim.drop_at = 0.6, 0.8

    data.generator = planes
    data.num_points = 512
    data.num_classes = 3
    data.noise = 0.05
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from pathlib import Path

from .attention import NORMALIZE, OPERATORS, POS_MODES
from .harness import drop_schedule
from .network import BackboneConfig
from .optim import OptimizerState
from .scenes import GENERATORS, SceneSpec, gen_scene


class ConfigError(ValueError):
    def __init__(self, fieldname: str, message: str):
        self.fieldname = fieldname
        super().__init__(f"config field {fieldname!r}: {message}")


@dataclass
class RunConfig:
    seed: int = 0
    task: str = "segmentation"
    iterations: int = 2000
    fps_start: int = 0

    arch_widths: list[int] = field(default_factory=lambda: [8, 16, 32, 64, 128])
    arch_blocks: int = 1
    arch_k: int = 16
    arch_bottleneck: int = 1

    attention_operator: str = "vector"
    attention_pos_mode: str = "relative"
    attention_normalize: str = "softmax"
    attention_scaled: bool = False

    optim_lr: float = 0.05
    optim_momentum: float = 0.9
    optim_weight_decay: float = 0.0001
    optim_drop_at: list[float] = field(default_factory=lambda: [0.6, 0.8])
    optim_drop_factor: float = 0.1

    data_generator: str = "planes"
    data_num_points: int = 512
    data_num_classes: int = 3
    data_noise: float = 0.05
    data_num_scenes: int = 1
    data_seed: int | None = None

    eval_num_scenes: int = 1
    eval_seed: int | None = None

    def backbone(self) -> BackboneConfig:
        return BackboneConfig.from_widths(
            self.arch_widths,
            blocks=self.arch_blocks,
            k=self.arch_k,
            head=self.task,
            num_classes=self.data_num_classes,
            in_dim=3,
            operator=self.attention_operator,
            pos_mode=self.attention_pos_mode,
            normalize=self.attention_normalize,
            scaled=self.attention_scaled,
            bottleneck=self.arch_bottleneck,
        )

    def optimizer_state(self) -> OptimizerState:
        return OptimizerState(
            learning_rate=self.optim_lr,
            momentum=self.optim_momentum,
            weight_decay=self.optim_weight_decay,
            schedule=drop_schedule(self.iterations, self.optim_drop_at, self.optim_drop_factor),
        )

    def _scene_spec(self, seed: int) -> SceneSpec:
        generator = "object" if self.task == "classification" else self.data_generator
        return SceneSpec(
            generator=generator,
            num_points=self.data_num_points,
            num_classes=self.data_num_classes,
            noise=self.data_noise,
            seed=seed,
        )

    def _make_scenes(self, base_seed: int, count: int) -> list:
        scenes = []
        for i in range(count):
            spec = self._scene_spec(base_seed + i)
            if spec.generator == "object":
                spec = replace(spec, object_class=i % self.data_num_classes)
            scenes.append(gen_scene(spec))
        return scenes

    def train_scenes(self) -> list:
        seed = self.seed if self.data_seed is None else self.data_seed
        return self._make_scenes(seed, self.data_num_scenes)

    def eval_scenes(self) -> list:
        base = self.seed if self.data_seed is None else self.data_seed
        seed = base + 1000 if self.eval_seed is None else self.eval_seed
        return self._make_scenes(seed, self.eval_num_scenes)

    def validate(self) -> None:
        if self.task not in ("segmentation", "classification"):
            raise ConfigError("task", f"must be segmentation or classification, got {self.task!r}")
        if self.iterations < 1:
            raise ConfigError("iterations", "must be >= 1")
        if not self.arch_widths or any(w < 1 for w in self.arch_widths):
            raise ConfigError("arch.widths", "needs at least one positive width")
        if self.arch_k < 1:
            raise ConfigError("arch.k", "must be >= 1")
        if self.arch_blocks < 0:
            raise ConfigError("arch.blocks", "must be >= 0")
        if self.attention_operator not in OPERATORS:
            raise ConfigError("attention.operator", f"expected one of {OPERATORS}, got {self.attention_operator!r}")
        if self.attention_pos_mode not in POS_MODES:
            raise ConfigError("attention.pos_mode", f"expected one of {POS_MODES}, got {self.attention_pos_mode!r}")
        if self.attention_normalize not in NORMALIZE:
            raise ConfigError("attention.normalize", f"expected one of {NORMALIZE}, got {self.attention_normalize!r}")
        if self.optim_lr <= 0:
            raise ConfigError("optim.lr", "must be positive")
        if not 0 <= self.optim_momentum < 1:
            raise ConfigError("optim.momentum", "must be in [0, 1)")
        if self.optim_weight_decay < 0:
            raise ConfigError("optim.weight_decay", "must be nonnegative")
        if any(not 0 < f < 1 for f in self.optim_drop_at):
            raise ConfigError("optim.drop_at", "fractions must be in (0, 1)")
        if self.data_generator not in GENERATORS:
            raise ConfigError("data.generator", f"expected one of {GENERATORS}, got {self.data_generator!r}")
        if self.data_num_classes < 2:
            raise ConfigError("data.num_classes", "must be >= 2")
        if self.data_num_points < self.data_num_classes:
            raise ConfigError("data.num_points", "needs at least one point per class")
        if self.data_noise < 0:
            raise ConfigError("data.noise", "must be nonnegative")
        if self.data_num_scenes < 1 or self.eval_num_scenes < 1:
            raise ConfigError("data.num_scenes", "scene counts must be >= 1")
        n = self.data_num_points
        stages = len(self.arch_widths)
        min_points = 4 ** (stages - 1)
        if n < min_points:
            raise ConfigError(
                "data.num_points",
                f"{stages} stages need at least {min_points} points, got {n}",
            )
        if self.task == "segmentation":
            per_class = n // self.data_num_classes
            if per_class < self.arch_k:
                raise ConfigError(
                    "data.num_points",
                    f"per-class point count {per_class} is below arch.k={self.arch_k}",
                )
            if math.ceil(n / min_points) < 2:
                raise ConfigError(
                    "data.num_points",
                    f"training norms need >= 2 points at the coarsest stage; "
                    f"use more than {min_points} points or fewer stages",
                )


_FIELD_MAP = {
    "seed": "seed",
    "task": "task",
    "iterations": "iterations",
    "fps_start": "fps_start",
    "arch.widths": "arch_widths",
    "arch.blocks": "arch_blocks",
    "arch.k": "arch_k",
    "arch.bottleneck": "arch_bottleneck",
    "attention.operator": "attention_operator",
    "attention.pos_mode": "attention_pos_mode",
    "attention.normalize": "attention_normalize",
    "attention.scaled": "attention_scaled",
    "optim.lr": "optim_lr",
    "optim.momentum": "optim_momentum",
    "optim.weight_decay": "optim_weight_decay",
    "optim.drop_at": "optim_drop_at",
    "optim.drop_factor": "optim_drop_factor",
    "data.generator": "data_generator",
    "data.num_points": "data_num_points",
    "data.num_classes": "data_num_classes",
    "data.noise": "data_noise",
    "data.num_scenes": "data_num_scenes",
    "data.seed": "data_seed",
    "eval.num_scenes": "eval_num_scenes",
    "eval.seed": "eval_seed",
}

_LIST_FIELDS = {"arch.widths", "optim.drop_at"}


def _parse_scalar(token: str):
    token = token.strip()
    low = token.lower()
    if low in ("true", "false"):
        return low == "true"
    try:
        return int(token)
    except ValueError:
        pass
    try:
        return float(token)
    except ValueError:
        return token


def parse_config_text(text: str) -> RunConfig:
    cfg = RunConfig()
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}", f"expected 'key = value', got {line!r}")
        key, _, value = line.partition("=")
        key = key.strip()
        if key not in _FIELD_MAP:
            raise ConfigError(key, "unknown configuration key")
        if key in _LIST_FIELDS or "," in value:
            parsed = [_parse_scalar(t) for t in value.split(",") if t.strip()]
            if key not in _LIST_FIELDS:
                raise ConfigError(key, "does not accept a list")
        else:
            parsed = _parse_scalar(value)
        setattr(cfg, _FIELD_MAP[key], parsed)
    cfg.validate()
    return cfg


def load_config(path) -> RunConfig:
    p = Path(path)
    if not p.is_file():
        raise FileNotFoundError(f"config file not found: {p}")
    return parse_config_text(p.read_text())
