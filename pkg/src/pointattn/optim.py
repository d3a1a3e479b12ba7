"""SGD with momentum, weight decay and a stepwise learning-rate schedule."""

from __future__ import annotations

from dataclasses import dataclass, field

from .core import Module, Param


@dataclass
class OptimizerState:
    learning_rate: float
    momentum: float = 0.9
    weight_decay: float = 0.0001
    step_count: int = 0
    # (step, multiplier) entries; the multiplier applies from that step on.
    schedule: list[tuple[int, float]] = field(default_factory=list)

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ValueError("learning rate must be positive")
        if not 0 <= self.momentum < 1:
            raise ValueError("momentum must be in [0, 1)")


def sgd_step(params: list[tuple[str, Param]], state: OptimizerState) -> None:
    """One update: v <- momentum*v + (grad + wd*value); value <- value - lr*v.

    Increments the step counter, applies any schedule entry that fires at
    this step before updating, and zeroes all gradients afterwards.
    """
    state.step_count += 1
    for step, mult in state.schedule:
        if step == state.step_count:
            state.learning_rate *= mult
    for name, p in params:
        if p.grad is None:
            raise RuntimeError(f"parameter {name!r} has no gradient buffer")
        v = p.momentum
        v *= state.momentum
        v += p.grad + state.weight_decay * p.value
        p.value -= state.learning_rate * v
        p.grad[...] = 0


class Sgd:
    """Binds a module's parameters to an :class:`OptimizerState`."""

    def __init__(self, model: Module, state: OptimizerState):
        self.params = list(model.named_params())
        self.state = state

    def step(self) -> None:
        sgd_step(self.params, self.state)

    @property
    def learning_rate(self) -> float:
        return self.state.learning_rate
