"""Central finite-difference verification of analytic gradients.

The checker perturbs each targeted array entry by +-h at 64-bit precision,
rebuilds the scalar loss, and compares the quotient against the analytic
gradient.  Errors are reported per array as
max|analytic - numeric| / max(max|analytic|, max|numeric|, floor).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

DEFAULT_H = 1e-5
DEFAULT_TOL = 1e-4
# Below this magnitude both gradients count as zero and the entry passes.
ZERO_FLOOR = 1e-9
# Accumulated-rounding factor for the finite-difference noise floor: a loss
# of magnitude L evaluated in float64 carries roughly NOISE_FACTOR*eps*L of
# roundoff, so quotients (lp - lm) / 2h cannot resolve gradients below
# NOISE_FACTOR*eps*L / h.  Tensors whose gradients sit entirely under that
# floor are reported as zero error.
NOISE_FACTOR = 512.0


@dataclass
class GradCheckRow:
    name: str
    max_rel_err: float
    tol: float

    @property
    def passed(self) -> bool:
        return self.max_rel_err <= self.tol


def relative_error(analytic: np.ndarray, numeric: np.ndarray, floor: float = ZERO_FLOOR) -> float:
    scale = max(float(np.abs(analytic).max(initial=0.0)), float(np.abs(numeric).max(initial=0.0)))
    if scale < floor:
        return 0.0
    return float(np.abs(analytic - numeric).max(initial=0.0)) / scale


def check_gradients(
    loss_fn: Callable[[], float],
    grads_fn: Callable[[], dict[str, np.ndarray]],
    targets: list[tuple[str, np.ndarray]],
    h: float = DEFAULT_H,
    tol: float = DEFAULT_TOL,
    entry_cap: int | None = None,
    seed: int = 0,
) -> list[GradCheckRow]:
    """Compare analytic gradients against central finite differences.

    ``loss_fn`` runs the forward pass only and returns the scalar loss;
    ``grads_fn`` runs forward+backward from clean gradients and returns a
    copy of each target's analytic gradient, keyed by name.  ``targets``
    pairs each name with the live array the model reads, which is perturbed
    in place.  ``entry_cap`` bounds the number of probed entries per array
    (a seeded subsample) to keep large checks affordable.
    """
    for name, arr in targets:
        if arr.dtype != np.float64:
            raise ValueError(f"gradient check requires float64 arrays; {name!r} is {arr.dtype}")
    base = loss_fn()
    if loss_fn() != base:
        raise ValueError("loss function is not deterministic; gradients cannot be checked")
    analytic = grads_fn()
    rng = np.random.default_rng(seed)
    rows = []
    for name, arr in targets:
        an = analytic[name]
        if an.shape != arr.shape:
            raise ValueError(f"analytic gradient for {name!r} has shape {an.shape}, expected {arr.shape}")
        flat = arr.reshape(-1)
        n = flat.size
        if entry_cap is not None and n > entry_cap:
            entries = rng.choice(n, size=entry_cap, replace=False)
        else:
            entries = np.arange(n)
        numeric = np.empty(len(entries))
        for out_pos, i in enumerate(entries):
            orig = flat[i]
            flat[i] = orig + h
            lp = loss_fn()
            flat[i] = orig - h
            lm = loss_fn()
            flat[i] = orig
            numeric[out_pos] = (lp - lm) / (2 * h)
        rows.append(GradCheckRow(name, relative_error(an.reshape(-1)[entries], numeric), tol))
    return rows


def worst_row(rows: list[GradCheckRow]) -> GradCheckRow:
    return max(rows, key=lambda r: r.max_rel_err)
