"""Adaptive candidate-pool sizing (the flex variant) and its retrain schedule.

Whenever the running loss has stalled for FLEX_PATIENCE rotations the
candidate ratio is halved (Shrink) or doubled (Grow); the direction flips
when the loss got worse since the last size change. The input layer never
shrinks below ceil(6K/5) slots and never grows past all N features.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass

from .errors import ConfigError
from .stopping import LOSS_TOL

FLEX_PATIENCE = 10


class Direction(str, enum.Enum):
    SHRINK = "shrink"
    GROW = "grow"


@dataclass
class FlexState:
    direction: Direction = Direction.SHRINK
    loss_at_change: float | None = None
    best_loss: float = math.inf
    stall_rotations: int = 0


def candidate_count(n_features: int, k: int, c_ratio: float, minimum: int = 1) -> int:
    """Number of candidate slots: round(c_ratio * (N - K)), clamped."""
    raw = int(round(c_ratio * (n_features - k)))
    return max(minimum, min(raw, n_features - k))


def min_candidates(k: int) -> int:
    """Flex floor on the candidate pool, keeping the input layer >= ceil(6K/5)."""
    return math.ceil(k / 5)


def c_ratio_floor(n_features: int, k: int) -> float:
    return (k / 5) / (n_features - k)


def check_flex_domain(n_features: int, k: int) -> None:
    if n_features < k + min_candidates(k):
        raise ConfigError(
            f"flex needs room for ceil(K/5) candidates: K={k} requires at least "
            f"{k + min_candidates(k)} features, dataset has {n_features}"
        )


def flex_update(flex: FlexState, loss: float, sel) -> float | None:
    """One per-rotation flex step; returns the new c_ratio on a resize, else None.

    `sel` provides k, n_features and the current c_ratio. Called between
    top-set selection and candidate drawing, so a returned ratio takes
    effect in the same rotation.
    """
    if flex.loss_at_change is None:
        flex.loss_at_change = loss
    if loss < flex.best_loss - LOSS_TOL:
        flex.best_loss = loss
        flex.stall_rotations = 0
        return None
    flex.stall_rotations += 1
    if flex.stall_rotations < FLEX_PATIENCE:
        return None

    if loss > flex.loss_at_change:
        flex.direction = Direction.GROW if flex.direction == Direction.SHRINK else Direction.SHRINK
    flex.loss_at_change = loss
    flex.best_loss = loss
    flex.stall_rotations = 0

    if flex.direction == Direction.SHRINK:
        new_ratio = max(sel.c_ratio / 2.0, c_ratio_floor(sel.n_features, sel.k))
    else:
        new_ratio = min(sel.c_ratio * 2.0, 1.0)
    if new_ratio == sel.c_ratio:
        return None
    return new_ratio


def flex_final_scaling(
    n_features: int, k: int, start_c_ratio: float, end_c_ratio: float, total_rotations: int
) -> list[tuple[int, int]]:
    """Retrain-phase schedule of (rotation, candidate count) resize steps.

    The input-layer size moves linearly from its start to its end value in
    at most ten evenly spaced steps (one per rotation when the retrain is
    shorter than ten rotations); the last step lands exactly on the final
    size at the final rotation. Equal start and end sizes need no steps.
    """
    if total_rotations < 1:
        raise ConfigError(f"retrain length must be positive, got {total_rotations}")
    lo = min_candidates(k)
    start = candidate_count(n_features, k, start_c_ratio, minimum=lo)
    end = candidate_count(n_features, k, end_c_ratio, minimum=lo)
    if start == end:
        return []
    n_steps = min(10, total_rotations)
    schedule = []
    for i in range(1, n_steps + 1):
        rotation = int(round(i * total_rotations / n_steps))
        k_c = int(round(start + (end - start) * i / n_steps))
        schedule.append((rotation, k_c))
    return schedule
