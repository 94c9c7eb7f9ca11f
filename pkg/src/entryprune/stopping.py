"""Stop rules evaluated at rotation boundaries, and the final-retrain plan.

Three kinds: a fixed epoch budget, stability of the selected set, and the
default validation rule that fires when either the validation loss or the
selected set has stalled. Loss comparisons are best-so-far with an
absolute tolerance of 1e-12.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

from .errors import ConfigError

LOSS_TOL = 1e-12


class StopKind(str, enum.Enum):
    EPOCHS = "epochs"
    IDENT = "ident"
    VALIDATION = "validation"


@dataclass(frozen=True)
class StoppingConfig:
    kind: StopKind = StopKind.VALIDATION
    max_epochs: int = 100
    patience: int = 100          # ident: rotations the top set must stay identical
    loss_patience: int = 100     # validation: rotations without a val-loss improvement
    ident_patience: int = 100    # validation: rotations with an identical top set

    def __post_init__(self):
        if self.max_epochs < 1 or self.patience < 1 or self.loss_patience < 1 or self.ident_patience < 1:
            raise ConfigError(f"stopping thresholds must be positive: {self}")


@dataclass
class RotationRecord:
    """One row of the run history, appended after every rotation."""

    rotation: int
    epoch: int
    running_loss: float
    val_loss: float | None
    min_top_entry: float
    top_changes: int
    k_c: int
    c_ratio: float
    top_key: tuple[int, ...]
    phase: str = "search"


def _ident_stale(history) -> int:
    """Trailing rotations over which the top set did not change."""
    last = history[-1].top_key
    stale = 0
    for rec in reversed(history[:-1]):
        if rec.top_key != last:
            break
        stale += 1
    return stale


def _val_stale(history) -> int:
    """Rotations since the last best-so-far validation loss improvement."""
    best = math.inf
    stale = 0
    for rec in history:
        if rec.val_loss is None:
            raise ConfigError("validation stopping requires a validation split")
        if rec.val_loss < best - LOSS_TOL:
            best = rec.val_loss
            stale = 0
        else:
            stale += 1
    return stale


def should_stop(cfg: StoppingConfig, history) -> bool:
    """Pure check over the rotation history; the caller appends first."""
    if not history:
        return False
    if cfg.kind == StopKind.EPOCHS:
        return history[-1].epoch >= cfg.max_epochs
    if cfg.kind == StopKind.IDENT:
        return _ident_stale(history) >= cfg.patience
    return _val_stale(history) >= cfg.loss_patience or _ident_stale(history) >= cfg.ident_patience


@dataclass
class RetrainPlan:
    """Fixed-length retrain on train+val once validation stopping fired."""

    rotations: int
    size_schedule: list[tuple[int, int]] = field(default_factory=list)


def plan_final_retrain(stopped_at_rotation: int, size_schedule=None) -> RetrainPlan:
    if stopped_at_rotation < 1:
        raise ConfigError(f"retrain needs at least one rotation, got {stopped_at_rotation}")
    return RetrainPlan(rotations=stopped_at_rotation, size_schedule=list(size_schedule or []))
