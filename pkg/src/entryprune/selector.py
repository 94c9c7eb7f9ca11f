"""Feature selection by pruning and regrowing the input layer of a dense MLP.

The input layer holds K kept slots plus K_c candidate slots. Every n_mb
mini-batches the per-slot change scores are standardized, candidate
scores are written into the persistent entry-score vector, the best K
features by entry score are kept, fresh candidates are drawn uniformly
from the remainder, candidate rows restart near zero, and the optimizer
state restarts entirely. The dense body of the network persists.
"""
from __future__ import annotations

import enum
import time
from dataclasses import dataclass, field, replace

import numpy as np

from . import flex as flexmod
from .data import BatchStream, Dataset, Split
from .errors import ConfigError
from .mlp import (
    MlpArchitecture,
    MlpState,
    OptimizerConfig,
    adam_step,
    build_mlp,
    loss_and_grads,
    reinit_rows,
    reset_optimizer,
)
from .rng import SeededRng
from .stopping import RotationRecord, StopKind, StoppingConfig, plan_final_retrain, should_stop


class Metric(str, enum.Enum):
    GRADIENT_SUM = "gradient_sum"
    WEIGHT_CHANGE = "weight_change"
    MAGNITUDE = "magnitude"
    MOLCHANOV = "molchanov"


class EntryMode(str, enum.Enum):
    ENTRY_SCORE = "entry_score"
    LIVE = "live"


@dataclass(frozen=True)
class SelectionConfig:
    k: int
    c_ratio: float = 0.2
    n_mb: int = 100
    metric: Metric = Metric.GRADIENT_SUM
    entry_mode: EntryMode = EntryMode.ENTRY_SCORE
    seed: int = 0
    hidden_sizes: tuple[int, ...] = (100,)
    optimizer: OptimizerConfig = field(default_factory=OptimizerConfig)
    flex: bool = False
    max_rotations: int | None = None  # hard safety valve on top of the stop rule

    def validate(self, n_features: int) -> None:
        if not 0 < self.k < n_features:
            raise ConfigError(f"k must satisfy 0 < k < n_features={n_features}, got {self.k}")
        if not 0.0 < self.c_ratio <= 1.0:
            raise ConfigError(f"c_ratio must be in (0, 1], got {self.c_ratio}")
        if self.n_mb < 1:
            raise ConfigError(f"n_mb must be positive, got {self.n_mb}")
        if self.metric == Metric.MOLCHANOV and self.entry_mode != EntryMode.LIVE:
            raise ConfigError("the molchanov metric is only defined for live entry mode")
        if self.flex:
            flexmod.check_flex_domain(n_features, self.k)


@dataclass
class SelectionState:
    n_features: int
    k: int
    k_c: int
    c_ratio: float
    metric: Metric
    entry_mode: EntryMode
    top_features: np.ndarray        # sorted ascending, rows 0..len-1 of the first layer
    candidate_features: np.ndarray  # draw order, rows after the kept block
    input_features: np.ndarray      # concatenation of the two blocks
    entry_scores: np.ndarray        # length N, -inf until a feature finishes a window
    accum: np.ndarray               # per-slot gradient sum over the current window
    weights_prev: np.ndarray | None  # first-layer snapshot for the weight-change metric
    importance: np.ndarray | None    # per-weight (g*w)^2 sums for the molchanov metric
    rotation_count: int = 0

    def candidate_rows(self) -> np.ndarray:
        return np.arange(self.top_features.size, self.input_features.size)


@dataclass
class RunObserver:
    """Optional hooks for instrumentation (probes, invariant checks)."""

    on_first_batch: object | None = None  # called (sel, first_layer_grad) on each window's first batch
    on_rotation: object | None = None     # called (sel, mlp) right after a rotation


@dataclass
class SelectionResult:
    selected: list[int]
    history: list[RotationRecord]
    total_epochs: int
    wall_time: float
    entry_scores: np.ndarray
    final_network: MlpState
    final_input_features: np.ndarray
    stopped_at_rotation: int
    retrained: bool


def init_selection(dataset: Dataset, cfg: SelectionConfig, rng: SeededRng) -> tuple[SelectionState, MlpState]:
    """Random initial input layer; every slot starts as a candidate."""
    n = dataset.n_features
    cfg.validate(n)
    k_c = flexmod.candidate_count(n, cfg.k, cfg.c_ratio)
    feats = rng.stream("candidate_draw").choice(n, size=cfg.k + k_c, replace=False)
    arch = MlpArchitecture(cfg.k + k_c, cfg.hidden_sizes, dataset.n_classes)
    mlp = build_mlp(arch, rng)
    reinit_rows(mlp, np.arange(arch.input_rows), rng)
    sel = SelectionState(
        n_features=n,
        k=cfg.k,
        k_c=k_c,
        c_ratio=cfg.c_ratio,
        metric=cfg.metric,
        entry_mode=cfg.entry_mode,
        top_features=np.empty(0, dtype=np.int64),
        candidate_features=feats.astype(np.int64),
        input_features=feats.astype(np.int64),
        entry_scores=np.full(n, -np.inf),
        accum=np.zeros_like(mlp.weights[0]),
        weights_prev=mlp.weights[0].copy() if cfg.metric == Metric.WEIGHT_CHANGE else None,
        importance=np.zeros_like(mlp.weights[0]) if cfg.metric == Metric.MOLCHANOV else None,
    )
    return sel, mlp


def accumulate(sel: SelectionState, first_layer_grad: np.ndarray, first_layer_weights: np.ndarray) -> None:
    """Per-mini-batch metric bookkeeping, before the optimizer update."""
    if sel.metric == Metric.GRADIENT_SUM:
        sel.accum += first_layer_grad
    elif sel.metric == Metric.MOLCHANOV:
        sel.importance += np.square(first_layer_grad * first_layer_weights)


def relative_change_scores(sel: SelectionState, first_layer_weights: np.ndarray) -> np.ndarray:
    """Standardized per-slot change scores: row L1 of the metric matrix, z-scored.

    Population SD; an all-equal score vector standardizes to zeros.
    """
    if sel.metric == Metric.GRADIENT_SUM:
        matrix = sel.accum
    elif sel.metric == Metric.WEIGHT_CHANGE:
        matrix = first_layer_weights - sel.weights_prev
    elif sel.metric == Metric.MAGNITUDE:
        matrix = first_layer_weights
    else:
        matrix = sel.importance
    row_l1 = np.abs(matrix).sum(axis=1)
    sd = row_l1.std()
    # an all-identical vector can still have sd ~1e-17 from the inexact mean
    if sd == 0.0 or row_l1.max() == row_l1.min():
        return np.zeros_like(row_l1)
    return (row_l1 - row_l1.mean()) / sd


def _top_by_entry(entry_scores: np.ndarray, input_features: np.ndarray, k: int) -> np.ndarray:
    """Top-k features by entry score; ties prefer currently-active, then lower index."""
    n = entry_scores.shape[0]
    inactive = np.ones(n)
    inactive[input_features] = 0.0
    order = np.lexsort((np.arange(n), inactive, -entry_scores))
    order = order[np.isfinite(entry_scores[order])]
    return order[:k]


def select_top(sel: SelectionState, scores: np.ndarray) -> tuple[int, float]:
    """Write candidate scores into the entry vector and pick the kept set.

    Returns (number of kept-set changes, minimum kept score). Entry mode
    Live ignores the entry vector and ranks the current input layer by
    this window's scores instead.
    """
    old_top = set(sel.top_features.tolist())
    if sel.entry_mode == EntryMode.ENTRY_SCORE:
        n_top = sel.top_features.size
        sel.entry_scores[sel.candidate_features] = scores[n_top:]
        new_top = _top_by_entry(sel.entry_scores, sel.input_features, sel.k)
        min_top = float(sel.entry_scores[new_top].min())
    else:
        order = np.lexsort((sel.input_features, -scores))
        new_top = sel.input_features[order[: sel.k]]
        min_top = float(scores[order[: sel.k]].min())
    changes = int(np.sum([f not in old_top for f in new_top.tolist()]))
    sel.top_features = np.sort(new_top).astype(np.int64)
    return changes, min_top


def draw_candidates(sel: SelectionState, rng: SeededRng) -> None:
    """Uniform distinct draws from every feature outside the kept set."""
    pool = np.setdiff1d(np.arange(sel.n_features), sel.top_features)
    take = min(sel.k_c, pool.size)
    picks = rng.stream("candidate_draw").choice(pool.size, size=take, replace=False)
    sel.candidate_features = pool[picks].astype(np.int64)
    sel.input_features = np.concatenate([sel.top_features, sel.candidate_features])


def rebuild_input_layer(sel: SelectionState, mlp: MlpState, old_input: np.ndarray, rng: SeededRng) -> None:
    """Carry kept rows over, restart candidate rows near zero, reset the optimizer."""
    n_rows = sel.input_features.size
    h1 = mlp.weights[0].shape[1]
    old_pos = {int(f): i for i, f in enumerate(old_input)}
    new_w1 = np.zeros((n_rows, h1))
    for i, f in enumerate(sel.top_features.tolist()):
        try:
            new_w1[i] = mlp.weights[0][old_pos[f]]
        except KeyError:
            raise AssertionError(f"kept feature {f} has no input-layer row") from None
    mlp.arch = replace(mlp.arch, input_rows=n_rows)
    mlp.weights[0] = new_w1
    mlp.m_w[0] = np.zeros_like(new_w1)
    mlp.v_w[0] = np.zeros_like(new_w1)
    reinit_rows(mlp, np.arange(sel.top_features.size, n_rows), rng)
    reset_optimizer(mlp)
    sel.accum = np.zeros_like(new_w1)
    if sel.metric == Metric.WEIGHT_CHANGE:
        sel.weights_prev = mlp.weights[0].copy()
    if sel.metric == Metric.MOLCHANOV:
        sel.importance = np.zeros_like(new_w1)
    sel.rotation_count += 1


def rotate(
    sel: SelectionState,
    mlp: MlpState,
    scores: np.ndarray,
    rng: SeededRng,
    flex_hook=None,
) -> tuple[int, float]:
    """One full rotation; the flex hook runs between keeping and redrawing."""
    old_input = sel.input_features
    changes, min_top = select_top(sel, scores)
    if flex_hook is not None:
        flex_hook(sel)
    draw_candidates(sel, rng)
    rebuild_input_layer(sel, mlp, old_input, rng)
    return changes, min_top


def _partition_loss(mlp: MlpState, X: np.ndarray, y: np.ndarray, cols: np.ndarray, batch_size: int) -> float:
    """Mean cross-entropy over a whole partition, chunked."""
    total = 0.0
    for start in range(0, X.shape[0], batch_size):
        rows = slice(start, min(start + batch_size, X.shape[0]))
        loss, _ = loss_and_grads(mlp, X[rows][:, cols], y[rows])
        total += loss * (rows.stop - rows.start)
    return total / X.shape[0]


def _carve_validation(train_rows: np.ndarray, rng: SeededRng) -> tuple[np.ndarray, np.ndarray]:
    """Seeded 80/20 split of the training rows for the stopping rule."""
    n = train_rows.shape[0]
    n_val = int(np.floor(0.2 * n + 0.5))
    if n_val == 0 or n_val == n:
        raise ConfigError(f"training partition of {n} rows is too small for an 80/20 validation split")
    perm = rng.stream("val_split").permutation(n)
    return train_rows[perm[n_val:]], train_rows[perm[:n_val]]


def _run_phase(
    dataset: Dataset,
    cfg: SelectionConfig,
    stop_cfg: StoppingConfig,
    rng: SeededRng,
    train_rows: np.ndarray,
    val_rows: np.ndarray | None,
    flex_state,
    size_schedule: dict[int, int],
    fixed_rotations: int | None,
    observer: RunObserver | None,
    phase: str,
) -> tuple[SelectionState, MlpState, list[RotationRecord], int]:
    sel, mlp = init_selection(dataset, cfg, rng)
    stream = BatchStream(train_rows, cfg.optimizer.batch_size, rng.stream("batch_shuffle"))
    history: list[RotationRecord] = []
    X, y = dataset.X, dataset.y
    while True:
        window_losses = np.empty(cfg.n_mb)
        for j in range(cfg.n_mb):
            rows = stream.next_batch()
            batch = X[np.ix_(rows, sel.input_features)]
            loss, grads = loss_and_grads(mlp, batch, y[rows])
            accumulate(sel, grads.weights[0], mlp.weights[0])
            if j == 0 and observer is not None and observer.on_first_batch is not None:
                observer.on_first_batch(sel, grads.weights[0])
            adam_step(mlp, grads, cfg.optimizer)
            window_losses[j] = loss
        scores = relative_change_scores(sel, mlp.weights[0])
        running = float(window_losses.mean())
        val_loss = None
        if val_rows is not None:
            val_loss = _partition_loss(mlp, X[val_rows], y[val_rows], sel.input_features, cfg.optimizer.batch_size)

        def hook(s, _loss=running if val_loss is None else val_loss):
            if flex_state is not None:
                new_ratio = flexmod.flex_update(flex_state, _loss, s)
                if new_ratio is not None:
                    s.c_ratio = new_ratio
                    s.k_c = flexmod.candidate_count(s.n_features, s.k, new_ratio, flexmod.min_candidates(s.k))
            upcoming = s.rotation_count + 1
            if upcoming in size_schedule:
                s.k_c = size_schedule[upcoming]

        changes, min_top = rotate(sel, mlp, scores, rng, flex_hook=hook)
        history.append(
            RotationRecord(
                rotation=sel.rotation_count,
                epoch=stream.completed_epochs,
                running_loss=running,
                val_loss=val_loss,
                min_top_entry=min_top,
                top_changes=changes,
                k_c=sel.k_c,
                c_ratio=sel.c_ratio,
                top_key=tuple(sel.top_features.tolist()),
                phase=phase,
            )
        )
        if observer is not None and observer.on_rotation is not None:
            observer.on_rotation(sel, mlp)
        if fixed_rotations is not None:
            if sel.rotation_count >= fixed_rotations:
                break
        elif should_stop(stop_cfg, history):
            break
        if cfg.max_rotations is not None and sel.rotation_count >= cfg.max_rotations:
            break
    return sel, mlp, history, stream.completed_epochs


def _final_selection(sel: SelectionState) -> list[int]:
    if sel.entry_mode == EntryMode.ENTRY_SCORE:
        top = _top_by_entry(sel.entry_scores, sel.input_features, sel.k)
    else:
        top = sel.top_features
    return sorted(int(f) for f in top)


def run_entryprune(
    dataset: Dataset,
    cfg: SelectionConfig,
    stopping: StoppingConfig,
    rng: SeededRng,
    split: Split | None = None,
    observer: RunObserver | None = None,
) -> SelectionResult:
    """Full selection run; with validation stopping, a fresh fixed-length
    retrain on the whole training partition follows the search phase."""
    t0 = time.perf_counter()
    cfg.validate(dataset.n_features)
    train_rows = split.train if split is not None else np.arange(dataset.n_samples)
    train_rows = np.asarray(train_rows)
    if train_rows.size == 0:
        raise ConfigError("empty training partition")

    flex_state = flexmod.FlexState() if cfg.flex else None
    if stopping.kind == StopKind.VALIDATION:
        if split is not None and split.val.size > 0:
            fit_rows, val_rows = train_rows, np.asarray(split.val)
            all_rows = np.concatenate([train_rows, split.val])
        else:
            fit_rows, val_rows = _carve_validation(train_rows, rng.fresh())
            all_rows = train_rows
        sel, mlp, hist1, epochs1 = _run_phase(
            dataset, cfg, stopping, rng.fresh(), fit_rows, val_rows,
            flex_state, {}, None, observer, "search",
        )
        stopped_at = sel.rotation_count
        schedule = []
        if cfg.flex:
            schedule = flexmod.flex_final_scaling(
                sel.n_features, sel.k, cfg.c_ratio, sel.c_ratio, stopped_at
            )
        plan = plan_final_retrain(stopped_at, schedule)
        sel, mlp, hist2, epochs2 = _run_phase(
            dataset, cfg, stopping, rng.fresh(), all_rows, None,
            None, dict(plan.size_schedule), plan.rotations, observer, "retrain",
        )
        history = hist1 + hist2
        total_epochs = epochs1 + epochs2
        retrained = True
    else:
        sel, mlp, history, total_epochs = _run_phase(
            dataset, cfg, stopping, rng.fresh(), train_rows, None,
            flex_state, {}, None, observer, "search",
        )
        stopped_at = sel.rotation_count
        retrained = False

    return SelectionResult(
        selected=_final_selection(sel),
        history=history,
        total_epochs=total_epochs,
        wall_time=time.perf_counter() - t0,
        entry_scores=sel.entry_scores.copy(),
        final_network=mlp,
        final_input_features=sel.input_features.copy(),
        stopped_at_rotation=stopped_at,
        retrained=retrained,
    )
