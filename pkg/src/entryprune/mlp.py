"""Dense feed-forward network trained by hand-rolled backprop and Adam.

The first layer is the only unusual part: its weight matrix has one row
per input-layer feature slot, rows get reinitialized to near-zero when a
new candidate feature takes the slot, and the raw first-layer gradient is
exposed to the caller because the selection loop accumulates it.
Everything is float64.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .rng import SeededRng

CANDIDATE_SCALE = 1e-8


@dataclass(frozen=True)
class MlpArchitecture:
    input_rows: int
    hidden_sizes: tuple[int, ...] = (100,)
    output_classes: int = 2

    def __post_init__(self):
        if self.input_rows < 1 or self.output_classes < 2 or not self.hidden_sizes:
            raise ValueError(f"bad architecture {self}")
        if any(h < 1 for h in self.hidden_sizes):
            raise ValueError(f"bad hidden sizes {self.hidden_sizes}")

    @property
    def layer_sizes(self) -> tuple[int, ...]:
        return (self.input_rows, *self.hidden_sizes, self.output_classes)


@dataclass(frozen=True)
class OptimizerConfig:
    learning_rate: float = 0.001
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    batch_size: int = 1024


@dataclass
class MlpState:
    arch: MlpArchitecture
    weights: list[np.ndarray]
    biases: list[np.ndarray]
    m_w: list[np.ndarray]
    v_w: list[np.ndarray]
    m_b: list[np.ndarray]
    v_b: list[np.ndarray]
    t: int = 0


@dataclass
class Grads:
    weights: list[np.ndarray]
    biases: list[np.ndarray]


def build_mlp(arch: MlpArchitecture, rng: SeededRng) -> MlpState:
    """He-uniform fan-in init for weights, zero biases, zeroed Adam state."""
    gen = rng.stream("weight_init")
    sizes = arch.layer_sizes
    weights, biases = [], []
    for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
        limit = np.sqrt(6.0 / fan_in)
        weights.append(gen.uniform(-limit, limit, size=(fan_in, fan_out)))
        biases.append(np.zeros(fan_out))
    def zeros(arrs):
        return [np.zeros_like(a) for a in arrs]

    return MlpState(arch, weights, biases, zeros(weights), zeros(weights), zeros(biases), zeros(biases))


def forward(state: MlpState, batch: np.ndarray) -> np.ndarray:
    """Logits for a batch, shape (rows, classes). Does not mutate state."""
    batch = np.asarray(batch, dtype=np.float64)
    if batch.ndim != 2 or batch.shape[1] != state.arch.input_rows:
        raise ValueError(f"batch shape {batch.shape} does not match input_rows {state.arch.input_rows}")
    act = batch
    last = len(state.weights) - 1
    for i, (w, b) in enumerate(zip(state.weights, state.biases)):
        act = act @ w + b
        if i < last:
            act = np.maximum(act, 0.0)
    return act


def _softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=1, keepdims=True)


def loss_and_grads(state: MlpState, batch: np.ndarray, labels: np.ndarray) -> tuple[float, Grads]:
    """Mean softmax cross-entropy and its exact gradients.

    grads.weights[0] is the raw first-layer gradient block the selection
    loop accumulates, before any optimizer transformation.
    """
    batch = np.asarray(batch, dtype=np.float64)
    labels = np.asarray(labels)
    n_classes = state.arch.output_classes
    if labels.ndim != 1 or labels.shape[0] != batch.shape[0]:
        raise ValueError(f"labels shape {labels.shape} does not match batch {batch.shape}")
    if not np.issubdtype(labels.dtype, np.integer):
        raise ValueError(f"labels must be integers, got dtype {labels.dtype}")
    if labels.size and (labels.min() < 0 or labels.max() >= n_classes):
        raise ValueError(f"labels outside [0, {n_classes})")

    # forward, keeping pre/post activations for the backward pass
    acts = [batch]
    pre = []
    act = batch
    last = len(state.weights) - 1
    for i, (w, b) in enumerate(zip(state.weights, state.biases)):
        z = act @ w + b
        pre.append(z)
        act = np.maximum(z, 0.0) if i < last else z
        acts.append(act)

    logits = acts[-1]
    rows = batch.shape[0]
    shifted = logits - logits.max(axis=1, keepdims=True)
    log_z = np.log(np.exp(shifted).sum(axis=1))
    loss = float(np.mean(log_z - shifted[np.arange(rows), labels]))

    dz = _softmax(logits)
    dz[np.arange(rows), labels] -= 1.0
    dz /= rows

    g_w = [np.empty(0)] * len(state.weights)
    g_b = [np.empty(0)] * len(state.biases)
    for i in range(last, -1, -1):
        g_w[i] = acts[i].T @ dz
        g_b[i] = dz.sum(axis=0)
        if i > 0:
            dz = dz @ state.weights[i].T
            dz[pre[i - 1] <= 0.0] = 0.0
    return loss, Grads(g_w, g_b)


def adam_step(state: MlpState, grads: Grads, cfg: OptimizerConfig) -> MlpState:
    """One bias-corrected Adam update, in place; returns the state."""
    state.t += 1
    b1t = 1.0 - cfg.beta1 ** state.t
    b2t = 1.0 - cfg.beta2 ** state.t
    for params, gs, ms, vs in (
        (state.weights, grads.weights, state.m_w, state.v_w),
        (state.biases, grads.biases, state.m_b, state.v_b),
    ):
        for p, g, m, v in zip(params, gs, ms, vs):
            m *= cfg.beta1
            m += (1.0 - cfg.beta1) * g
            v *= cfg.beta2
            v += (1.0 - cfg.beta2) * np.square(g)
            p -= cfg.learning_rate * (m / b1t) / (np.sqrt(v / b2t) + cfg.epsilon)
    return state


def reinit_rows(state: MlpState, rows, rng: SeededRng) -> MlpState:
    """Redraw the given first-layer rows from U(-1e-8, 1e-8), in place."""
    rows = np.asarray(rows, dtype=np.intp)
    if rows.size == 0:
        return state
    if rows.min() < 0 or rows.max() >= state.arch.input_rows:
        raise ValueError(f"row index out of range for input_rows {state.arch.input_rows}")
    gen = rng.stream("weight_init")
    state.weights[0][rows] = gen.uniform(
        -CANDIDATE_SCALE, CANDIDATE_SCALE, size=(rows.size, state.weights[0].shape[1])
    )
    return state


def reset_optimizer(state: MlpState) -> MlpState:
    """Zero all Adam moments and the step counter, in place."""
    for group in (state.m_w, state.v_w, state.m_b, state.v_b):
        for a in group:
            a.fill(0.0)
    state.t = 0
    return state
