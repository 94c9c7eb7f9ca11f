"""Downstream evaluation: KNN and linear probes, overlap stability, probes."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .data import Dataset, toy_groups, ToySpec
from .errors import ConfigError
from .mlp import forward
from .rng import SeededRng
from .selector import RunObserver, SelectionConfig, SelectionResult, run_entryprune
from .stopping import StoppingConfig


@dataclass(frozen=True)
class FeatureSet:
    """An immutable, sorted set of selected feature indices."""

    indices: tuple[int, ...]
    method: str = ""
    seed: int | None = None

    def __post_init__(self):
        idx = tuple(sorted(int(i) for i in self.indices))
        if len(set(idx)) != len(idx):
            raise ConfigError("duplicate feature indices")
        if idx and idx[0] < 0:
            raise ConfigError("negative feature index")
        object.__setattr__(self, "indices", idx)

    @property
    def k(self) -> int:
        return len(self.indices)


@dataclass
class EvalReport:
    learner: str
    n_features: int
    runs: list[float]
    extras: dict = field(default_factory=dict)

    @property
    def mean(self) -> float:
        return float(np.mean(self.runs))

    @property
    def sd(self) -> float:
        return float(np.std(self.runs))


def _select_columns(X: np.ndarray, fs: FeatureSet) -> np.ndarray:
    if fs.k == 0:
        raise ConfigError("empty feature set")
    if fs.indices[-1] >= X.shape[1]:
        raise ConfigError(f"feature index {fs.indices[-1]} out of range for {X.shape[1]} columns")
    return X[:, list(fs.indices)]


def knn_accuracy(train, test, fs: FeatureSet, k: int = 3) -> EvalReport:
    """Majority-vote KNN on the selected columns; Euclidean distance.

    Vote ties resolve to the smallest class id. Equidistant neighbours
    rank by training-row order (stable sort).
    """
    X_tr, y_tr = train
    X_te, y_te = test
    if k < 1 or k > X_tr.shape[0]:
        raise ConfigError(f"k={k} outside [1, {X_tr.shape[0]}]")
    A = _select_columns(np.asarray(X_tr, dtype=np.float64), fs)
    B = _select_columns(np.asarray(X_te, dtype=np.float64), fs)
    y_tr = np.asarray(y_tr)
    n_classes = int(y_tr.max()) + 1
    sq_a = np.einsum("ij,ij->i", A, A)
    correct = 0
    for start in range(0, B.shape[0], 256):
        chunk = B[start : start + 256]
        d2 = sq_a[None, :] - 2.0 * (chunk @ A.T)
        d2 += np.einsum("ij,ij->i", chunk, chunk)[:, None]
        nn = np.argsort(d2, axis=1, kind="stable")[:, :k]
        votes = y_tr[nn]
        for i, row in enumerate(votes):
            pred = int(np.argmax(np.bincount(row, minlength=n_classes)))
            correct += pred == int(y_te[start + i])
    acc = correct / B.shape[0]
    return EvalReport("knn", fs.k, [acc], extras={"k": k})


def linear_classifier_accuracy(
    train, test, fs: FeatureSet, epochs: int = 500, lr: float = 0.1, l2: float = 1e-4
) -> EvalReport:
    """One-vs-rest linear classifier, squared hinge loss + L2, full-batch GD.

    Prediction ties resolve to the smallest class id. The report carries
    the final objective value so non-convergent settings stay diagnosable.
    """
    X_tr, y_tr = train
    X_te, y_te = test
    A = _select_columns(np.asarray(X_tr, dtype=np.float64), fs)
    B = _select_columns(np.asarray(X_te, dtype=np.float64), fs)
    y_tr = np.asarray(y_tr)
    n, d = A.shape
    n_classes = int(y_tr.max()) + 1
    Y = -np.ones((n, n_classes))
    Y[np.arange(n), y_tr] = 1.0

    W = np.zeros((d, n_classes))
    b = np.zeros(n_classes)
    obj = np.inf
    for _ in range(epochs):
        margin = 1.0 - Y * (A @ W + b)
        active = np.maximum(margin, 0.0)
        obj = float(np.mean(np.square(active).sum(axis=1)) + l2 * np.square(W).sum())
        coef = Y * active
        W -= lr * (-(2.0 / n) * (A.T @ coef) + 2.0 * l2 * W)
        b -= lr * (-(2.0 / n) * coef.sum(axis=0))
    pred = np.argmax(B @ W + b, axis=1)
    acc = float(np.mean(pred == np.asarray(y_te)))
    return EvalReport("linear", fs.k, [acc], extras={"final_loss": obj})


def jaccard(a: FeatureSet, b: FeatureSet) -> float:
    """|intersection| / |union|; two empty sets count as identical (1.0)."""
    sa, sb = set(a.indices), set(b.indices)
    if not sa and not sb:
        return 1.0
    return len(sa & sb) / len(sa | sb)


def stability(feature_sets) -> float:
    """Mean Jaccard index over all unordered pairs of runs."""
    sets = list(feature_sets)
    if len(sets) < 2:
        raise ConfigError("stability needs at least two runs")
    vals = [jaccard(sets[i], sets[j]) for i in range(len(sets)) for j in range(i + 1, len(sets))]
    return float(np.mean(vals))


def random_baseline(n_features: int, k: int, seed: int, runs: int = 1) -> list[FeatureSet]:
    """Uniform random K-subsets, the floor any selector has to beat."""
    if not 0 < k < n_features:
        raise ConfigError(f"k must satisfy 0 < k < n_features={n_features}, got {k}")
    gen = np.random.default_rng(seed)
    return [
        FeatureSet(tuple(gen.choice(n_features, size=k, replace=False)), method="random", seed=seed)
        for _ in range(runs)
    ]


def network_accuracy(result: SelectionResult, X: np.ndarray, y: np.ndarray) -> float:
    """Accuracy of the final selection network itself on the given rows."""
    cols = result.final_input_features
    correct = 0
    for start in range(0, X.shape[0], 1024):
        chunk = X[start : start + 1024][:, cols]
        pred = np.argmax(forward(result.final_network, chunk), axis=1)
        correct += int(np.sum(pred == y[start : start + 1024]))
    return correct / X.shape[0]


@dataclass
class GroupStats:
    gradient_mean: float
    gradient_sd: float
    entry_mean: float
    entry_sd: float
    n_windows: int


@dataclass
class ProbeReport:
    groups: dict[str, GroupStats]
    per_feature_gradient: dict[int, list[float]]
    entry_scores: np.ndarray


def gradient_probe(
    dataset: Dataset,
    cfg: SelectionConfig,
    stopping: StoppingConfig,
    groups: dict[str, np.ndarray] | None = None,
) -> ProbeReport:
    """Record each candidate's first-batch gradient right after its reset.

    For every rotation window the maximum absolute first-layer gradient
    entry of each candidate row on the window's first mini-batch is
    logged, then aggregated per feature group alongside the final entry
    scores. Groups default to the standard toy layout.
    """
    if groups is None:
        if dataset.n_features != ToySpec(n_samples=1).n_features:
            raise ConfigError("feature groups required for non-toy layouts")
        groups = toy_groups(ToySpec(n_samples=dataset.n_samples))
    observations: dict[int, list[float]] = {}

    def on_first_batch(sel, g1):
        for row in sel.candidate_rows():
            f = int(sel.input_features[row])
            observations.setdefault(f, []).append(float(np.abs(g1[row]).max()))

    result = run_entryprune(
        dataset, cfg, stopping, SeededRng(cfg.seed),
        observer=RunObserver(on_first_batch=on_first_batch),
    )

    stats = {}
    for name, members in groups.items():
        pooled = np.array([v for f in members.tolist() for v in observations.get(f, [])])
        entries = result.entry_scores[members]
        entries = entries[np.isfinite(entries)]
        stats[name] = GroupStats(
            gradient_mean=float(pooled.mean()) if pooled.size else np.nan,
            gradient_sd=float(pooled.std()) if pooled.size else np.nan,
            entry_mean=float(np.mean(entries)) if entries.size else np.nan,
            entry_sd=float(np.std(entries)) if entries.size else np.nan,
            n_windows=int(pooled.size),
        )
    return ProbeReport(groups=stats, per_feature_gradient=observations, entry_scores=result.entry_scores)
