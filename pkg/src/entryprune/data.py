"""Datasets: CSV and IDX loaders, splits, standardization, toy generator, batching."""
from __future__ import annotations

import csv
import gzip
import struct
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, DataError
from .rng import SeededRng

IDX_IMAGES_MAGIC = 0x00000803
IDX_LABELS_MAGIC = 0x00000801


@dataclass
class Dataset:
    X: np.ndarray
    y: np.ndarray
    feature_names: list[str] | None = None
    image_shape: tuple[int, ...] | None = None

    def __post_init__(self):
        self.X = np.asarray(self.X, dtype=np.float64)
        self.y = np.asarray(self.y, dtype=np.int64)
        if self.X.ndim != 2 or self.y.ndim != 1 or self.X.shape[0] != self.y.shape[0]:
            raise ValueError(f"inconsistent dataset shapes X={self.X.shape} y={self.y.shape}")

    @property
    def n_samples(self) -> int:
        return self.X.shape[0]

    @property
    def n_features(self) -> int:
        return self.X.shape[1]

    @property
    def n_classes(self) -> int:
        return int(self.y.max()) + 1 if self.y.size else 0


@dataclass
class Split:
    train: np.ndarray
    val: np.ndarray
    test: np.ndarray


def _remap_labels(raw: list) -> np.ndarray:
    """Map raw label values onto contiguous ids 0..C-1, sorted by value."""
    try:
        values = [float(v) for v in raw]
    except (TypeError, ValueError):
        values = [str(v) for v in raw]
    classes = sorted(set(values))
    lut = {c: i for i, c in enumerate(classes)}
    return np.array([lut[v] for v in values], dtype=np.int64)


def load_csv(path, label_column: int | str = -1) -> Dataset:
    """Comma-separated numeric table with auto-detected header row.

    The first row counts as a header when any of its cells fails to parse
    as a number. Labels may be text or numeric and are remapped to 0..C-1
    in sorted order; row order is preserved.
    """
    try:
        with open(path, newline="", encoding="utf-8") as fh:
            rows = [r for r in csv.reader(fh) if r]
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc}") from exc
    if not rows:
        raise DataError(f"{path}: empty file")

    def numeric(cell: str) -> bool:
        try:
            float(cell)
            return True
        except ValueError:
            return False

    header: list[str] | None = None
    if not all(numeric(c) for c in rows[0]):
        header = [c.strip() for c in rows[0]]
        rows = rows[1:]
        if not rows:
            raise DataError(f"{path}: header but no data rows")

    width = len(rows[0])
    if isinstance(label_column, str):
        if header is None:
            raise ConfigError(f"label column {label_column!r} named but {path} has no header")
        try:
            label_idx = header.index(label_column)
        except ValueError:
            raise ConfigError(f"label column {label_column!r} not in header {header}") from None
    else:
        label_idx = label_column % width

    feats = []
    labels = []
    for r, row in enumerate(rows):
        if len(row) != width:
            raise DataError(f"{path}: row {r + 1} has {len(row)} cells, expected {width}")
        vals = []
        for c, cell in enumerate(row):
            if c == label_idx:
                labels.append(cell.strip())
                continue
            try:
                vals.append(float(cell))
            except ValueError:
                raise DataError(f"{path}: row {r + 1}, column {c + 1}: not a number: {cell!r}") from None
        feats.append(vals)

    names = None
    if header is not None:
        names = [h for i, h in enumerate(header) if i != label_idx]
    return Dataset(np.array(feats, dtype=np.float64), _remap_labels(labels), feature_names=names)


def save_csv(dataset: Dataset, path) -> None:
    """Write a dataset back out with full float precision (label column last)."""
    names = dataset.feature_names or [f"f{i}" for i in range(dataset.n_features)]
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow([*names, "label"])
        for row, label in zip(dataset.X, dataset.y):
            w.writerow([*(f"{v:.17g}" for v in row), int(label)])


def _read_binary(path) -> bytes:
    try:
        with open(path, "rb") as fh:
            head = fh.read(2)
            fh.seek(0)
            if head == b"\x1f\x8b":
                with gzip.open(fh) as gz:
                    return gz.read()
            return fh.read()
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc}") from exc


def load_idx(images_path, labels_path) -> Dataset:
    """Big-endian IDX image/label pair; pixels scaled to [0, 1], flattened row-major."""
    img = _read_binary(images_path)
    if len(img) < 16:
        raise DataError(f"{images_path}: truncated IDX header")
    magic, count, n_rows, n_cols = struct.unpack(">iiii", img[:16])
    if magic != IDX_IMAGES_MAGIC:
        raise DataError(f"{images_path}: bad magic 0x{magic:08x}, expected 0x{IDX_IMAGES_MAGIC:08x}")
    expected = count * n_rows * n_cols
    body = img[16:]
    if len(body) != expected:
        raise DataError(f"{images_path}: expected {expected} pixel bytes, found {len(body)}")
    pixels = np.frombuffer(body, dtype=np.uint8).reshape(count, n_rows * n_cols)

    lab = _read_binary(labels_path)
    if len(lab) < 8:
        raise DataError(f"{labels_path}: truncated IDX header")
    lmagic, lcount = struct.unpack(">ii", lab[:8])
    if lmagic != IDX_LABELS_MAGIC:
        raise DataError(f"{labels_path}: bad magic 0x{lmagic:08x}, expected 0x{IDX_LABELS_MAGIC:08x}")
    if lcount != count:
        raise DataError(f"label count {lcount} does not match image count {count}")
    lbody = lab[8:]
    if len(lbody) != lcount:
        raise DataError(f"{labels_path}: expected {lcount} label bytes, found {len(lbody)}")
    labels = np.frombuffer(lbody, dtype=np.uint8)

    return Dataset(
        pixels.astype(np.float64) / 255.0,
        _remap_labels(labels.tolist()),
        image_shape=(n_rows, n_cols),
    )


def write_idx(images: np.ndarray, labels: np.ndarray, images_path, labels_path) -> None:
    """Write a uint8 image stack (n, rows, cols) and its labels as an IDX pair."""
    images = np.asarray(images, dtype=np.uint8)
    labels = np.asarray(labels, dtype=np.uint8)
    n, n_rows, n_cols = images.shape
    with open(images_path, "wb") as fh:
        fh.write(struct.pack(">iiii", IDX_IMAGES_MAGIC, n, n_rows, n_cols))
        fh.write(images.tobytes())
    with open(labels_path, "wb") as fh:
        fh.write(struct.pack(">ii", IDX_LABELS_MAGIC, n))
        fh.write(labels.tobytes())


def make_split(n: int, ratios: tuple[float, float, float], seed: int) -> Split:
    """Seeded shuffle, then contiguous assignment into train/val/test."""
    if n < 1:
        raise ConfigError("cannot split an empty dataset")
    if any(r < 0 or r > 1 for r in ratios) or sum(ratios) > 1 + 1e-9:
        raise ConfigError(f"split ratios {ratios} must be in [0,1] and sum to at most 1")
    counts = [int(np.floor(r * n + 0.5)) for r in ratios]
    while sum(counts) > n:
        counts[int(np.argmax(counts))] -= 1
    for r, c, name in zip(ratios, counts, ("train", "val", "test")):
        if r > 0 and c == 0:
            raise ConfigError(f"{name} ratio {r} yields 0 rows for n={n}")
    perm = np.random.default_rng(seed).permutation(n)
    b1 = counts[0]
    b2 = b1 + counts[1]
    b3 = b2 + counts[2]
    return Split(train=perm[:b1], val=perm[b1:b2], test=perm[b2:b3])


def standardize(dataset: Dataset, split: Split) -> Dataset:
    """Z-score every feature using train-partition moments (population SD).

    Features with zero SD on the train partition map to all zeros.
    """
    train = dataset.X[split.train]
    if train.shape[0] == 0:
        raise ConfigError("standardize needs a non-empty train partition")
    mean = train.mean(axis=0)
    sd = train.std(axis=0)
    scale = np.where(sd > 0.0, 1.0 / np.where(sd > 0.0, sd, 1.0), 0.0)  # zero-SD features -> 0
    return Dataset(
        (dataset.X - mean) * scale,
        dataset.y.copy(),
        feature_names=dataset.feature_names,
        image_shape=dataset.image_shape,
    )


@dataclass(frozen=True)
class ToySpec:
    """Layout of the synthetic benchmark: linear block, XOR pair block, noise block."""

    n_samples: int
    n_linear: int = 6
    n_interaction: int = 6
    n_noise: int = 8
    linear_coefficient: float = 1.0
    noise_sd: float = 0.15
    seed: int = 0

    def __post_init__(self):
        if self.n_samples < 1:
            raise ConfigError("toy dataset needs at least one sample")
        if self.n_interaction % 2 != 0:
            raise ConfigError("interaction features come in pairs, count must be even")

    @property
    def n_features(self) -> int:
        return self.n_linear + self.n_interaction + self.n_noise


def toy_groups(spec: ToySpec) -> dict[str, np.ndarray]:
    a = spec.n_linear
    b = a + spec.n_interaction
    c = b + spec.n_noise
    return {
        "linear": np.arange(0, a),
        "interaction": np.arange(a, b),
        "noise": np.arange(b, c),
    }


def make_toy(spec: ToySpec) -> Dataset:
    """Binary-label benchmark with known informative structure.

    Linear features shift by +/-linear_coefficient with the label. Each
    interaction pair (a, b) has b = a * (2y-1) plus noise, so the product
    sign predicts y while either member alone is uncorrelated with it.
    Noise features are standard normal. Feature order: linear block,
    interaction pairs (a, b adjacent), noise block.
    """
    gen = SeededRng(spec.seed).stream("toy_gen")
    n = spec.n_samples
    y = gen.integers(0, 2, size=n).astype(np.int64)
    sign = (2 * y - 1).astype(np.float64)

    linear = spec.linear_coefficient * sign[:, None] + gen.normal(0.0, spec.noise_sd, (n, spec.n_linear))

    pairs = spec.n_interaction // 2
    cols = []
    names = [f"linear_{i}" for i in range(spec.n_linear)]
    for j in range(pairs):
        a = (2.0 * gen.integers(0, 2, size=n) - 1.0) + gen.normal(0.0, spec.noise_sd, n)
        b = a * sign + gen.normal(0.0, spec.noise_sd, n)
        cols.extend([a, b])
        names.extend([f"pair{j}_a", f"pair{j}_b"])
    interaction = np.column_stack(cols) if cols else np.empty((n, 0))

    noise = gen.normal(0.0, 1.0, (n, spec.n_noise))
    names.extend(f"noise_{i}" for i in range(spec.n_noise))

    return Dataset(np.hstack([linear, interaction, noise]), y, feature_names=names)


def epoch_batches(indices: np.ndarray, batch_size: int, gen: np.random.Generator) -> list[np.ndarray]:
    """One epoch of row-index batches: a fresh shuffle, then contiguous chunks.

    When the partition fits in one batch the whole epoch is a single full
    batch; otherwise the final partial chunk is kept.
    """
    indices = np.asarray(indices)
    n = indices.shape[0]
    if n == 0:
        raise ConfigError("cannot batch an empty partition")
    if batch_size < 1:
        raise ConfigError(f"batch_size must be positive, got {batch_size}")
    order = indices[gen.permutation(n)]
    if n <= batch_size:
        return [order]
    return [order[i : i + batch_size] for i in range(0, n, batch_size)]


class BatchStream:
    """Endless mini-batch source that reshuffles at every epoch boundary."""

    def __init__(self, indices: np.ndarray, batch_size: int, gen: np.random.Generator):
        self.indices = np.asarray(indices)
        self.batch_size = batch_size
        self.gen = gen
        self.completed_epochs = 0
        self._chunks: list[np.ndarray] = []
        self._pos = 0

    def next_batch(self) -> np.ndarray:
        if self._pos >= len(self._chunks):
            self._chunks = epoch_batches(self.indices, self.batch_size, self.gen)
            self._pos = 0
        batch = self._chunks[self._pos]
        self._pos += 1
        if self._pos == len(self._chunks):
            self.completed_epochs += 1
        return batch
