"""Benchmark selection quality on the synthetic digit image set.

Generates (or reuses) the IDX digit files, selects pixels with the
long profile, then compares held-out KNN accuracy for the selected
pixels, random subsets of the same size, and the full frame.

Usage: python scripts/digits_benchmark.py --k 50 --seeds 3
"""
from __future__ import annotations

import argparse
import time
from pathlib import Path

import numpy as np

from entryprune.data import load_idx, make_split, standardize, write_idx
from entryprune.evaluate import FeatureSet, knn_accuracy, random_baseline, stability
from entryprune.rng import SeededRng
from entryprune.selector import SelectionConfig, run_entryprune
from entryprune.stopping import StopKind, StoppingConfig
from make_digits import make_digit_images


def ensure_digits(out: Path, n: int, seed: int) -> tuple[Path, Path]:
    images_path = out / "digits-images-idx3-ubyte"
    labels_path = out / "digits-labels-idx1-ubyte"
    if not images_path.exists():
        out.mkdir(parents=True, exist_ok=True)
        images, labels = make_digit_images(n, seed=seed)
        write_idx(images, labels, images_path, labels_path)
    return images_path, labels_path


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--k", type=int, default=50)
    ap.add_argument("--n", type=int, default=10000)
    ap.add_argument("--seeds", type=int, default=3)
    ap.add_argument("--rotations", type=int, default=60)
    ap.add_argument("--data-dir", default="data")
    args = ap.parse_args()

    images_path, labels_path = ensure_digits(Path(args.data_dir), args.n, seed=11)
    dataset = load_idx(images_path, labels_path)
    split = make_split(dataset.n_samples, (0.8, 0.0, 0.2), seed=0)
    std = standardize(dataset, split)
    train = (std.X[split.train], std.y[split.train])
    test = (std.X[split.test], std.y[split.test])
    stopping = StoppingConfig(kind=StopKind.IDENT, ident_patience=10**6)

    picks, accs = [], []
    for seed in range(args.seeds):
        t0 = time.perf_counter()
        cfg = SelectionConfig(k=args.k, c_ratio=0.2, n_mb=100, seed=seed,
                              max_rotations=args.rotations)
        result = run_entryprune(std, cfg, stopping, SeededRng(seed), split=split)
        fs = FeatureSet(tuple(result.selected))
        acc = knn_accuracy(train, test, fs, k=3).runs[0]
        picks.append(fs)
        accs.append(acc)
        print(f"seed {seed}: knn(3) accuracy {acc:.4f} "
              f"({result.stopped_at_rotation} rotations, {time.perf_counter() - t0:.0f}s)")

    rand = [knn_accuracy(train, test, fs, k=3).runs[0]
            for fs in random_baseline(std.n_features, args.k, seed=1234, runs=args.seeds)]
    full = knn_accuracy(train, test, FeatureSet(tuple(range(std.n_features))), k=3).runs[0]

    print(f"selected-{args.k} mean  {np.mean(accs):.4f}")
    print(f"random-{args.k} mean    {np.mean(rand):.4f}")
    print(f"all-{std.n_features} features   {full:.4f}")
    if len(picks) > 1:
        print(f"selection stability (mean pairwise jaccard) {stability(picks):.3f}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
