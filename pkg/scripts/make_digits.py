"""Generate a seven-segment digit image set (28x28, 10 classes) as IDX files.

Glyphs are drawn from seven-segment patterns with per-image position
jitter, intensity variation and background noise, so pixel relevance is
concentrated where segments live and most of the frame is uninformative.

Usage: python scripts/make_digits.py --n 10000 --seed 0 --out data/
"""
from __future__ import annotations

import argparse
from pathlib import Path

import numpy as np

from entryprune.data import write_idx

FRAME = 28

# segment boxes (r0, r1, c0, c1) inside the 28x28 frame, half-open
SEGMENTS = {
    "t": (4, 7, 8, 20),
    "m": (13, 16, 8, 20),
    "b": (22, 25, 8, 20),
    "tl": (4, 16, 6, 9),
    "tr": (4, 16, 19, 22),
    "bl": (13, 25, 6, 9),
    "br": (13, 25, 19, 22),
}

DIGIT_SEGMENTS = {
    0: "t tl tr bl br b",
    1: "tr br",
    2: "t tr m bl b",
    3: "t tr m br b",
    4: "tl tr m br",
    5: "t tl m br b",
    6: "t tl m bl br b",
    7: "t tr br",
    8: "t tl tr m bl br b",
    9: "t tl tr m br b",
}


def render_digit(digit: int, gen: np.random.Generator, jitter: int = 3, noise_sd: float = 0.12) -> np.ndarray:
    img = np.zeros((FRAME, FRAME))
    dy, dx = gen.integers(-jitter, jitter + 1, size=2)
    intensity = gen.uniform(0.6, 1.0)
    for name in DIGIT_SEGMENTS[digit].split():
        r0, r1, c0, c1 = SEGMENTS[name]
        img[max(0, r0 + dy) : max(0, r1 + dy), max(0, c0 + dx) : max(0, c1 + dx)] = intensity
    img += gen.normal(0.0, noise_sd, (FRAME, FRAME))
    np.clip(img, 0.0, 1.0, out=img)
    return img


def make_digit_images(n: int, seed: int, jitter: int = 3, noise_sd: float = 0.12):
    """Uint8 image stack (n, 28, 28) and labels, balanced classes in random order."""
    gen = np.random.default_rng(seed)
    labels = gen.integers(0, 10, size=n).astype(np.uint8)
    images = np.empty((n, FRAME, FRAME), dtype=np.uint8)
    for i, digit in enumerate(labels):
        images[i] = np.round(255.0 * render_digit(int(digit), gen, jitter, noise_sd)).astype(np.uint8)
    return images, labels


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--n", type=int, default=10000)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--jitter", type=int, default=3)
    ap.add_argument("--noise-sd", type=float, default=0.12)
    ap.add_argument("--out", default="data")
    args = ap.parse_args()
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    images, labels = make_digit_images(args.n, args.seed, args.jitter, args.noise_sd)
    write_idx(images, labels, out / "digits-images-idx3-ubyte", out / "digits-labels-idx1-ubyte")
    print(f"wrote {args.n} digit images to {out}/digits-images-idx3-ubyte")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
