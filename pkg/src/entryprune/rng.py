"""Seeded random state with named, independent substreams."""
from __future__ import annotations

import numpy as np

STREAM_NAMES = ("weight_init", "batch_shuffle", "candidate_draw", "toy_gen", "val_split")


class SeededRng:
    """Bundle of independent generators derived from one 64-bit seed.

    Every source of randomness in a run pulls from one of the named
    substreams, so the same seed reproduces the same run regardless of
    how work is interleaved across the other streams.
    """

    def __init__(self, seed: int):
        self.seed = int(seed)
        children = np.random.SeedSequence(self.seed).spawn(len(STREAM_NAMES))
        self._streams = {
            name: np.random.default_rng(child) for name, child in zip(STREAM_NAMES, children)
        }

    def stream(self, name: str) -> np.random.Generator:
        try:
            return self._streams[name]
        except KeyError:
            raise KeyError(f"unknown rng stream {name!r}, expected one of {STREAM_NAMES}") from None

    def fresh(self) -> "SeededRng":
        """A new SeededRng restarted from the same seed (all streams rewound)."""
        return SeededRng(self.seed)
