import sys
from pathlib import Path

import pytest

ROOT = Path(__file__).resolve().parent.parent
sys.path.insert(0, str(ROOT / "scripts"))

from entryprune.data import ToySpec, load_idx, make_split, make_toy, standardize, write_idx


@pytest.fixture(scope="session")
def toy_dataset():
    return make_toy(ToySpec(n_samples=2000, seed=0))


@pytest.fixture(scope="session")
def digits_files(tmp_path_factory):
    """Synthetic seven-segment digit images written out as an IDX pair."""
    from make_digits import make_digit_images

    images, labels = make_digit_images(10_000, seed=11)
    out = tmp_path_factory.mktemp("digits")
    paths = {
        "images": out / "digits-images-idx3-ubyte",
        "labels": out / "digits-labels-idx1-ubyte",
    }
    write_idx(images, labels, paths["images"], paths["labels"])
    return paths


@pytest.fixture(scope="session")
def digits_dataset(digits_files):
    return load_idx(digits_files["images"], digits_files["labels"])


@pytest.fixture(scope="session")
def digits_split(digits_dataset):
    split = make_split(digits_dataset.n_samples, (0.8, 0.0, 0.2), seed=0)
    return standardize(digits_dataset, split), split
