import numpy as np
import pytest
import torch

from semaforge.data import PairedSample
from semaforge.synthetic import make_synthetic_pair

torch.set_num_threads(1)


@pytest.fixture(scope="session")
def toy_pairs() -> list[PairedSample]:
    pairs = []
    for i in range(2):
        smap, image = make_synthetic_pair(64, seed=100 + i)
        pairs.append(PairedSample(map=smap, image=image, source_id=f"toy/{i}"))
    return pairs


@pytest.fixture()
def rng() -> np.random.Generator:
    return np.random.default_rng(0)
