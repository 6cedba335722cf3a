import numpy as np
import pytest
import torch

from src.get_data import Dataset, MtsSample
from src.models import TkaeArch, TkaeModel
from src.numeric import Rng


def make_dataset(n=6, v=2, lengths=(5,), seed=0, labels=None, split='train'):
    rng = Rng(seed)
    samples = []
    for i in range(n):
        t = lengths[i % len(lengths)]
        label = None if labels is None else labels[i % len(labels)]
        samples.append(MtsSample.from_values(rng.normal(size=(v, t)), label=label, sample_id=f'{split}-{i:05d}'))
    return Dataset(samples, split)


@pytest.fixture
def toy_dataset():
    return make_dataset()


@pytest.fixture
def ragged_dataset():
    return make_dataset(n=5, v=2, lengths=(3, 6, 4))


@pytest.fixture
def tiny_tkae():
    return TkaeModel(TkaeArch(n_variates=2, code_size=3, n_layers=1, cell='lstm', bidirectional=True), Rng(1))


@pytest.fixture(autouse=True)
def _float64():
    torch.set_default_dtype(torch.float64)
    np.seterr(all='ignore')
    yield
