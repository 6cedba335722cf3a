import numpy as np
import pytest
import torch

from src.get_data import Dataset, MtsSample
from src.losses import loss_reconstruction, loss_total
from src.models import TkaeArch, TkaeModel
from src.np_implementation.tck import KernelMatrix
from src.numeric import Rng, gradient_check
from src.trainer import (SequenceBatch, TrainConfig, decode, encode, encode_dataset, impute_with_decoder,
                         kernel_block_for, reconstruct, reconstruction_error, reconstruction_errors, train)
from src.utils import ConfigError, DataError, to_torch
from tests.conftest import make_dataset


def _model(v=2, d=3, cell='lstm', seed=1):
    return TkaeModel(TkaeArch(v, d, cell=cell), Rng(seed))


def _params(model):
    return {n: p.detach().clone() for n, p in model.named_parameters()}


def test_zero_learning_rate_leaves_parameters(toy_dataset):
    model = _model()
    before = _params(model)
    result = train(model, toy_dataset, None, TrainConfig(learning_rate=0.0, epochs=3, batch_size=4))
    assert len(result.history) == 3
    for n, p in model.named_parameters():
        assert torch.equal(p, before[n])


def test_memorizes_single_sample():
    ds = Dataset([MtsSample.from_values(np.sin(np.linspace(0.0, 3.0, 6))[None, :], sample_id='only')])
    result = train(_model(v=1, d=4), ds, None, TrainConfig(learning_rate=0.01, epochs=400, batch_size=1))
    assert result.history[-1] < 0.1 * result.history[0]
    assert reconstruction_error(result.model, ds[0]) < 0.1 * result.history[0]


def test_training_is_reproducible(ragged_dataset):
    kernel = KernelMatrix(np.eye(len(ragged_dataset)) + 0.5, ragged_dataset.ids)
    cfg = TrainConfig(alignment=0.1, l2=0.001, sampling_prob=0.5, epochs=3, batch_size=2, seed=4)
    a = train(_model(cell='gru'), ragged_dataset, kernel, cfg)
    b = train(_model(cell='gru'), ragged_dataset, kernel, cfg)
    assert a.history == b.history
    for (_, p), (_, q) in zip(a.model.named_parameters(), b.model.named_parameters()):
        assert torch.equal(p, q)


def test_alignment_without_kernel_raises(toy_dataset):
    with pytest.raises(ConfigError):
        train(_model(), toy_dataset, None, TrainConfig(alignment=0.5, epochs=1))


def test_training_requires_imputed_data():
    s = MtsSample.from_values([[1.0, np.nan, 2.0], [0.0, 1.0, 2.0]])
    with pytest.raises(DataError):
        train(_model(), Dataset([s]), None, TrainConfig(epochs=1))


def test_train_config_validation():
    with pytest.raises(ConfigError):
        TrainConfig(sampling_prob=1.5)
    with pytest.raises(ConfigError):
        TrainConfig(batch_size=0)


def test_kernel_block_follows_requested_order():
    kernel = KernelMatrix(np.arange(9.0).reshape(3, 3), ['a', 'b', 'c'])
    assert kernel_block_for(kernel, ['b', 'a']).tolist() == [[4.0, 3.0], [1.0, 0.0]]


def test_full_loss_gradient_matches_finite_differences():
    model = TkaeModel(TkaeArch(2, 3), Rng(3))
    ds = make_dataset(n=4, v=2, lengths=(5,), seed=6)
    batch = SequenceBatch.from_samples(ds.samples)
    a = Rng(8).normal(size=(4, 4))
    k = to_torch(a @ a.T)

    def forward():
        x_tilde, z = model(batch.x, batch.lengths)
        l_r = loss_reconstruction(batch.x, x_tilde, batch.mask, valid=batch.valid)
        return loss_total(l_r, model, 0.001, 0.1, z, k)

    assert gradient_check(forward, list(model.parameters())) < 1e-4


def test_encode_and_decode_shapes(ragged_dataset):
    model = _model()
    z = encode_dataset(model, ragged_dataset)
    assert z.shape == (len(ragged_dataset), 3)
    assert np.allclose(encode(model, ragged_dataset[1]), z[1])
    out = decode(model, z[0], 7)
    assert out.shape == (2, 7)
    assert np.array_equal(out, decode(model, z[0], 7))


def test_reconstruction_error_non_negative_and_order_sensitive(ragged_dataset):
    model = _model()
    errors = reconstruction_errors(model, ragged_dataset)
    assert errors.shape == (len(ragged_dataset),)
    assert (errors >= 0).all()
    s = ragged_dataset[1]
    flipped = MtsSample.from_values(s.values[:, ::-1], sample_id='flipped')
    assert reconstruction_error(model, s) != reconstruction_error(model, flipped)
    recon = reconstruct(model, ragged_dataset)
    assert [r.shape for r in recon] == [s.values.shape for s in ragged_dataset]


def test_impute_with_decoder_copies_observed_cells():
    model = _model()
    values = Rng(2).normal(size=(2, 6))
    full = MtsSample.from_values(values, sample_id='full')
    out = impute_with_decoder(model, full)
    assert np.array_equal(out.values, values)
    holed = values.copy()
    holed[0, 2] = holed[1, 4] = np.nan
    sample = MtsSample.from_values(holed, sample_id='holed')
    out = impute_with_decoder(model, sample)
    assert out.is_complete and out.imputation == 'decoder'
    assert np.array_equal(out.values[sample.mask], values[sample.mask])
    expected = reconstruct(model, [MtsSample.from_values(np.nan_to_num(holed))])[0]
    assert out.values[0, 2] == pytest.approx(expected[0, 2])
    assert out.values[1, 4] == pytest.approx(expected[1, 4])
