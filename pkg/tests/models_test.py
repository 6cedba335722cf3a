import numpy as np
import pytest
import torch

from src.models import GRUCell, LSTMCell, TkaeArch, TkaeModel, cell_step, reverse_padded
from src.numeric import Rng
from src.utils import ConfigError, DataError, to_torch


def _zero(module):
    with torch.no_grad():
        for p in module.parameters():
            p.zero_()
    return module


def _sigmoid(x):
    return 1.0 / (1.0 + np.exp(-x))


def test_zero_gru_keeps_zero_state():
    cell = _zero(GRUCell(3, 4))
    (h,) = cell_step(cell, torch.ones(2, 3), cell.init_state(torch.zeros(2, 4)))
    assert torch.equal(h, torch.zeros(2, 4))


def test_zero_lstm_keeps_zero_state():
    cell = _zero(LSTMCell(3, 4))
    h, c = cell_step(cell, torch.ones(2, 3), cell.init_state(torch.zeros(2, 4)))
    assert torch.equal(h, torch.zeros(2, 4))
    assert torch.equal(c, torch.zeros(2, 4))


def test_cell_step_shape_mismatch():
    cell = GRUCell(3, 4)
    with pytest.raises(DataError):
        cell_step(cell, torch.ones(1, 2), cell.init_state(torch.zeros(1, 4)))


def test_gru_step_matches_gate_by_gate_oracle():
    cell = GRUCell(2, 3)
    cell.reset_parameters(Rng(4))
    rng = Rng(5)
    x, h = rng.normal(size=2), rng.normal(size=3)
    wx, bx = cell.x2h.weight.detach().numpy(), cell.x2h.bias.detach().numpy()
    wh, bh = cell.h2h.weight.detach().numpy(), cell.h2h.bias.detach().numpy()
    expected = np.zeros(3)
    for j in range(3):
        gx = [wx[k * 3 + j] @ x + bx[k * 3 + j] for k in range(3)]
        gh = [wh[k * 3 + j] @ h + bh[k * 3 + j] for k in range(3)]
        reset = _sigmoid(gx[0] + gh[0])
        update = _sigmoid(gx[1] + gh[1])
        candidate = np.tanh(gx[2] + reset * gh[2])
        expected[j] = (1.0 - update) * candidate + update * h[j]
    (out,) = cell_step(cell, to_torch(x[None]), (to_torch(h[None]),))
    assert np.allclose(out.detach().numpy()[0], expected, atol=1e-12)


def test_lstm_forget_bias_initialized_to_one():
    cell = LSTMCell(2, 3)
    cell.reset_parameters(Rng(0))
    assert torch.equal(cell.x2h.bias[3:6], torch.ones(3))
    assert torch.equal(cell.h2h.bias[3:6], torch.zeros(3))


def test_reverse_padded_keeps_padding():
    x = torch.arange(8.0).reshape(2, 4, 1)
    out = reverse_padded(x, [2, 4])
    assert out[0, :, 0].tolist() == [1.0, 0.0, 2.0, 3.0]
    assert out[1, :, 0].tolist() == [7.0, 6.0, 5.0, 4.0]


@pytest.mark.parametrize('cell', ['gru', 'lstm'])
def test_encode_ignores_padding(cell):
    model = TkaeModel(TkaeArch(2, 3, n_layers=2, cell=cell), Rng(1))
    x = to_torch(Rng(2).normal(size=(1, 4, 2)))
    padded = torch.cat([x, 100.0 * torch.ones(1, 3, 2)], dim=1)
    with torch.no_grad():
        assert torch.allclose(model.encode(x, [4]), model.encode(padded, [4]), atol=1e-14)


def test_encode_fixed_size_for_any_length(tiny_tkae):
    x = to_torch(Rng(3).normal(size=(2, 7, 2)))
    z = tiny_tkae.encode(x, [3, 7])
    assert z.shape == (2, 3)
    assert torch.all(z.abs() <= 1.0)
    with pytest.raises(DataError):
        tiny_tkae.encode(torch.zeros(1, 3, 4), [3])


def test_unidirectional_encoder_has_no_backward_stack():
    model = TkaeModel(TkaeArch(2, 3, bidirectional=False), Rng(0))
    assert model.encoder_bw is None
    h_f, h_b = model.encoder_states(torch.zeros(1, 2, 2), [2])
    assert h_b is None and h_f.shape == (1, 3)


def test_decode_generative_mode_ignores_teacher(tiny_tkae):
    z = to_torch(Rng(0).normal(size=(1, 3)))
    teacher = to_torch(Rng(1).normal(size=(1, 5, 2)))
    with torch.no_grad():
        free = tiny_tkae.decode(z, 5)
        assert torch.equal(free, tiny_tkae.decode(z, 5, 1.0, teacher))
        assert torch.equal(free, tiny_tkae.decode(z, 5))


def test_decode_teacher_forcing_uses_previous_true_values(tiny_tkae):
    z = to_torch(Rng(0).normal(size=(1, 3)))
    teacher = to_torch(Rng(1).normal(size=(1, 5, 2)))
    other = teacher.clone()
    other[0, 4] += 10.0
    with torch.no_grad():
        a = tiny_tkae.decode(z, 5, 0.0, teacher)
        assert torch.equal(a, tiny_tkae.decode(z, 5, 0.0, other))
        other[0, 1] += 10.0
        b = tiny_tkae.decode(z, 5, 0.0, other)
    assert torch.equal(a[:, :2], b[:, :2])
    assert not torch.allclose(a[:, 2], b[:, 2])


def test_decode_errors(tiny_tkae):
    z = torch.zeros(1, 3)
    with pytest.raises(ConfigError):
        tiny_tkae.decode(z, 3, 0.5)
    with pytest.raises(ConfigError):
        tiny_tkae.decode(z, 3, 0.5, torch.zeros(1, 3, 2))
    with pytest.raises(DataError):
        tiny_tkae.decode(z, 0)


def test_single_step_decode_matches_hand_computation(tiny_tkae):
    z = to_torch(Rng(7).normal(size=(1, 3)))
    cell = tiny_tkae.decoder[0]
    with torch.no_grad():
        gates = cell.x2h.bias + cell.h2h(z)
        i, f, g, o = gates.chunk(4, -1)
        c = torch.sigmoid(i) * torch.tanh(g)
        expected = tiny_tkae.output(torch.sigmoid(o) * torch.tanh(c))
        out = tiny_tkae.decode(z, 1)
    assert out.shape == (1, 1, 2)
    assert torch.allclose(out[:, 0], expected, atol=1e-12)


def test_arch_validation():
    with pytest.raises(ConfigError):
        TkaeArch(2, 3, cell='rnn')
    with pytest.raises(ConfigError):
        TkaeArch(2, 0)


def test_same_rng_same_weights():
    a = TkaeModel(TkaeArch(2, 3), Rng(9))
    b = TkaeModel(TkaeArch(2, 3), Rng(9))
    for (_, p), (_, q) in zip(a.named_parameters(), b.named_parameters()):
        assert torch.equal(p, q)
