import math
from dataclasses import dataclass

import torch
import torch.nn as nn
import torch.nn.functional as F
from loguru import logger

from src.numeric import Rng
from src.utils import ConfigError, DataError, get_nonlin, to_torch

DTYPE = torch.float64


def init_linear(layer: nn.Linear, rng: Rng):
    """Uniform weights and biases in [-s, s], s = 1 / sqrt(fan-in)."""
    s = 1.0 / math.sqrt(layer.in_features)
    with torch.no_grad():
        layer.weight.copy_(to_torch(rng.uniform(-s, s, size=tuple(layer.weight.shape))))
        if layer.bias is not None:
            layer.bias.copy_(to_torch(rng.uniform(-s, s, size=tuple(layer.bias.shape))))


class GRUCell(nn.Module):
    """GRU transition; state is the 1-tuple (h,).

    r = sig(W_ir x + W_hr h + b_r),  u = sig(W_iu x + W_hu h + b_u)
    n = tanh(W_in x + b_in + r * (W_hn h + b_hn)),  h' = (1 - u) * n + u * h
    """
    n_gates = 3

    def __init__(self, input_size, hidden_size):
        super().__init__()
        self.input_size = input_size
        self.hidden_size = hidden_size
        self.x2h = nn.Linear(input_size, self.n_gates * hidden_size, dtype=DTYPE)
        self.h2h = nn.Linear(hidden_size, self.n_gates * hidden_size, dtype=DTYPE)

    def reset_parameters(self, rng: Rng):
        init_linear(self.x2h, rng)
        init_linear(self.h2h, rng)

    def init_state(self, h0):
        return (h0,)

    def forward(self, x, state):
        h = state[0]
        i_r, i_u, i_n = self.x2h(x).chunk(3, -1)
        h_r, h_u, h_n = self.h2h(h).chunk(3, -1)
        reset = torch.sigmoid(i_r + h_r)
        update = torch.sigmoid(i_u + h_u)
        candidate = torch.tanh(i_n + reset * h_n)
        return ((1.0 - update) * candidate + update * h,)


class LSTMCell(nn.Module):
    """LSTM transition; state is (h, c) and gates are ordered input, forget, cell, output."""
    n_gates = 4

    def __init__(self, input_size, hidden_size):
        super().__init__()
        self.input_size = input_size
        self.hidden_size = hidden_size
        self.x2h = nn.Linear(input_size, self.n_gates * hidden_size, dtype=DTYPE)
        self.h2h = nn.Linear(hidden_size, self.n_gates * hidden_size, dtype=DTYPE)

    def reset_parameters(self, rng: Rng):
        init_linear(self.x2h, rng)
        init_linear(self.h2h, rng)
        with torch.no_grad():
            forget = slice(self.hidden_size, 2 * self.hidden_size)
            self.x2h.bias[forget] = 1.0
            self.h2h.bias[forget] = 0.0

    def init_state(self, h0):
        return h0, torch.zeros_like(h0)

    def forward(self, x, state):
        h, c = state
        gates = self.x2h(x) + self.h2h(h)
        i, f, g, o = gates.chunk(4, -1)
        c = torch.sigmoid(f) * c + torch.sigmoid(i) * torch.tanh(g)
        return torch.sigmoid(o) * torch.tanh(c), c


CELLS = {'gru': GRUCell, 'lstm': LSTMCell}


def cell_step(params: nn.Module, x_t, state):
    if x_t.shape[-1] != params.input_size or state[0].shape[-1] != params.hidden_size:
        raise DataError(f'cell expects input {params.input_size} / state {params.hidden_size}, '
                        f'got {x_t.shape[-1]} / {state[0].shape[-1]}')
    return params(x_t, state)


def run_stack(cells, x, lengths):
    """Final top-layer hidden state of a stacked RNN; each sample stops at its own length."""
    batch, n_steps, _ = x.shape
    lengths = torch.as_tensor(lengths)
    inp = x
    for cell in cells:
        state = cell.init_state(x.new_zeros(batch, cell.hidden_size))
        outs = []
        for t in range(n_steps):
            new = cell(inp[:, t], state)
            active = (t < lengths).unsqueeze(1)
            state = tuple(torch.where(active, n, o) for n, o in zip(new, state))
            outs.append(state[0])
        inp = torch.stack(outs, dim=1)
    return state[0]


def reverse_padded(x, lengths):
    """Reverse each sequence within its own length; padding stays in place."""
    n_steps = x.shape[1]
    steps = torch.arange(n_steps).unsqueeze(0)
    lengths = torch.as_tensor(lengths).unsqueeze(1)
    idx = torch.where(steps < lengths, lengths - 1 - steps, steps)
    return torch.gather(x, 1, idx.unsqueeze(2).expand_as(x))


@dataclass
class TkaeArch:
    n_variates: int
    code_size: int
    n_layers: int = 1
    cell: str = 'lstm'
    bidirectional: bool = True

    def __post_init__(self):
        if self.cell not in CELLS:
            raise ConfigError(f'unknown cell {self.cell!r}, expected one of {sorted(CELLS)}')
        if min(self.n_variates, self.code_size, self.n_layers) < 1:
            raise ConfigError('n_variates, code_size and n_layers must be positive')


class TkaeModel(nn.Module):
    """Recurrent autoencoder: stacked (bi)directional encoder, dense+tanh combine layer
    producing z, and a stacked generative decoder started from h_0 = z, x_0 = 0.
    """

    def __init__(self, arch: TkaeArch, rng: Rng = None):
        super().__init__()
        self.arch = arch
        cell = CELLS[arch.cell]
        v, d, m = arch.n_variates, arch.code_size, arch.n_layers
        self.encoder_fw = nn.ModuleList([cell(v if i == 0 else d, d) for i in range(m)])
        self.encoder_bw = nn.ModuleList([cell(v if i == 0 else d, d) for i in range(m)]) \
            if arch.bidirectional else None
        self.combine = nn.Linear((2 if arch.bidirectional else 1) * d, d, dtype=DTYPE)
        self.decoder = nn.ModuleList([cell(v if i == 0 else d, d) for i in range(m)])
        self.output = nn.Linear(d, v, dtype=DTYPE)
        self.reset_parameters(rng if rng is not None else Rng(0))
        logger.debug(f'TKAE {arch}: {sum(p.numel() for p in self.parameters())} parameters')

    def reset_parameters(self, rng: Rng):
        for c in self.recurrent_cells():
            c.reset_parameters(rng)
        init_linear(self.combine, rng)
        init_linear(self.output, rng)

    def recurrent_cells(self):
        cells = list(self.encoder_fw) + (list(self.encoder_bw) if self.encoder_bw is not None else [])
        return cells + list(self.decoder)

    def _check_input(self, x):
        if x.shape[-1] != self.arch.n_variates:
            raise DataError(f'model expects {self.arch.n_variates} variates, got {x.shape[-1]}')

    def encoder_states(self, x, lengths):
        """(h_T^f, h_T^b) of the top encoder layers; h_T^b is None when unidirectional."""
        self._check_input(x)
        h_f = run_stack(self.encoder_fw, x, lengths)
        if self.encoder_bw is None:
            return h_f, None
        return h_f, run_stack(self.encoder_bw, reverse_padded(x, lengths), lengths)

    def encode(self, x, lengths):
        h_f, h_b = self.encoder_states(x, lengths)
        h = h_f if h_b is None else torch.cat([h_f, h_b], dim=-1)
        return torch.tanh(self.combine(h))

    def decode(self, z, n_steps, sampling_prob=1.0, teacher=None, rng: Rng = None):
        """(B, n_steps, V) outputs. The input at step t > 0 is the previous output with
        probability ``sampling_prob`` (one coin per step) and the teacher's x_{t-1} otherwise.
        """
        if n_steps < 1:
            raise DataError('decoder needs at least one step')
        if sampling_prob < 1.0 and teacher is None:
            raise ConfigError('scheduled sampling with p_s < 1 needs a teacher sequence')
        if 0.0 < sampling_prob < 1.0 and rng is None:
            raise ConfigError('scheduled sampling with 0 < p_s < 1 needs an rng')
        states = [c.init_state(z) for c in self.decoder]
        prev = z.new_zeros(z.shape[0], self.arch.n_variates)
        outputs = []
        for t in range(n_steps):
            if t == 0 or sampling_prob >= 1.0:
                inp = prev
            elif sampling_prob <= 0.0:
                inp = teacher[:, t - 1]
            else:
                inp = prev if rng.random() < sampling_prob else teacher[:, t - 1]
            for m, c in enumerate(self.decoder):
                states[m] = c(inp, states[m])
                inp = states[m][0]
            prev = self.output(inp)
            outputs.append(prev)
        return torch.stack(outputs, dim=1)

    def forward(self, x, lengths, sampling_prob=1.0, rng: Rng = None):
        z = self.encode(x, lengths)
        return self.decode(z, x.shape[1], sampling_prob, x, rng), z


@dataclass
class FfAeArch:
    input_size: int
    code_size: int
    hidden_size: int = 30
    encoder_activation: str = 'tanh'
    decoder_activation: str = 'sigmoid'
    tied: bool = False


class FfAeModel(nn.Module):
    """Dense autoencoder {D_x, H, D_z, H, D_x} with a linear output layer.

    ``decoder_activation`` is applied to the decoder's hidden layer. With ``tied`` the decoder
    uses the transposed encoder matrices and only owns its biases.
    """

    def __init__(self, arch: FfAeArch, rng: Rng = None):
        super().__init__()
        self.arch = arch
        self.enc_act = get_nonlin(arch.encoder_activation)
        self.dec_act = get_nonlin(arch.decoder_activation)
        self.enc1 = nn.Linear(arch.input_size, arch.hidden_size, dtype=DTYPE)
        self.enc2 = nn.Linear(arch.hidden_size, arch.code_size, dtype=DTYPE)
        if arch.tied:
            self.dec1_bias = nn.Parameter(torch.zeros(arch.hidden_size, dtype=DTYPE))
            self.dec2_bias = nn.Parameter(torch.zeros(arch.input_size, dtype=DTYPE))
        else:
            self.dec1 = nn.Linear(arch.code_size, arch.hidden_size, dtype=DTYPE)
            self.dec2 = nn.Linear(arch.hidden_size, arch.input_size, dtype=DTYPE)
        self.reset_parameters(rng if rng is not None else Rng(0))

    def reset_parameters(self, rng: Rng):
        init_linear(self.enc1, rng)
        init_linear(self.enc2, rng)
        if not self.arch.tied:
            init_linear(self.dec1, rng)
            init_linear(self.dec2, rng)

    def decoder_weights(self):
        if self.arch.tied:
            return self.enc2.weight.t(), self.enc1.weight.t()
        return self.dec1.weight, self.dec2.weight

    def encode(self, x):
        if x.shape[-1] != self.arch.input_size:
            raise DataError(f'model expects {self.arch.input_size} inputs, got {x.shape[-1]}')
        return self.enc_act(self.enc2(self.enc_act(self.enc1(x))))

    def decode(self, z):
        w1, w2 = self.decoder_weights()
        b1 = self.dec1_bias if self.arch.tied else self.dec1.bias
        b2 = self.dec2_bias if self.arch.tied else self.dec2.bias
        return F.linear(self.dec_act(F.linear(z, w1, b1)), w2, b2)

    def forward(self, x):
        z = self.encode(x)
        return self.decode(z), z
