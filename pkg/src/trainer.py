from dataclasses import dataclass, field, replace
from typing import List, Optional

import numpy as np
import torch
from loguru import logger
from tqdm import tqdm

from src.get_data import Dataset, MtsSample, to_batch
from src.losses import loss_reconstruction, loss_total
from src.models import TkaeModel
from src.np_implementation.tck import KernelMatrix
from src.numeric import AdamState, GradTape, Rng, adam_step, backward
from src.utils import ConfigError, DataError, NumericError, progress_disabled, to_np, to_torch


@dataclass
class TrainConfig:
    l2: float = 0.0
    alignment: float = 0.0
    sampling_prob: float = 1.0
    learning_rate: float = 1e-3
    batch_size: int = 32
    epochs: int = 500
    seed: int = 0
    masked_loss: bool = False
    clip_norm: float = 5.0

    def __post_init__(self):
        if not 0.0 <= self.sampling_prob <= 1.0:
            raise ConfigError(f'sampling_prob must lie in [0, 1], got {self.sampling_prob}')
        if self.l2 < 0 or self.alignment < 0:
            raise ConfigError('l2 and alignment weights must be non-negative')
        if self.learning_rate < 0 or self.batch_size < 1 or self.epochs < 0 or self.clip_norm <= 0:
            raise ConfigError('invalid learning rate, batch size, epochs or clip norm')


@dataclass
class TrainResult:
    model: torch.nn.Module
    history: List[float] = field(default_factory=list)


@dataclass
class SequenceBatch:
    x: torch.Tensor
    mask: torch.Tensor
    valid: torch.Tensor
    lengths: torch.Tensor

    @classmethod
    def from_samples(cls, samples):
        values, mask, lengths = to_batch(samples)
        steps = np.arange(values.shape[1])[None, :, None]
        valid = np.broadcast_to(steps < lengths[:, None, None], values.shape)
        return cls(to_torch(values), to_torch(mask), to_torch(valid), torch.as_tensor(lengths))


def _require_complete(samples):
    for s in samples:
        if not s.is_complete:
            logger.error(f'sample {s.sample_id!r} still has missing placeholders')
            raise DataError(f'sample {s.sample_id!r} must be imputed before it enters a network')


def kernel_block_for(kernel: KernelMatrix, ids):
    """Rows/columns of the training kernel for ``ids``, in that order."""
    return to_torch(kernel.block(kernel.index_of(ids)))


def clip_and_collect(params, grads, clip_norm):
    for name, p in params.items():
        p.grad = grads[name]
    torch.nn.utils.clip_grad_norm_(list(params.values()), clip_norm)
    return {name: p.grad for name, p in params.items()}


def train(model: TkaeModel, ds: Dataset, kernel: Optional[KernelMatrix], cfg: TrainConfig):
    """Mini-batch Adam on L_r + lambda L_2 + alpha L_k; returns the model and per-epoch losses."""
    if cfg.alignment > 0 and kernel is None:
        logger.error('kernel alignment requested without a kernel matrix')
        raise ConfigError('alignment > 0 requires a kernel matrix indexed by the training ids')
    _require_complete(ds)
    k_full = kernel_block_for(kernel, ds.ids) if cfg.alignment > 0 else None
    params = dict(model.named_parameters())
    state = AdamState(params, lr=cfg.learning_rate)
    root = Rng(cfg.seed)
    history = []
    n = len(ds)
    for epoch in tqdm(range(cfg.epochs), disable=progress_disabled()):
        order = root.derive('shuffle', epoch).permutation(n)
        coins = root.derive('sampling', epoch)
        total = 0.0
        for start in range(0, n, cfg.batch_size):
            idx = order[start:start + cfg.batch_size]
            batch = SequenceBatch.from_samples([ds[i] for i in idx])
            tape = GradTape.from_module(model)
            x_tilde, z = model(batch.x, batch.lengths, cfg.sampling_prob, coins)
            l_r = loss_reconstruction(batch.x, x_tilde, batch.mask, cfg.masked_loss, batch.valid)
            k_block = k_full[np.ix_(idx, idx)] if k_full is not None else None
            loss = loss_total(l_r, model, cfg.l2, cfg.alignment, z, k_block)
            if not torch.isfinite(loss).item():
                logger.error(f'non-finite loss at epoch {epoch}, batch starting at {start}')
                raise NumericError(f'non-finite loss at epoch {epoch}')
            grads = clip_and_collect(params, backward(tape, loss), cfg.clip_norm)
            adam_step(state, params, grads)
            total += loss.item() * len(idx)
        history.append(total / n)
        logger.debug(f'epoch {epoch}: loss {history[-1]:.6f}')
    if history:
        logger.info(f'trained {cfg.epochs} epochs, final loss {history[-1]:.6f}')
    return TrainResult(model, history)


def _batches(ds, batch_size):
    for start in range(0, len(ds), batch_size):
        yield ds.samples[start:start + batch_size]


def encode_dataset(model: TkaeModel, ds, batch_size=256):
    """N x D_z representation matrix Z, rows in sample order."""
    samples = list(ds)
    _require_complete(samples)
    out = []
    with torch.no_grad():
        for chunk in _batches(Dataset(samples, 'encode'), batch_size):
            batch = SequenceBatch.from_samples(chunk)
            out.append(to_np(model.encode(batch.x, batch.lengths)))
    return np.concatenate(out)


def encode(model: TkaeModel, sample: MtsSample):
    return encode_dataset(model, [sample])[0]


def decode(model: TkaeModel, z, length, sampling_prob=1.0, teacher: MtsSample = None, rng: Rng = None):
    """V x length reconstruction from one representation vector."""
    teacher_x = None
    if teacher is not None:
        _require_complete([teacher])
        teacher_x = SequenceBatch.from_samples([teacher]).x
    with torch.no_grad():
        out = model.decode(to_torch(np.atleast_2d(z)), length, sampling_prob, teacher_x, rng)
    return to_np(out)[0].T


def reconstruct(model: TkaeModel, ds, batch_size=256):
    """Generative-mode (p_s = 1) reconstructions, one V x T_s matrix per sample."""
    samples = list(ds)
    _require_complete(samples)
    out = []
    with torch.no_grad():
        for chunk in _batches(Dataset(samples, 'reconstruct'), batch_size):
            batch = SequenceBatch.from_samples(chunk)
            x_tilde, _ = model(batch.x, batch.lengths)
            out.extend(to_np(x_tilde[i, :s.length]).T for i, s in enumerate(chunk))
    return out


def reconstruction_errors(model: TkaeModel, ds):
    """Per-sample MSE between each sample and its reconstruction."""
    return np.array([np.mean((s.values - r) ** 2) for s, r in zip(ds, reconstruct(model, ds))])


def reconstruction_error(model: TkaeModel, sample: MtsSample):
    return float(reconstruction_errors(model, [sample])[0])


def pooled_mse(samples, reconstructions):
    """MSE over every cell of every sample (cells weighted equally)."""
    sq = sum(float(np.sum((s.values - r) ** 2)) for s, r in zip(samples, reconstructions))
    return sq / sum(s.values.size for s in samples)


def reconstruction_mse(model: TkaeModel, ds):
    return pooled_mse(list(ds), reconstruct(model, ds))


def _zero_filled(sample):
    return replace(sample, values=np.where(sample.mask, sample.values, np.nan_to_num(sample.values)))


def impute_with_decoder(model: TkaeModel, sample: MtsSample):
    """Replace unobserved cells by the decoder output; observed cells are copied unchanged."""
    return impute_dataset_with_decoder(model, [sample])[0]


def impute_dataset_with_decoder(model: TkaeModel, ds):
    samples = [_zero_filled(s) for s in ds]
    recon = reconstruct(model, samples)
    out = [replace(s, values=np.where(s.mask, s.values, r), imputation='decoder')
           for s, r in zip(samples, recon)]
    return ds.with_samples(out) if isinstance(ds, Dataset) else out
