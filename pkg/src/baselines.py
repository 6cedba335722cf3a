"""Dense baselines on the padded-and-unrolled input: feed-forward AE, denoising AE, PCA glue."""
from dataclasses import replace

import numpy as np
import torch
from loguru import logger
from tqdm import tqdm

from src.get_data import Dataset, MtsSample, pad_and_unroll, unpad_and_reshape
from src.losses import loss_reconstruction, loss_total
from src.models import FfAeModel
from src.np_implementation.pca import PcaModel, pca_reconstruct
from src.numeric import AdamState, GradTape, Rng, adam_step, backward
from src.trainer import TrainConfig, TrainResult, clip_and_collect, pooled_mse
from src.utils import ConfigError, DataError, NumericError, progress_disabled, to_np, to_torch


def _fit_dense(model: FfAeModel, x, cfg: TrainConfig, corruption=0.0, mask=None):
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != model.arch.input_size:
        raise DataError(f'dense AE expects an N x {model.arch.input_size} matrix, got {x.shape}')
    if not np.isfinite(x).all():
        raise DataError('dense AE input contains missing placeholders; pad_and_unroll first')
    if not 0.0 <= corruption <= 1.0:
        raise ConfigError(f'corruption must lie in [0, 1], got {corruption}')
    x_t = to_torch(x)
    m_t = to_torch(np.ones_like(x) if mask is None else mask)
    params = dict(model.named_parameters())
    state = AdamState(params, lr=cfg.learning_rate)
    root = Rng(cfg.seed)
    history = []
    n = len(x)
    for epoch in tqdm(range(cfg.epochs), disable=progress_disabled()):
        order = root.derive('shuffle', epoch).permutation(n)
        noise = root.derive('corruption', epoch) if corruption > 0 else None
        total = 0.0
        for start in range(0, n, cfg.batch_size):
            idx = order[start:start + cfg.batch_size]
            target = x_t[idx]
            inp = target
            if noise is not None:
                inp = target * to_torch(noise.random(tuple(target.shape)) >= corruption)
            tape = GradTape.from_module(model)
            x_tilde, _ = model(inp)
            l_r = loss_reconstruction(target, x_tilde, m_t[idx], masked_mode=mask is not None)
            loss = loss_total(l_r, model, cfg.l2)
            if not torch.isfinite(loss).item():
                logger.error(f'non-finite dense AE loss at epoch {epoch}')
                raise NumericError(f'non-finite loss at epoch {epoch}')
            grads = clip_and_collect(params, backward(tape, loss), cfg.clip_norm)
            adam_step(state, params, grads)
            total += loss.item() * len(idx)
        history.append(total / n)
        logger.debug(f'epoch {epoch}: loss {history[-1]:.6f}')
    return TrainResult(model, history)


def ffae_train(model: FfAeModel, x, cfg: TrainConfig, mask=None):
    """Adam on MSE + lambda ||W||^2. With ``mask`` only observed cells enter the loss."""
    return _fit_dense(model, x, cfg, 0.0, mask)


def dae_train(model: FfAeModel, x, corruption, cfg: TrainConfig, mask=None):
    """Like ``ffae_train`` but every presented input has cells zeroed with probability
    ``corruption``; the loss compares against the clean input.
    """
    return _fit_dense(model, x, cfg, corruption, mask)


def dense_reconstruct(model: FfAeModel, x):
    with torch.no_grad():
        return to_np(model(to_torch(x))[0])


def dense_encode(model: FfAeModel, x):
    with torch.no_grad():
        return to_np(model.encode(to_torch(x)))


def _t_pad(input_size, n_variates):
    if input_size % n_variates:
        raise DataError(f'model input size {input_size} is not a multiple of {n_variates} variates')
    return input_size // n_variates


def unrolled_reconstructions(reconstruct_fn, input_size, ds):
    """Per-sample V x T_s reconstructions of a model working on padded-unrolled vectors."""
    x = pad_and_unroll(ds, _t_pad(input_size, ds.n_variates))
    return unpad_and_reshape(reconstruct_fn(x), ds.lengths, ds.n_variates)


def dense_reconstruction_mse(model: FfAeModel, ds: Dataset):
    recon = unrolled_reconstructions(lambda x: dense_reconstruct(model, x), model.arch.input_size, ds)
    return pooled_mse(list(ds), recon)


def pca_reconstruction_mse(model: PcaModel, ds: Dataset):
    recon = unrolled_reconstructions(lambda x: pca_reconstruct(model, x), model.input_size, ds)
    return pooled_mse(list(ds), recon)


def dae_impute_dataset(model: FfAeModel, ds: Dataset):
    """Missing cells take the DAE reconstruction of the zero-filled input; observed cells are kept."""
    recon = unrolled_reconstructions(lambda x: dense_reconstruct(model, x), model.arch.input_size, ds)
    out = [replace(s, values=np.where(s.mask, np.nan_to_num(s.values), r), imputation='dae')
           for s, r in zip(ds, recon)]
    return ds.with_samples(out)


def dae_impute(model: FfAeModel, sample: MtsSample):
    return dae_impute_dataset(model, Dataset([sample], 'impute'))[0]
