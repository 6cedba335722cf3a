"""Steps shared by the CLI subcommands and the study scripts.

The dataset depends on ``cfg.seed`` only; model initialization, shuffling and sampling use
the per-run seed, so runs over the same data differ only in their training randomness.
"""
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Optional

import numpy as np
from loguru import logger

from src.baselines import (dae_impute_dataset, dae_train, dense_encode, dense_reconstruct, ffae_train,
                           unrolled_reconstructions)
from src.config import ExperimentConfig
from src.evaluation import accuracy, knn_classify
from src.get_data import (Dataset, InjectionRecord, impute_simple, inject_missing, load_split_dir,
                          pad_and_unroll, standardize_fit_transform, variate_means)
from src.models import FfAeArch, FfAeModel, TkaeArch, TkaeModel
from src.np_implementation.data import (ClassMixtureConfig, OdeGenConfig, SineGenConfig,
                                        gen_class_mixture, gen_ode, gen_sines)
from src.np_implementation.pca import PcaModel, pca_encode, pca_fit, pca_reconstruct
from src.np_implementation.tck import KernelMatrix, TckConfig, build_kernel
from src.numeric import Rng
from src.serialization import load_kernel, load_kernel_csv
from src.trainer import (TrainConfig, encode_dataset, impute_dataset_with_decoder, pooled_mse, reconstruct,
                         train)
from src.utils import ConfigError, DataError


def generate(cfg: ExperimentConfig):
    """Raw (train, test) datasets for ``cfg.source``."""
    if cfg.source == 'sines':
        return gen_sines(SineGenConfig(cfg.n_train, cfg.n_test, cfg.length, seed=cfg.seed))
    if cfg.source in ('odefix', 'odevar', 'ode'):
        length_range = cfg.length_range
        if cfg.source == 'odefix':
            length_range = None
        elif cfg.source == 'odevar' and length_range is None:
            length_range = (30, 90)
        return gen_ode(OdeGenConfig(cfg.n_variates, cfg.length, length_range, cfg.n_train, cfg.n_test,
                                    step=cfg.ode_step, seed=cfg.seed))
    if cfg.source == 'classes':
        return gen_class_mixture(ClassMixtureConfig(cfg.n_classes, cfg.n_variates, cfg.length_range or (7, 29),
                                                    cfg.n_train, cfg.n_test, seed=cfg.seed))
    if not Path(cfg.source).is_dir():
        logger.error(f'source {cfg.source!r} is neither a generator nor a dataset directory')
        raise DataError(f'dataset directory not found: {cfg.source}')
    return load_split_dir(cfg.source)


@dataclass
class Prepared:
    """Standardized splits at each stage: clean, with injected missing cells, and imputed."""
    train_clean: Dataset
    test_clean: Dataset
    train_observed: Dataset
    test_observed: Dataset
    train: Dataset
    test: Dataset
    train_record: InjectionRecord
    test_record: InjectionRecord

    @property
    def t_pad(self):
        return max(self.train.t_max, self.test.t_max)


def prepare(cfg: ExperimentConfig, splits=None):
    """Standardize with training statistics, inject ``missing_rate`` and impute with ``cfg.impute``."""
    train_raw, test_raw = splits if splits is not None else generate(cfg)
    train_clean, test_clean, _ = standardize_fit_transform(train_raw, test_raw)
    train_obs, train_rec = inject_missing(train_clean, cfg.missing_rate, seed=[cfg.seed, 'train'])
    test_obs, test_rec = inject_missing(test_clean, cfg.missing_rate, seed=[cfg.seed, 'test'])
    means = variate_means(train_obs) if cfg.impute == 'mean' else None
    train = impute_simple(train_obs, cfg.impute, means)
    test = impute_simple(test_obs, cfg.impute, means)
    logger.info(f'prepared {cfg.source}: {len(train)} train / {len(test)} test, V={train.n_variates}, '
                f'T in [{min(train.t_min, test.t_min)}, {max(train.t_max, test.t_max)}], '
                f'{train_rec.n_cells + test_rec.n_cells} cells removed')
    return Prepared(train_clean, test_clean, train_obs, test_obs, train, test, train_rec, test_rec)


def _relabel(ds: Dataset, label, prefix):
    return [replace(s, label=label, sample_id=f'{prefix}-{s.sample_id}') for s in ds]


def oneclass_splits(cfg: ExperimentConfig):
    """(train, test) with a nominal-only training split and labels 0 = nominal, 1 = anomaly.

    With ``nominal_label >= 0`` the classes of a labeled source define the two groups; otherwise
    the anomalies come from the same generator run with ``anomaly_seed``.
    """
    train, test = generate(cfg)
    if cfg.nominal_label >= 0:
        if not (train.has_labels and test.has_labels):
            raise DataError('nominal_label needs a labeled dataset')
        nominal = [s for s in train if s.label == cfg.nominal_label]
        if not nominal:
            raise DataError(f'no training sample has the nominal label {cfg.nominal_label}')
        test_samples = [replace(s, label=int(s.label != cfg.nominal_label)) for s in test]
        if len({s.label for s in test_samples}) < 2:
            logger.error('test split lacks the nominal or the anomalous class')
            raise DataError('test split must contain both nominal and anomalous samples')
        return Dataset([replace(s, label=0) for s in nominal], 'train'), test.with_samples(test_samples)
    anomaly_seed = cfg.seed + 1000 if cfg.anomaly_seed < 0 else cfg.anomaly_seed
    if anomaly_seed == cfg.seed:
        raise ConfigError('anomaly_seed must differ from seed')
    n_anomalies = int(np.floor(cfg.anomaly_fraction * len(test) + 0.5))
    if not 0 < n_anomalies < len(test):
        raise DataError(f'anomaly_fraction {cfg.anomaly_fraction} leaves one class empty '
                        f'in a test split of {len(test)}')
    _, other = generate(replace(cfg, seed=anomaly_seed))
    if other.n_variates != test.n_variates or len(other) < n_anomalies:
        raise DataError('anomaly generator does not match the nominal data')
    samples = _relabel(test.subset(range(len(test) - n_anomalies)), 0, 'nominal') \
        + _relabel(other.subset(range(n_anomalies)), 1, 'anomaly')
    return Dataset([replace(s, label=0) for s in train], 'train'), Dataset(samples, 'test')


def tck_config(cfg: ExperimentConfig, ds: Dataset):
    """Ensemble settings with the segment/variate minima clipped to the data."""
    return TckConfig(n_init=cfg.tck_q, max_components=cfg.tck_c, n_min_frac=cfg.tck_n_min_frac,
                     t_min=min(cfg.tck_t_min, ds.t_max), v_min=min(cfg.tck_v_min, ds.n_variates),
                     max_iter=cfg.tck_max_iter, n_jobs=cfg.tck_n_jobs)


def train_config(cfg: ExperimentConfig, seed, masked_loss=None):
    return TrainConfig(l2=cfg.l2, alignment=cfg.alignment, sampling_prob=cfg.sampling_prob,
                       learning_rate=cfg.learning_rate, batch_size=cfg.batch_size, epochs=cfg.epochs,
                       seed=seed, masked_loss=cfg.masked_loss if masked_loss is None else masked_loss)


def read_kernel(path):
    path = Path(path)
    return load_kernel_csv(path) if path.suffix == '.csv' else load_kernel(path)


def require_kernel(cfg: ExperimentConfig) -> Optional[KernelMatrix]:
    if not cfg.is_recurrent or cfg.resolved().alignment <= 0:
        return None
    if not cfg.kernel:
        logger.error('alignment > 0 but no kernel file configured')
        raise ConfigError('alignment > 0 needs a kernel: run `tkae tck` with the same config and '
                          'set kernel = <tck out>/kernel.bin (or use model = tae)')
    return read_kernel(cfg.kernel)


def build_model(cfg: ExperimentConfig, n_variates, t_pad, seed):
    rng = Rng(seed).derive('init')
    if cfg.is_recurrent:
        arch = TkaeArch(n_variates, cfg.code_size, cfg.n_layers, cfg.cell, cfg.bidirectional)
        return TkaeModel(arch, rng)
    if cfg.model in ('ffae', 'dae'):
        arch = FfAeArch(n_variates * t_pad, cfg.code_size, cfg.hidden_size, cfg.encoder_activation,
                        cfg.decoder_activation, cfg.tied_weights)
        return FfAeModel(arch, rng)
    return None


def unrolled_mask(ds: Dataset, t_pad):
    mask = np.zeros((len(ds), ds.n_variates, t_pad))
    for n, s in enumerate(ds):
        mask[n, :, :s.length] = s.mask
    return mask.reshape(len(ds), -1)


def fit_model(cfg: ExperimentConfig, train_ds: Dataset, t_pad, seed, kernel=None, masked_loss=None):
    """Fit the configured model kind; returns (model, per-epoch loss history)."""
    cfg = cfg.resolved()
    tc = train_config(cfg, seed, masked_loss)
    if cfg.model == 'pca':
        return pca_fit(pad_and_unroll(train_ds, t_pad), cfg.code_size), []
    model = build_model(cfg, train_ds.n_variates, t_pad, seed)
    if cfg.is_recurrent:
        result = train(model, train_ds, kernel, tc)
        return result.model, result.history
    x = pad_and_unroll(train_ds, t_pad)
    mask = unrolled_mask(train_ds, t_pad) if tc.masked_loss else None
    if cfg.model == 'dae':
        result = dae_train(model, x, cfg.corruption, tc, mask)
    else:
        result = ffae_train(model, x, tc, mask)
    return result.model, result.history


def reconstructions(model, ds: Dataset):
    """Per-sample V x T_s reconstructions for any model kind."""
    if isinstance(model, TkaeModel):
        return reconstruct(model, ds)
    if isinstance(model, FfAeModel):
        return unrolled_reconstructions(lambda x: dense_reconstruct(model, x), model.arch.input_size, ds)
    if isinstance(model, PcaModel):
        return unrolled_reconstructions(lambda x: pca_reconstruct(model, x), model.input_size, ds)
    raise TypeError(f'not a reconstruction model: {type(model).__name__}')


def sample_errors(model, ds: Dataset):
    """Per-sample reconstruction MSE, the one-class anomaly score."""
    return np.array([np.mean((s.values - r) ** 2) for s, r in zip(ds, reconstructions(model, ds))])


def dataset_mse(model, ds: Dataset):
    return pooled_mse(list(ds), reconstructions(model, ds))


def representations(model, ds: Dataset, t_pad):
    if isinstance(model, TkaeModel):
        return encode_dataset(model, ds)
    if isinstance(model, FfAeModel):
        return dense_encode(model, pad_and_unroll(ds, t_pad))
    if isinstance(model, PcaModel):
        return pca_encode(model, pad_and_unroll(ds, t_pad))
    raise TypeError(f'not an encoding model: {type(model).__name__}')


def fit_kernel(cfg: ExperimentConfig, data: Prepared):
    """TCK on the training split with its missing cells left in place."""
    _, kernel = build_kernel(data.train_observed, tck_config(cfg, data.train_observed), seed=cfg.seed)
    return kernel


def compare_imputers(cfg: ExperimentConfig, data: Prepared, seed, kernel=None):
    """Test split completed by mean, LOCF, a masked-loss DAE and the masked-loss recurrent model."""
    recurrent = cfg.model if cfg.is_recurrent else 'tkae'
    out = {'mean': impute_simple(data.test_observed, 'mean', variate_means(data.train_observed)),
           'locf': impute_simple(data.test_observed, 'locf')}
    dae, _ = fit_model(replace(cfg, model='dae'), data.train, data.t_pad, seed, masked_loss=True)
    out['dae'] = dae_impute_dataset(dae, data.test_observed)
    rnn, _ = fit_model(replace(cfg, model=recurrent), data.train, data.t_pad, seed, kernel, masked_loss=True)
    out[recurrent] = impute_dataset_with_decoder(rnn, data.test_observed)
    return out


def classify_run(cfg: ExperimentConfig, data: Prepared, seed, kernel=None):
    """(kNN accuracy, test reconstruction MSE) of one trained model."""
    model, _ = fit_model(cfg, data.train, data.t_pad, seed, kernel)
    z_train = representations(model, data.train, data.t_pad)
    z_test = representations(model, data.test, data.t_pad)
    predicted = knn_classify(z_train, data.train.labels, z_test, cfg.knn_k)
    return accuracy(data.test.labels, predicted), dataset_mse(model, data.test_clean)
