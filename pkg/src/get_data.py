"""MTS containers and dataset preparation.

A sample stores its values as a V x T float64 matrix with NaN at missing cells and a boolean
mask (True = observed). Imputation fills the NaNs but leaves the mask untouched, so masked
losses and scores keep knowing which cells were observed.
"""
import csv
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import List, Optional

import numpy as np
from loguru import logger

from src.numeric import Rng
from src.utils import ConfigError, DataError

IMPUTE_MODES = ('zero', 'mean', 'locf')


@dataclass
class MtsSample:
    values: np.ndarray
    mask: np.ndarray
    label: Optional[int] = None
    sample_id: str = ''
    imputation: Optional[str] = None

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.ndim != 2 or self.values.shape[0] < 1 or self.values.shape[1] < 1:
            raise DataError(f'sample {self.sample_id!r}: values must be a non-empty V x T matrix')
        self.mask = np.asarray(self.mask, dtype=bool)
        if self.mask.shape != self.values.shape:
            raise DataError(f'sample {self.sample_id!r}: mask shape {self.mask.shape} '
                            f'differs from values shape {self.values.shape}')

    @classmethod
    def from_values(cls, values, label=None, sample_id=''):
        """Sample whose mask marks every finite value as observed."""
        values = np.asarray(values, dtype=np.float64)
        return cls(values, np.isfinite(values), label, sample_id)

    @property
    def n_variates(self):
        return self.values.shape[0]

    @property
    def length(self):
        return self.values.shape[1]

    @property
    def is_complete(self):
        """True when no missing placeholder is left (fully observed or imputed)."""
        return bool(np.isfinite(self.values).all())

    def observed(self):
        return np.where(self.mask, self.values, np.nan)


@dataclass
class Dataset:
    samples: List[MtsSample]
    split: str = 'train'

    def __post_init__(self):
        if not self.samples:
            raise DataError(f'{self.split} dataset is empty')
        n_variates = self.samples[0].n_variates
        for s in self.samples:
            if s.n_variates != n_variates:
                raise DataError(f'sample {s.sample_id!r} has {s.n_variates} variates, expected {n_variates}')

    def __len__(self):
        return len(self.samples)

    def __iter__(self):
        return iter(self.samples)

    def __getitem__(self, idx):
        return self.samples[idx]

    @property
    def n_variates(self):
        return self.samples[0].n_variates

    @property
    def t_min(self):
        return min(s.length for s in self.samples)

    @property
    def t_max(self):
        return max(s.length for s in self.samples)

    @property
    def lengths(self):
        return np.array([s.length for s in self.samples])

    @property
    def ids(self):
        return [s.sample_id for s in self.samples]

    @property
    def labels(self):
        return [s.label for s in self.samples]

    @property
    def has_labels(self):
        return all(s.label is not None for s in self.samples)

    @property
    def is_complete(self):
        return all(s.is_complete for s in self.samples)

    def with_samples(self, samples):
        return Dataset(list(samples), self.split)

    def subset(self, indices):
        return self.with_samples(self.samples[i] for i in indices)


@dataclass
class InjectionRecord:
    """Ground truth of the cells removed by ``inject_missing``, one entry per sample."""
    rows: List[np.ndarray] = field(default_factory=list)
    cols: List[np.ndarray] = field(default_factory=list)
    truth: List[np.ndarray] = field(default_factory=list)

    @property
    def n_cells(self):
        return int(sum(len(r) for r in self.rows))


@dataclass
class Standardizer:
    mean: np.ndarray
    std: np.ndarray

    @classmethod
    def fit(cls, ds: Dataset):
        v = ds.n_variates
        mean, std = np.zeros(v), np.ones(v)
        for i in range(v):
            obs = np.concatenate([s.values[i][s.mask[i]] for s in ds])
            if obs.size == 0:
                logger.error(f'variate {i} has no observed entries in the training split')
                raise DataError(f'variate {i} has no observed entries in the training split')
            mean[i] = obs.mean()
            sd = obs.std()
            std[i] = sd if sd > 1e-12 else 1.0
        return cls(mean, std)

    def _apply(self, ds, fn):
        out = []
        for s in ds:
            values = fn(s.values)
            out.append(replace(s, values=np.where(s.mask, values, s.values)))
        return ds.with_samples(out)

    def transform(self, ds: Dataset):
        self._check(ds)
        return self._apply(ds, lambda x: (x - self.mean[:, None]) / self.std[:, None])

    def inverse_transform(self, ds: Dataset):
        self._check(ds)
        return self._apply(ds, lambda x: x * self.std[:, None] + self.mean[:, None])

    def _check(self, ds):
        if ds.n_variates != len(self.mean):
            raise DataError(f'standardizer fitted on {len(self.mean)} variates, got {ds.n_variates}')


def standardize_fit_transform(train: Dataset, test: Dataset):
    """Fit per-variate statistics on observed training entries and apply them to both splits."""
    standardizer = Standardizer.fit(train)
    return standardizer.transform(train), standardizer.transform(test), standardizer


def _round_half_up(x):
    return int(np.floor(x + 0.5))


def inject_missing(ds: Dataset, rate: float, seed=0):
    """Remove exactly round(rate * V * T) observed entries from each sample.

    Returns the thinned dataset and an ``InjectionRecord`` with the removed ground truth.
    """
    if not 0.0 <= rate <= 1.0:
        raise DataError(f'missing rate must lie in [0, 1], got {rate}')
    rng = Rng(seed).derive('inject')
    record = InjectionRecord()
    out = []
    for s in ds:
        n_remove = _round_half_up(rate * s.values.size)
        obs = np.flatnonzero(s.mask.ravel())
        if n_remove > obs.size:
            logger.warning(f'sample {s.sample_id!r}: only {obs.size} observed cells, '
                           f'{n_remove} requested for removal')
            n_remove = obs.size
        chosen = obs[rng.choice(obs.size, n_remove)] if n_remove else np.array([], dtype=int)
        rows, cols = np.unravel_index(chosen, s.values.shape)
        record.rows.append(rows)
        record.cols.append(cols)
        record.truth.append(s.values[rows, cols].copy())
        values, mask = s.values.copy(), s.mask.copy()
        values[rows, cols] = np.nan
        mask[rows, cols] = False
        out.append(replace(s, values=values, mask=mask))
    logger.debug(f'injected {record.n_cells} missing cells at rate {rate}')
    return ds.with_samples(out), record


def variate_means(ds: Dataset):
    """Per-variate mean of the observed entries (0 for a variate with none)."""
    means = np.zeros(ds.n_variates)
    for i in range(ds.n_variates):
        obs = np.concatenate([s.values[i][s.mask[i]] for s in ds])
        if obs.size:
            means[i] = obs.mean()
    return means


def _locf(row, mask_row):
    out = row.copy()
    last = 0.0
    for t in range(row.size):
        if mask_row[t]:
            last = row[t]
        else:
            out[t] = last
    return out


def impute_simple(ds: Dataset, mode='zero', means=None):
    """Fill every unobserved cell: zero, per-variate ``means`` (required, from the training split) or LOCF.

    LOCF fills cells before the first observation of a variate with 0.
    """
    if mode not in IMPUTE_MODES:
        raise DataError(f'unknown imputation mode {mode!r}, expected one of {IMPUTE_MODES}')
    if mode == 'mean' and means is None:
        raise ConfigError('mean imputation needs the training means, see variate_means')
    out = []
    for s in ds:
        if mode == 'zero':
            values = np.where(s.mask, s.values, 0.0)
        elif mode == 'mean':
            values = np.where(s.mask, s.values, np.asarray(means, dtype=np.float64)[:, None])
        else:
            values = np.stack([_locf(s.values[i], s.mask[i]) for i in range(s.n_variates)])
        out.append(replace(s, values=values, imputation=mode))
    return ds.with_samples(out)


def pad_and_unroll(ds: Dataset, t_pad=None):
    """N x (V * t_pad) matrix of zero-padded samples, unrolled variate-major.

    Missing placeholders are unrolled as 0.
    """
    t_pad = ds.t_max if t_pad is None else t_pad
    if t_pad < ds.t_max:
        raise DataError(f'cannot pad to {t_pad} steps, longest sample has {ds.t_max}')
    out = np.zeros((len(ds), ds.n_variates, t_pad))
    for n, s in enumerate(ds):
        out[n, :, :s.length] = np.nan_to_num(s.values, nan=0.0)
    return out.reshape(len(ds), -1)


def unpad_and_reshape(matrix, lengths, n_variates):
    """Inverse of ``pad_and_unroll``: list of V x T_s matrices cut to each sample's length."""
    matrix = np.asarray(matrix)
    t_pad = matrix.shape[1] // n_variates
    cube = matrix.reshape(matrix.shape[0], n_variates, t_pad)
    return [cube[n, :, :length] for n, length in enumerate(lengths)]


def to_batch(samples, t_pad=None):
    """Stack samples into (B, T, V) values, (B, T, V) mask and (B,) lengths, zero-padded."""
    t_pad = t_pad or max(s.length for s in samples)
    v = samples[0].n_variates
    values = np.zeros((len(samples), t_pad, v))
    mask = np.zeros((len(samples), t_pad, v))
    for n, s in enumerate(samples):
        values[n, :s.length] = np.nan_to_num(s.values, nan=0.0).T
        mask[n, :s.length] = s.mask.T
    return values, mask, np.array([s.length for s in samples])


# CSV format: long rows (sample_id, t, v_1..v_V[, label]); empty cell = missing; t from 0.

@dataclass
class CsvSchema:
    n_variates: Optional[int] = None
    split: str = 'train'


def parse_float(text, where):
    if text.strip() == '':
        return np.nan
    try:
        return float(text)
    except ValueError:
        raise DataError(f'{where}: cannot parse {text!r} as a number') from None


def load_csv(path, schema: CsvSchema = None):
    schema = schema or CsvSchema()
    path = Path(path)
    if not path.is_file():
        raise DataError(f'dataset file not found: {path}')
    with path.open(newline='', encoding='utf-8') as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DataError(f'{path}: empty file') from None
        if len(header) < 3 or header[0] != 'sample_id' or header[1] != 't':
            raise DataError(f'{path}: header must start with sample_id,t')
        has_label = header[-1] == 'label'
        n_variates = len(header) - 2 - int(has_label)
        if n_variates < 1:
            raise DataError(f'{path}: no variate columns')
        if schema.n_variates is not None and schema.n_variates != n_variates:
            raise DataError(f'{path}: expected {schema.n_variates} variates, found {n_variates}')
        rows = {}
        labels = {}
        for lineno, row in enumerate(reader, start=2):
            where = f'{path}:{lineno}'
            if len(row) != len(header):
                raise DataError(f'{where}: expected {len(header)} columns, found {len(row)}')
            sid = row[0]
            try:
                t = int(row[1])
            except ValueError:
                raise DataError(f'{where}: bad time index {row[1]!r}') from None
            steps = rows.setdefault(sid, [])
            if t < 0 or (steps and t <= steps[-1][0]):
                raise DataError(f'{where}: time indices of sample {sid!r} are not increasing')
            steps.append((t, [parse_float(x, where) for x in row[2:2 + n_variates]]))
            if has_label and row[-1].strip() != '':
                try:
                    labels[sid] = int(row[-1])
                except ValueError:
                    raise DataError(f'{where}: bad label {row[-1]!r}') from None
    samples = []
    for sid, steps in rows.items():
        values = np.full((n_variates, steps[-1][0] + 1), np.nan)
        for t, vals in steps:
            values[:, t] = vals
        samples.append(MtsSample.from_values(values, labels.get(sid), sid))
    if not samples:
        raise DataError(f'{path}: no samples')
    return Dataset(samples, schema.split)


def _fmt(x):
    return '' if not np.isfinite(x) else repr(float(x))


def save_csv(ds: Dataset, path):
    """Write ``ds`` in the long CSV format; masked cells are written empty."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    has_label = ds.has_labels
    with path.open('w', newline='', encoding='utf-8') as fh:
        writer = csv.writer(fh, lineterminator='\n')
        header = ['sample_id', 't'] + [f'v_{i + 1}' for i in range(ds.n_variates)]
        writer.writerow(header + (['label'] if has_label else []))
        for s in ds:
            observed = s.observed()
            for t in range(s.length):
                row = [s.sample_id, str(t)] + [_fmt(x) for x in observed[:, t]]
                writer.writerow(row + ([str(s.label)] if has_label else []))
    write_metadata(ds, path.with_suffix('.meta'))


def write_metadata(ds: Dataset, path):
    meta = {'V': ds.n_variates, 'n_samples': len(ds), 'labels': str(ds.has_labels).lower(),
            'split': ds.split, 't_min': ds.t_min, 't_max': ds.t_max}
    Path(path).write_text(''.join(f'{k}={v}\n' for k, v in meta.items()), encoding='utf-8')


def read_metadata(path):
    meta = {}
    for line in Path(path).read_text(encoding='utf-8').splitlines():
        if line.strip():
            key, _, value = line.partition('=')
            meta[key.strip()] = value.strip()
    return meta


def load_split_dir(directory):
    """Load ``train.csv`` and ``test.csv`` from a dataset directory written by ``save_csv``."""
    directory = Path(directory)
    train = load_csv(directory / 'train.csv', CsvSchema(split='train'))
    test = load_csv(directory / 'test.csv', CsvSchema(n_variates=train.n_variates, split='test'))
    return train, test
