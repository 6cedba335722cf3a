from dataclasses import dataclass

import numpy as np
from loguru import logger

from src.utils import ConfigError, DataError


@dataclass
class PcaModel:
    mean: np.ndarray
    components: np.ndarray
    explained_variance: np.ndarray

    @property
    def n_components(self):
        return self.components.shape[0]

    @property
    def input_size(self):
        return self.components.shape[1]


def pca_fit(x, n_components, rank_tol=1e-10):
    """Top principal directions of the rows of ``x`` from the eigendecomposition of the
    (1/N) covariance, ordered by decreasing variance.
    """
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2 or x.shape[0] < 1:
        raise DataError('PCA needs a non-empty N x D matrix')
    n, d = x.shape
    if not 1 <= n_components <= d:
        raise ConfigError(f'n_components must lie in [1, {d}], got {n_components}')
    mean = x.mean(axis=0)
    centered = x - mean
    cov = centered.T @ centered / n
    eigval, eigvec = np.linalg.eigh(cov)
    order = np.argsort(eigval)[::-1]
    eigval, eigvec = np.clip(eigval[order], 0.0, None), eigvec[:, order]
    rank = int(np.sum(eigval > rank_tol * max(eigval[0], 1.0)))
    if n_components > rank:
        logger.warning(f'{n_components} components requested for data of rank {rank}; '
                       f'the trailing directions are arbitrary')
    return PcaModel(mean, eigvec[:, :n_components].T.copy(), eigval[:n_components].copy())


def _check(model: PcaModel, x):
    x = np.asarray(x, dtype=np.float64)
    if x.shape[-1] != model.input_size:
        raise DataError(f'PCA model expects {model.input_size} features, got {x.shape[-1]}')
    return x


def pca_encode(model: PcaModel, x):
    return (_check(model, x) - model.mean) @ model.components.T


def pca_reconstruct(model: PcaModel, x):
    return pca_encode(model, x) @ model.components + model.mean
