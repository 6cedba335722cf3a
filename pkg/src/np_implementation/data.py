from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np
from loguru import logger

from src.get_data import Dataset, MtsSample
from src.numeric import Rng, spectral_radius
from src.utils import ConfigError, NumericError


@dataclass
class SineGenConfig:
    n_train: int = 200
    n_test: int = 1000
    length: int = 100
    t_end: float = 100.0
    seed: int = 0


@dataclass
class OdeGenConfig:
    n_variates: int = 10
    length: int = 90
    length_range: Optional[Tuple[int, int]] = None
    n_train: int = 400
    n_test: int = 1000
    sparsity: float = 0.5
    element_range: float = 0.5
    radius: float = 0.8
    step: float = 0.1
    seed: int = 0


@dataclass
class ClassMixtureConfig:
    n_classes: int = 9
    n_variates: int = 12
    length_range: Tuple[int, int] = (7, 29)
    n_train: int = 270
    n_test: int = 370
    noise: float = 0.3
    seed: int = 0


def _check_counts(n_train, n_test):
    if n_train < 1 or n_test < 1:
        raise ConfigError(f'need at least one train and one test sample, got {n_train}/{n_test}')


def _split(samples, n_train):
    return Dataset(samples[:n_train], 'train'), Dataset(samples[n_train:], 'test')


def _sample_id(n, n_train):
    return f'train-{n:05d}' if n < n_train else f'test-{n - n_train:05d}'


def sine(a, b, t):
    return np.sin(a * t + b)


def gen_sines(cfg: SineGenConfig):
    """Univariate sinusoids sin(a t + b) with a, b ~ N(0, 1) on ``length`` points of [0, t_end]."""
    _check_counts(cfg.n_train, cfg.n_test)
    if cfg.length < 1:
        raise ConfigError('sine length must be positive')
    rng = Rng(cfg.seed).derive('sines')
    t = np.linspace(0.0, cfg.t_end, cfg.length)
    total = cfg.n_train + cfg.n_test
    ab = rng.normal(size=(total, 2))
    samples = [MtsSample.from_values(sine(a, b, t)[None, :], sample_id=_sample_id(n, cfg.n_train))
               for n, (a, b) in enumerate(ab)]
    return _split(samples, cfg.n_train)


def draw_ode_matrix(rng: Rng, cfg: OdeGenConfig, max_tries=100):
    """Sparse A with entries uniform in [-r, r], rescaled to the configured spectral radius."""
    v = cfg.n_variates
    n_zero = int(np.floor(cfg.sparsity * v * v + 0.5))
    for _ in range(max_tries):
        a = rng.uniform(-cfg.element_range, cfg.element_range, size=(v, v))
        a.flat[rng.choice(v * v, n_zero)] = 0.0
        rho = spectral_radius(a)
        if rho > 1e-12:
            return a * (cfg.radius / rho)
        logger.debug('drawn ODE matrix has zero spectral radius, resampling')
    raise NumericError(f'no ODE matrix with non-zero spectral radius after {max_tries} draws')


def ode_matrix(cfg: OdeGenConfig):
    """The A used by ``gen_ode(cfg)``."""
    return draw_ode_matrix(Rng(cfg.seed).derive('A'), cfg)


def integrate_ode(a, y0, n_steps, step):
    """Forward Euler on dy/dt = A tanh(y); column t holds y after t steps."""
    data = np.zeros((len(y0), n_steps))
    y = np.asarray(y0, dtype=np.float64).copy()
    for i in range(n_steps):
        data[:, i] = y
        y = y + step * a @ np.tanh(y)
    return data


def gen_ode(cfg: OdeGenConfig):
    """Trajectories of one random contractive system from random N(0, 1) initial states.

    With ``length_range`` each sample draws its length uniformly from the closed range.
    """
    _check_counts(cfg.n_train, cfg.n_test)
    if cfg.n_variates < 1 or cfg.step <= 0:
        raise ConfigError('ODE generator needs n_variates >= 1 and step > 0')
    if cfg.length_range is not None:
        lo, hi = cfg.length_range
        if not 1 <= lo <= hi:
            raise ConfigError(f'invalid length range {cfg.length_range}')
    elif cfg.length < 1:
        raise ConfigError('ODE length must be positive')
    a = ode_matrix(cfg)
    rng = Rng(cfg.seed).derive('trajectories')
    total = cfg.n_train + cfg.n_test
    samples = []
    for n in range(total):
        if cfg.length_range is not None:
            length = int(rng.integers(cfg.length_range[0], cfg.length_range[1] + 1))
        else:
            length = cfg.length
        y0 = rng.normal(size=cfg.n_variates)
        samples.append(MtsSample.from_values(integrate_ode(a, y0, length, cfg.step),
                                             sample_id=_sample_id(n, cfg.n_train)))
    return _split(samples, cfg.n_train)


def gen_class_mixture(cfg: ClassMixtureConfig):
    """Labeled MTS, one diagonal Gaussian generator per class.

    Each class owns a smooth mean curve per variate, defined on normalized time so that
    samples of any length share its shape, and per-variate noise levels.
    """
    _check_counts(cfg.n_train, cfg.n_test)
    lo, hi = cfg.length_range
    if cfg.n_classes < 1 or cfg.n_variates < 1 or not 1 <= lo <= hi:
        raise ConfigError('invalid class mixture configuration')
    rng = Rng(cfg.seed).derive('classes')
    shape = (cfg.n_classes, cfg.n_variates)
    amp = rng.uniform(0.5, 1.5, size=shape)
    freq = rng.uniform(0.5, 2.0, size=shape)
    phase = rng.uniform(0.0, 2.0 * np.pi, size=shape)
    offset = rng.normal(0.0, 0.5, size=shape)
    scale = cfg.noise * rng.uniform(0.5, 1.5, size=shape)
    total = cfg.n_train + cfg.n_test
    samples = []
    for n in range(total):
        c = n % cfg.n_classes
        length = int(rng.integers(lo, hi + 1))
        u = np.linspace(0.0, 1.0, length)
        mean = amp[c][:, None] * np.sin(2.0 * np.pi * freq[c][:, None] * u + phase[c][:, None]) \
            + offset[c][:, None]
        values = mean + scale[c][:, None] * rng.normal(size=(cfg.n_variates, length))
        samples.append(MtsSample.from_values(values, label=c, sample_id=_sample_id(n, cfg.n_train)))
    return _split(samples, cfg.n_train)
