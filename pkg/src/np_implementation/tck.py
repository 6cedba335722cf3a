"""Time series Cluster Kernel.

An ensemble of diagonal-covariance GMMs, each fit by MAP-EM on a random subset of samples,
variates and a random time segment. Missing cells are marginalized out of every likelihood,
and the kernel sums cosine similarities of the per-instance posterior vectors.

MAP priors (per instance, hyperparameters drawn uniformly from ``TckConfig`` ranges):
  * mean curves:  mu_gv ~ N(m_v 1, s2_v Kt),  Kt(t, t') = b0 exp(-a0 (t - t')^2) + nugget b0 I
  * variances:    log p(sigma2_gv) = -N0/2 log sigma2_gv - N0 s2_v / (2 sigma2_gv),  N0 = n0 N
  * weights:      symmetric Dirichlet with concentration >= 1
where m_v, s2_v are the empirical mean/variance of the observed entries of variate v.
"""
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import List, Optional, Tuple

import numpy as np
from loguru import logger
from scipy.linalg import cho_factor, cho_solve
from scipy.special import logsumexp
from tqdm import tqdm

from src.get_data import Dataset
from src.numeric import Rng
from src.utils import ConfigError, DataError, NumericError, progress_disabled

LOG_2PI = np.log(2.0 * np.pi)
VAR_FLOOR = 1e-8


@dataclass
class TckConfig:
    n_init: int = 30
    max_components: int = 10
    n_min_frac: float = 0.8
    t_min: Optional[int] = None
    t_max: Optional[int] = None
    v_min: Optional[int] = None
    v_max: Optional[int] = None
    max_iter: int = 20
    tol: float = 1e-6
    a0_range: Tuple[float, float] = (0.001, 1.0)
    b0_range: Tuple[float, float] = (0.005, 0.2)
    n0_range: Tuple[float, float] = (0.001, 0.2)
    dirichlet_range: Tuple[float, float] = (1.0, 2.0)
    nugget: float = 1e-3
    n_jobs: int = 1

    def bounds(self, n, v, t):
        """Resolved (n_min, t_lo, t_hi, v_lo, v_hi); unset bounds default to clipped ranges."""
        t_lo = min(6, t) if self.t_min is None else self.t_min
        t_hi = t if self.t_max is None else self.t_max
        v_lo = min(2, v) if self.v_min is None else self.v_min
        v_hi = v if self.v_max is None else self.v_max
        n_min = max(1, int(np.ceil(self.n_min_frac * n)))
        if self.n_init < 1 or self.max_components < 2:
            raise ConfigError('TCK needs n_init >= 1 and max_components >= 2')
        if not 0.0 < self.n_min_frac <= 1.0:
            raise ConfigError(f'n_min_frac must lie in (0, 1], got {self.n_min_frac}')
        if not 1 <= t_lo <= t_hi <= t:
            raise ConfigError(f'infeasible segment bounds [{t_lo}, {t_hi}] for T={t}')
        if not 1 <= v_lo <= v_hi <= v:
            raise ConfigError(f'infeasible variate bounds [{v_lo}, {v_hi}] for V={v}')
        for name in ('a0_range', 'b0_range', 'n0_range', 'dirichlet_range'):
            lo, hi = getattr(self, name)
            if not 0 <= lo <= hi:
                raise ConfigError(f'invalid {name} {(lo, hi)}')
        if self.dirichlet_range[0] < 1.0:
            raise ConfigError('Dirichlet concentration must be >= 1')
        return n_min, t_lo, t_hi, v_lo, v_hi


@dataclass
class Priors:
    """Omega(q): per-instance prior hyperparameters."""
    a0: float
    b0: float
    n0: float
    dirichlet: float = 1.0
    nugget: float = 1e-3

    @classmethod
    def draw(cls, rng: Rng, cfg: TckConfig):
        return cls(*(float(rng.uniform(*r)) for r in
                     (cfg.a0_range, cfg.b0_range, cfg.n0_range, cfg.dirichlet_range)), nugget=cfg.nugget)


@dataclass
class DiagGmm:
    theta: np.ndarray
    mu: np.ndarray
    sigma: np.ndarray

    def __post_init__(self):
        if abs(self.theta.sum() - 1.0) > 1e-12 * max(1, len(self.theta)):
            self.theta = self.theta / self.theta.sum()
        if np.any(self.sigma <= 0):
            raise NumericError('GMM standard deviations must be positive')

    @property
    def n_components(self):
        return len(self.theta)


@dataclass
class TckInstance:
    gmm: DiagGmm
    segment: np.ndarray
    variates: np.ndarray
    subset: np.ndarray
    priors: Priors
    n_components: int
    posteriors: np.ndarray
    objective: List[float] = field(default_factory=list)
    reinitialized: List[int] = field(default_factory=list)


@dataclass
class KernelMatrix:
    values: np.ndarray
    ids: List[str]

    def block(self, indices):
        indices = np.asarray(indices)
        return self.values[np.ix_(indices, indices)]

    def index_of(self, ids):
        lookup = {sid: i for i, sid in enumerate(self.ids)}
        try:
            return np.array([lookup[sid] for sid in ids])
        except KeyError as err:
            raise DataError(f'sample {err.args[0]!r} is not indexed by the kernel') from None

    def min_eigenvalue(self):
        return float(np.linalg.eigvalsh((self.values + self.values.T) / 2.0).min())


@dataclass
class TckModel:
    instances: List[TckInstance]
    n_init: int
    max_components: int
    train_ids: List[str]
    n_variates: int
    t_max: int


def to_cube(ds: Dataset, t_pad=None):
    """(N, V, T) values with 0 at unobserved cells and the matching boolean mask."""
    t_pad = t_pad or ds.t_max
    x = np.zeros((len(ds), ds.n_variates, t_pad))
    r = np.zeros((len(ds), ds.n_variates, t_pad), dtype=bool)
    for n, s in enumerate(ds):
        length = min(s.length, t_pad)
        r[n, :, :length] = s.mask[:, :length]
        x[n, :, :length] = np.where(s.mask[:, :length], s.values[:, :length], 0.0)
    return x, r


def component_log_pdf(x, r, mu, sigma):
    """(N, G) marginal log-densities: sum over observed cells of log N(x | mu_gv(t), sigma_gv)."""
    x0 = np.where(r, x, 0.0)
    rf = r.astype(np.float64)
    var = sigma ** 2
    const = -0.5 * LOG_2PI * rf.sum(axis=(1, 2))
    log_sd = -rf.sum(axis=2) @ np.log(sigma).T
    diff2 = (x0[:, None] - mu[None]) ** 2 / var[None, :, :, None]
    quad = -0.5 * np.einsum('nvt,ngvt->ng', rf, diff2)
    return const[:, None] + log_sd + quad


def marginal_log_pdf(values, mask, gmm: DiagGmm, g):
    """log p(x | component g) for one V' x T' sample restricted to the GMM's variates/segment."""
    values, mask = np.asarray(values, dtype=np.float64), np.asarray(mask, dtype=bool)
    if values.shape != gmm.mu.shape[1:]:
        raise DataError(f'sample shape {values.shape} does not match GMM shape {gmm.mu.shape[1:]}')
    return float(component_log_pdf(values[None], mask[None], gmm.mu[g:g + 1], gmm.sigma[g:g + 1])[0, 0])


def posterior(x, r, gmm: DiagGmm):
    """(N, G) posteriors theta_g p(x | g) / sum_g', stabilized with log-sum-exp."""
    if x.ndim == 2:
        return posterior(x[None], r[None], gmm)[0]
    log_joint = np.log(gmm.theta)[None] + component_log_pdf(x, r, gmm.mu, gmm.sigma)
    post = np.exp(log_joint - logsumexp(log_joint, axis=1, keepdims=True))
    if not np.all(np.isfinite(post)):
        raise NumericError('posterior underflow')
    return post


class _PriorTerms:
    """Empirical statistics and temporal prior precision shared by one EM run."""

    def __init__(self, x, r, priors: Priors):
        n, v, t = x.shape
        self.mean = np.zeros(v)
        self.var = np.ones(v)
        for i in range(v):
            obs = x[:, i][r[:, i]]
            if obs.size:
                self.mean[i] = obs.mean()
                if obs.size > 1 and obs.var() > 1e-12:
                    self.var[i] = obs.var()
        steps = np.arange(t, dtype=np.float64)
        kt = priors.b0 * np.exp(-priors.a0 * (steps[:, None] - steps[None]) ** 2)
        kt += priors.nugget * priors.b0 * np.eye(t)
        self.kt_inv = cho_solve(cho_factor(kt), np.eye(t))
        self.kt_inv = (self.kt_inv + self.kt_inv.T) / 2.0
        self.n0 = priors.n0 * n
        self.dirichlet = priors.dirichlet

    def mean_precision(self, i):
        return self.kt_inv / self.var[i]


def map_objective(x, r, gmm: DiagGmm, terms: _PriorTerms):
    """Log posterior of the GMM parameters up to an additive constant."""
    log_joint = np.log(gmm.theta)[None] + component_log_pdf(x, r, gmm.mu, gmm.sigma)
    obj = logsumexp(log_joint, axis=1).sum()
    if terms.dirichlet > 1.0:
        obj += (terms.dirichlet - 1.0) * np.log(gmm.theta).sum()
    var = gmm.sigma ** 2
    for g in range(gmm.n_components):
        for i in range(len(terms.mean)):
            d = gmm.mu[g, i] - terms.mean[i]
            obj -= 0.5 * d @ terms.mean_precision(i) @ d
    obj -= 0.5 * terms.n0 * (np.log(var) + terms.var[None] / var).sum()
    return float(obj)


def _init_gmm(x, r, n_components, terms, rng: Rng):
    n = x.shape[0]
    picks = rng.choice(n, n_components, replace=n < n_components)
    mu = np.where(r[picks], x[picks], terms.mean[None, :, None])
    sigma = np.tile(np.sqrt(terms.var), (n_components, 1))
    return DiagGmm(np.full(n_components, 1.0 / n_components), mu, sigma)


def fit_map_em(x, r, n_components, priors: Priors, rng: Rng, max_iter=20, tol=1e-6):
    """Fit a DiagGMM by MAP expectation maximization on (N, V, T) data with mask ``r``.

    Returns the GMM, the objective trace (initial value first) and the iterations at which an
    empty component was reinitialized from a random sample.
    """
    if x.shape[0] < 1 or n_components < 1:
        raise DataError('MAP-EM needs at least one sample and one component')
    n, v, t = x.shape
    terms = _PriorTerms(x, r, priors)
    gmm = _init_gmm(x, r, n_components, terms, rng)
    x0 = np.where(r, x, 0.0)
    rf = r.astype(np.float64)
    trace = [map_objective(x, r, gmm, terms)]
    reinitialized = []
    for it in range(1, max_iter + 1):
        resp = posterior(x, r, gmm)
        nk = resp.sum(axis=0)
        theta = (nk + terms.dirichlet - 1.0) / (n + n_components * (terms.dirichlet - 1.0))
        mu = np.empty_like(gmm.mu)
        sigma = np.empty_like(gmm.sigma)
        var_old = gmm.sigma ** 2
        for g in range(n_components):
            w = np.einsum('n,nvt->vt', resp[:, g], rf)
            b = np.einsum('n,nvt->vt', resp[:, g], x0)
            for i in range(v):
                prec = terms.mean_precision(i)
                lhs = prec + np.diag(w[i] / var_old[g, i])
                rhs = prec @ np.full(t, terms.mean[i]) + b[i] / var_old[g, i]
                mu[g, i] = cho_solve(cho_factor(lhs), rhs)
            sq = np.einsum('n,nvt->v', resp[:, g], rf * (x0 - mu[g][None]) ** 2)
            denom = terms.n0 + w.sum(axis=1)
            var = np.where(denom > 0, (terms.n0 * terms.var + sq) / np.where(denom > 0, denom, 1.0), terms.var)
            sigma[g] = np.sqrt(np.maximum(var, VAR_FLOOR))
        empty = np.flatnonzero(nk < 1e-10)
        if empty.size:
            logger.warning(f'reinitializing {empty.size} empty GMM component(s) at iteration {it}')
            fresh = _init_gmm(x, r, empty.size, terms, rng)
            mu[empty] = fresh.mu
            sigma[empty] = fresh.sigma
            theta[empty] = np.maximum(theta[empty], 1.0 / (n + n_components))
            theta = theta / theta.sum()
            reinitialized.append(it)
        gmm = DiagGmm(theta, mu, sigma)
        trace.append(map_objective(x, r, gmm, terms))
        if abs(trace[-1] - trace[-2]) < tol:
            break
    return gmm, trace, reinitialized


def _fit_instance(spec):
    x, r, n_components, priors, seed, segment, variates, subset, max_iter, tol = spec
    xs, rs = x[:, variates][:, :, segment], r[:, variates][:, :, segment]
    rng = Rng(list(seed)).derive('init')
    gmm, trace, reinit = fit_map_em(xs[subset], rs[subset], n_components, priors, rng, max_iter, tol)
    return TckInstance(gmm, segment, variates, subset, priors, n_components,
                       posterior(xs, rs, gmm), trace, reinit)


def _normalize_rows(p):
    return p / np.linalg.norm(p, axis=1, keepdims=True)


def build_kernel(train: Dataset, cfg: TckConfig = None, seed=0):
    """Fit the Q x (C - 1) ensemble on ``train`` and accumulate the TCK matrix."""
    cfg = cfg or TckConfig()
    x, r = to_cube(train)
    n, v, t = x.shape
    n_min, t_lo, t_hi, v_lo, v_hi = cfg.bounds(n, v, t)
    root = Rng(seed)
    # subsets are drawn over id order so K only permutes when the samples do
    order = np.argsort(np.array(train.ids), kind='stable')
    specs = []
    for q1 in range(cfg.n_init):
        for q2 in range(2, cfg.max_components + 1):
            rng = root.derive('tck', q1, q2)
            priors = Priors.draw(rng, cfg)
            t_len = int(rng.integers(t_lo, t_hi + 1))
            start = int(rng.integers(0, t - t_len + 1))
            variates = rng.choice(v, int(rng.integers(v_lo, v_hi + 1)))
            subset = order[rng.choice(n, int(rng.integers(n_min, n + 1)))]
            specs.append((x, r, q2, priors, rng.entropy, np.arange(start, start + t_len), variates, subset,
                          cfg.max_iter, cfg.tol))
    logger.info(f'building TCK: {len(specs)} GMMs on N={n}, V={v}, T={t}')
    disable = progress_disabled()
    if cfg.n_jobs > 1:
        with ProcessPoolExecutor(max_workers=cfg.n_jobs) as pool:
            instances = list(tqdm(pool.map(_fit_instance, specs), total=len(specs), disable=disable))
    else:
        instances = [_fit_instance(s) for s in tqdm(specs, disable=disable)]
    k = np.zeros((n, n))
    for inst in instances:
        p = _normalize_rows(inst.posteriors)
        k += p @ p.T
    k = (k + k.T) / 2.0
    model = TckModel(instances, cfg.n_init, cfg.max_components, train.ids, v, t)
    return model, KernelMatrix(k, train.ids)


def instance_posteriors(inst: TckInstance, x, r):
    xs, rs = x[:, inst.variates][:, :, inst.segment], r[:, inst.variates][:, :, inst.segment]
    return posterior(xs, rs, inst.gmm)


def instance_embeddings(model: TckModel, ds: Dataset):
    """Row-normalized posteriors of ``ds`` under every ensemble member.

    Segments running past the end of a shorter sample are clipped: the absent steps
    count as missing.
    """
    if ds.n_variates != model.n_variates:
        raise DataError(f'model has {model.n_variates} variates, new data has {ds.n_variates}')
    x, r = to_cube(ds, max(ds.t_max, model.t_max))
    lengths = ds.lengths
    clipped = sum(int(np.sum(lengths <= inst.segment[-1])) for inst in model.instances)
    if clipped:
        logger.warning(f'{clipped} (sample, GMM) pairs use a segment clipped to the sample length')
    return [_normalize_rows(instance_posteriors(inst, x, r)) for inst in model.instances]


def kernel_out_of_sample(model: TckModel, new: Dataset, train: Dataset = None):
    """(N_new, N_train) kernel block between ``new`` samples and the training samples."""
    if train is not None and train.ids != model.train_ids:
        raise DataError('training dataset does not match the one the TCK model was fit on')
    block = np.zeros((len(new), len(model.train_ids)))
    for emb, inst in zip(instance_embeddings(model, new), model.instances):
        block += emb @ _normalize_rows(inst.posteriors).T
    return block


def kernel_between(model: TckModel, a: Dataset, b: Dataset):
    """(N_a, N_b) kernel block between two arbitrary datasets, e.g. test against test."""
    block = np.zeros((len(a), len(b)))
    for ea, eb in zip(instance_embeddings(model, a), instance_embeddings(model, b)):
        block += ea @ eb.T
    return block
