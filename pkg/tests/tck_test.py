from dataclasses import replace

import numpy as np
import pytest
from scipy.stats import norm

from src.get_data import Dataset, MtsSample, inject_missing
from src.np_implementation.data import OdeGenConfig, gen_ode
from src.np_implementation.tck import (DiagGmm, KernelMatrix, Priors, TckConfig, build_kernel, fit_map_em,
                                       instance_posteriors, kernel_between, kernel_out_of_sample, marginal_log_pdf,
                                       posterior, to_cube)
from src.numeric import Rng
from src.utils import ConfigError, DataError

SMALL = TckConfig(n_init=2, max_components=3, max_iter=10)


def _random_gmm(rng, g, v, t):
    theta = rng.uniform(0.1, 1.0, size=g)
    return DiagGmm(theta / theta.sum(), rng.normal(size=(g, v, t)), rng.uniform(0.3, 2.0, size=(g, v)))


@pytest.fixture(scope='module')
def ode_data():
    train, test = gen_ode(OdeGenConfig(n_variates=3, length=10, n_train=12, n_test=4, seed=2))
    train, _ = inject_missing(train, 0.2, seed=0)
    return train, test


def test_marginal_log_pdf_matches_gaussian_sum():
    rng = Rng(0)
    for case in range(100):
        v, t = int(rng.integers(1, 4)), int(rng.integers(1, 6))
        gmm = _random_gmm(rng, 2, v, t)
        x = rng.normal(size=(v, t))
        mask = rng.random((v, t)) > 0.3
        g = case % 2
        expected = norm.logpdf(x, gmm.mu[g], gmm.sigma[g][:, None])[mask].sum()
        assert marginal_log_pdf(x, mask, gmm, g) == pytest.approx(expected, abs=1e-9)


def test_marginal_log_pdf_fully_missing_is_zero():
    gmm = _random_gmm(Rng(1), 2, 2, 3)
    assert marginal_log_pdf(np.zeros((2, 3)), np.zeros((2, 3), dtype=bool), gmm, 1) == 0.0
    with pytest.raises(DataError):
        marginal_log_pdf(np.zeros((3, 3)), np.ones((3, 3), dtype=bool), gmm, 0)


def test_posteriors_sum_to_one():
    rng = Rng(2)
    gmm = _random_gmm(rng, 4, 2, 5)
    x = 10.0 * rng.normal(size=(7, 2, 5))
    post = posterior(x, rng.random((7, 2, 5)) > 0.2, gmm)
    assert post.shape == (7, 4)
    assert np.allclose(post.sum(axis=1), 1.0)
    assert (post >= 0).all()


def test_map_em_objective_non_decreasing(ode_data):
    x, r = to_cube(ode_data[0])
    priors = Priors(a0=0.1, b0=0.1, n0=0.05, dirichlet=1.5)
    _, trace, reinit = fit_map_em(x, r, 3, priors, Rng(0), max_iter=15, tol=0.0)
    for it in range(1, len(trace)):
        if it in reinit:
            continue
        assert trace[it] >= trace[it - 1] - 1e-8


def test_kernel_is_symmetric_psd_with_constant_diagonal(ode_data):
    train = ode_data[0]
    model, kernel = build_kernel(train, SMALL, seed=3)
    k = kernel.values
    assert k.shape == (len(train), len(train))
    assert np.allclose(k, k.T)
    assert kernel.min_eigenvalue() > -1e-8
    assert np.allclose(np.diag(k), SMALL.n_init * (SMALL.max_components - 1))
    assert len(model.instances) == 4
    assert kernel.ids == train.ids


def test_kernel_deterministic(ode_data):
    _, a = build_kernel(ode_data[0], SMALL, seed=5)
    _, b = build_kernel(ode_data[0], SMALL, seed=5)
    assert np.array_equal(a.values, b.values)


def test_out_of_sample_on_training_data_reproduces_kernel(ode_data):
    train, test = ode_data
    model, kernel = build_kernel(train, SMALL, seed=1)
    assert np.allclose(kernel_out_of_sample(model, train, train), kernel.values)
    block = kernel_out_of_sample(model, test)
    assert block.shape == (len(test), len(train))
    with pytest.raises(DataError):
        kernel_out_of_sample(model, Dataset([MtsSample.from_values(np.zeros((2, 5)))]))


def test_kernel_between_test_samples(ode_data):
    train, test = ode_data
    model, kernel = build_kernel(train, SMALL, seed=1)
    k = kernel_between(model, test, test)
    assert np.allclose(k, k.T)
    assert np.allclose(np.diag(k), len(model.instances))
    assert np.allclose(kernel_between(model, test, train), kernel_out_of_sample(model, test))


def test_infeasible_bounds_raise():
    train, _ = gen_ode(OdeGenConfig(n_variates=2, length=5, n_train=4, n_test=1))
    with pytest.raises(ConfigError):
        build_kernel(train, TckConfig(n_init=1, max_components=2, t_min=4, t_max=3))
    with pytest.raises(ConfigError):
        build_kernel(train, TckConfig(n_init=1, max_components=2, v_max=3))
    with pytest.raises(ConfigError):
        build_kernel(train, TckConfig(n_init=1, max_components=1))


def test_kernel_matrix_lookup():
    kernel = KernelMatrix(np.arange(9.0).reshape(3, 3), ['a', 'b', 'c'])
    idx = kernel.index_of(['c', 'a'])
    assert idx.tolist() == [2, 0]
    assert kernel.block(idx).tolist() == [[8.0, 6.0], [2.0, 0.0]]
    with pytest.raises(DataError):
        kernel.index_of(['z'])


def test_posterior_single_and_identical_components():
    x, mask = Rng(4).normal(size=(2, 3)), np.ones((2, 3), dtype=bool)
    single = DiagGmm(np.array([1.0]), np.zeros((1, 2, 3)), np.ones((1, 2)))
    assert posterior(x, mask, single).tolist() == [1.0]
    twins = DiagGmm(np.array([0.5, 0.5]), np.ones((2, 2, 3)), np.full((2, 2), 0.7))
    assert np.allclose(posterior(x, mask, twins), [0.5, 0.5], atol=1e-15)


def test_posterior_hand_computation_with_one_observed_cell():
    gmm = DiagGmm(np.array([0.3, 0.7]), np.array([[[0.0, 0.0]], [[1.0, 5.0]]]), np.array([[1.0], [2.0]]))
    x = np.array([[0.5, np.nan]])
    p = np.array([0.3 * norm.pdf(0.5, 0.0, 1.0), 0.7 * norm.pdf(0.5, 1.0, 2.0)])
    assert np.allclose(posterior(x, np.array([[True, False]]), gmm), p / p.sum(), atol=1e-14)


def test_single_component_em_has_closed_form():
    x = Rng(5).normal(size=(20, 2, 4))
    r = np.ones_like(x, dtype=bool)
    vague = Priors(a0=1e3, b0=1e8, n0=1e-12, dirichlet=1.0)
    gmm, _, _ = fit_map_em(x, r, 1, vague, Rng(0), max_iter=5, tol=0.0)
    mean = x.mean(axis=0)
    assert np.allclose(gmm.mu[0], mean, atol=1e-6)
    assert np.allclose(gmm.sigma[0] ** 2, ((x - mean) ** 2).mean(axis=(0, 2)), rtol=1e-6)
    assert gmm.theta.tolist() == [1.0]


def test_all_missing_em_returns_prior_means():
    x = Rng(6).normal(size=(8, 2, 5))
    r = np.zeros_like(x, dtype=bool)
    gmm, _, reinit = fit_map_em(x, r, 3, Priors(a0=0.1, b0=0.1, n0=0.05, dirichlet=1.5), Rng(0), max_iter=5)
    assert reinit == []
    assert np.allclose(gmm.mu, 0.0)
    assert np.allclose(gmm.sigma, 1.0)
    assert np.allclose(gmm.theta, 1.0 / 3)


def test_identical_posteriors_give_constant_kernel():
    blank = Dataset([MtsSample.from_values(np.full((2, 6), np.nan), sample_id=f's{i}') for i in range(5)])
    model, kernel = build_kernel(blank, SMALL, seed=0)
    assert np.allclose(kernel.values, len(model.instances))


def test_all_missing_new_sample_gets_mixture_weights(ode_data):
    train = ode_data[0]
    model, _ = build_kernel(train, SMALL, seed=2)
    x, r = to_cube(Dataset([MtsSample.from_values(np.full((3, model.t_max), np.nan))]), model.t_max)
    for inst in model.instances:
        assert np.allclose(instance_posteriors(inst, x, r)[0], inst.gmm.theta, atol=1e-12)
    j = 3
    block = kernel_out_of_sample(model, train.subset([j]))
    assert block[0, j] >= block[0].max() - 1e-12


def test_kernel_permutes_with_sample_order(ode_data):
    train = ode_data[0]
    perm = Rng(7).permutation(len(train))
    _, kernel = build_kernel(train, SMALL, seed=4)
    _, shuffled = build_kernel(train.subset(perm), SMALL, seed=4)
    assert shuffled.ids == [train.ids[i] for i in perm]
    assert np.max(np.abs(shuffled.values - kernel.values[np.ix_(perm, perm)])) < 1e-9


def test_parallel_fit_reproduces_kernel(ode_data):
    _, serial = build_kernel(ode_data[0], SMALL, seed=6)
    _, parallel = build_kernel(ode_data[0], replace(SMALL, n_jobs=2), seed=6)
    assert np.allclose(serial.values, parallel.values, rtol=0.0, atol=1e-12)
