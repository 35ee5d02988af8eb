import warnings

import numpy as np
import pytest

from chimera_bm.evaluation import (
    ModeHistogram, boltzmann_fit, kl_over_modes, ll_ratio, mode_histogram, mode_index,
)
from chimera_bm.evaluation import test_log_likelihood as log_likelihood
from chimera_bm.exact import exact_marginals, exact_mode_probabilities, exact_sample, log_partition
from chimera_bm.fcl import enumerate_cluster_minima, fcl_spec, make_fcl, make_random_pm1
from chimera_bm.graph import build_chimera
from chimera_bm.ising import IsingModel, SampleSet
from chimera_bm.samplers import random_states
from oracles import enumerate_distribution


def _c1(seed, scale=0.5):
    rng = np.random.default_rng(seed)
    g = build_chimera(1)
    return IsingModel(g, scale * rng.normal(size=8), scale * rng.normal(size=16))


def _fcl1():
    m = make_fcl(1)
    return m, enumerate_cluster_minima(m, fcl_spec(1))


def test_mode_index_exact_matching():
    rng = np.random.default_rng(0)
    configs = rng.choice([-1, 1], size=(50, 130)).astype(np.int8)
    states = np.concatenate([configs[::-1], rng.choice([-1, 1], size=(20, 130)).astype(np.int8)])
    idx = mode_index(states, configs)
    assert np.array_equal(idx[:50], np.arange(49, -1, -1))
    assert (idx[50:] == -1).all()


def test_histogram_of_catalog_states():
    m, cat = _fcl1()
    h = mode_histogram(SampleSet(m.graph, cat.configs), cat)
    assert np.allclose(h.probs, 1 / 16) and h.other_mass == 0
    assert abs(h.probs.sum() + h.other_mass - 1) < 1e-12


def test_histogram_random_states_mostly_other():
    m, cat = _fcl1()
    h = mode_histogram(SampleSet(m.graph, random_states(m, 10_000, 0)), cat)
    assert h.other_mass > 0.999


def test_histogram_exact_samples_fcl1():
    m, cat = _fcl1()
    p = exact_mode_probabilities(m, 1.0, cat.configs)
    h = mode_histogram(exact_sample(m, 1.0, 100_000, 1), cat)
    assert (np.abs(h.probs - p) < 3.5 * np.sqrt(p * (1 - p) / 1e5)).all()


def test_kl_over_modes_properties():
    p = np.array([0.5, 0.3, 0.2])
    exact_hist = ModeHistogram(np.array([500_000, 300_000, 200_000]), 1_000_000)
    assert kl_over_modes(p, exact_hist) < 1e-12
    rng = np.random.default_rng(1)
    for _ in range(50):
        counts = rng.integers(0, 100, size=3)
        assert kl_over_modes(p, ModeHistogram(counts, int(counts.sum()) + 5)) >= 0
    # exact zero contributes nothing; empty empirical mode stays finite after smoothing
    assert np.isfinite(kl_over_modes([0.5, 0.5, 0.0], ModeHistogram(np.array([10, 0, 5]), 15)))


def test_ll_ratio_identity_and_enumeration():
    m = _c1(2)
    test = exact_sample(m, 1.0, 50_000, 3)
    assert ll_ratio(m, m, test) == 0.0
    J = m.J.copy()
    J[0] += 0.5
    m2 = IsingModel(m.graph, m.h, J)
    _, p, _, _ = enumerate_distribution(m)
    _, q, _, _ = enumerate_distribution(m2)
    kl = float(np.sum(p * np.log(p / q)))
    # sampling error of the per-sample log ratio
    from chimera_bm.ising import energy

    d = energy(m2, test.spins) - energy(m, test.spins)
    assert abs(ll_ratio(m, m2, test) - kl) < 4 * d.std() / np.sqrt(len(test))


def test_ll_ratio_nonnegative_on_average():
    m = _c1(4)
    test = exact_sample(m, 1.0, 20_000, 5)
    rng = np.random.default_rng(6)
    vals = []
    for _ in range(20):
        vals.append(ll_ratio(m, m.with_theta(m.theta + 0.2 * rng.normal(size=m.num_params)), test))
    assert np.mean(vals) >= -3 * np.std(vals) / np.sqrt(20)


def test_mean_log_likelihood():
    g = build_chimera(1)
    s = exact_sample(IsingModel.zeros(g), 1.0, 10, 0)
    assert np.isclose(log_likelihood(IsingModel.zeros(g), s), -8 * np.log(2))
    m = _c1(7)
    S, p, log_Z, _ = enumerate_distribution(m)
    test = SampleSet(g, S[:50])
    np.testing.assert_allclose(log_likelihood(m, test), np.mean(np.log(p[:50])), rtol=1e-12)
    own = exact_sample(m, 1.0, 50_000, 8)
    base = log_likelihood(m, own)
    rng = np.random.default_rng(9)
    for _ in range(10):
        J = m.J.copy()
        J[rng.integers(16)] += rng.choice([-0.3, 0.3])
        assert base >= log_likelihood(IsingModel(g, m.h, J), own)


def test_boltzmann_fit_recovers_marginals():
    m = _c1(10)
    s = exact_sample(m, 1.0, 100_000, 11)
    fit = boltzmann_fit(s)
    assert fit.status == "converged"
    mg = exact_marginals(m).vector
    sigma = np.sqrt(np.maximum(1 - mg**2, 1e-12) / len(s))
    assert (np.abs(exact_marginals(fit.model).vector - mg) < 4 * sigma + 1e-3).all()
    # refit on samples of the fitted model: moments still match within sampling error
    s2 = exact_sample(fit.model, 1.0, 100_000, 12)
    refit = boltzmann_fit(s2)
    assert np.abs(exact_marginals(refit.model).vector - s2.stats().vector).max() < 2e-3


def test_boltzmann_fit_degenerate_samples_are_capped():
    g = build_chimera(1)
    s = SampleSet(g, np.ones((100, 8), dtype=np.int8))
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        fit = boltzmann_fit(s, bound=30.0)
    assert fit.status == "bounded" and np.abs(fit.model.theta).max() <= 30.0


def test_ll_ratio_batch_split_error_small():
    m = make_random_pm1(3, 0).scaled(0.5)
    test = exact_sample(m, 1.0, 100_000, 13)
    m2 = m.with_theta(m.theta * 0.9)
    lz, lz2 = log_partition(m), log_partition(m2)
    parts = [ll_ratio(m, m2, test.take(slice(i, None, 10)), log_Z_true=lz) for i in range(10)]
    assert np.std(parts) / np.sqrt(10) < 0.005
    assert np.isclose(np.mean(parts), ll_ratio(m, m2, test), atol=1e-12) and np.isfinite(lz2)


def test_graph_mismatch():
    with pytest.raises(ValueError):
        ll_ratio(_c1(0), IsingModel.zeros(build_chimera(2)), exact_sample(_c1(0), 1.0, 10, 0))
