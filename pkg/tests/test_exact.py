import numpy as np
import pytest
from scipy import stats

from chimera_bm.exact import (
    ResourceLimitError, enumerate_log_partition, exact_marginals, exact_mode_probabilities, exact_sample,
    log_partition,
)
from chimera_bm.fcl import enumerate_cluster_minima, fcl_spec, make_fcl, make_random_pm1
from chimera_bm.graph import build_chimera
from chimera_bm.ising import IsingModel, energy, enumerate_states, sufficient_stats
from oracles import enumerate_distribution, random_masked_model


def _random_c1(seed, scale=1.0):
    rng = np.random.default_rng(seed)
    g = build_chimera(1)
    return IsingModel(g, scale * rng.normal(size=8), scale * rng.normal(size=16))


def test_isolated_spins():
    g = build_chimera(2)
    sub = g.subgraph(g.nodes[:5], [])
    assert np.isclose(log_partition(IsingModel.zeros(sub)), 5 * np.log(2), rtol=1e-14)


def test_single_edge():
    g = build_chimera(1).subgraph([0, 4], [(0, 4)])
    m = IsingModel(g, [0, 0], [1.0])
    assert np.isclose(log_partition(m, 1.0), np.log(2 * np.e + 2 / np.e), rtol=1e-14)


@pytest.mark.parametrize("seed", range(5))
def test_c1_matches_enumeration(seed):
    m = _random_c1(seed)
    S, p, log_Z, mean_phi = enumerate_distribution(m, 0.8)
    assert abs(log_partition(m, 0.8) / log_Z - 1) < 1e-12
    mg = exact_marginals(m, 0.8)
    np.testing.assert_allclose(mg.vector, mean_phi, atol=1e-12)
    np.testing.assert_allclose(exact_mode_probabilities(m, 0.8, S[:20]), p[:20], rtol=1e-11)


def test_masked_oracle_and_order_independence():
    rng = np.random.default_rng(123)
    for _ in range(100):
        m = random_masked_model(rng)
        beta = float(rng.uniform(0.1, 2.0))
        _, _, log_Z, mean_phi = enumerate_distribution(m, beta)
        col = log_partition(m, beta)
        row = log_partition(m, beta, order="row")
        assert abs(col - log_Z) <= 1e-10 * abs(log_Z)
        assert abs(col - row) <= 1e-10 * max(1.0, abs(col))
        np.testing.assert_allclose(exact_marginals(m, beta).vector, mean_phi, atol=1e-10)


@pytest.mark.parametrize("domain", ["linear", "log"])
def test_domains_agree(domain):
    m = make_random_pm1(3, 4)
    ref = log_partition(m, 1.0, domain="log")
    assert abs(log_partition(m, 1.0, domain=domain) - ref) < 1e-9 * abs(ref)
    np.testing.assert_allclose(exact_marginals(m, 1.0, domain=domain).vector,
                               exact_marginals(m, 1.0, domain="log").vector, atol=1e-10)


def test_order_independence_c3():
    m = make_random_pm1(3, 2)
    assert abs(log_partition(m, 1.0) - log_partition(m, 1.0, order="row")) < 1e-10 * abs(log_partition(m, 1.0))
    np.testing.assert_allclose(exact_marginals(m, order="row").vector, exact_marginals(m).vector, atol=1e-10)


def test_large_energies_stay_finite():
    m = make_fcl(1).scaled(4.0)  # beta |E| around 650
    lz = log_partition(m, 1.0)
    cat = enumerate_cluster_minima(make_fcl(1), fcl_spec(1))
    assert np.isfinite(lz) and lz > -energy(m, cat.configs).min()


def test_zero_model_and_ferro_pair():
    mg = exact_marginals(IsingModel.zeros(build_chimera(2)))
    assert np.allclose(mg.node_marg, 0.5) and np.allclose(mg.edge_marg, 0)
    g = build_chimera(1).subgraph([0, 4], [(0, 4)])
    assert abs(exact_marginals(IsingModel(g, [0, 0], [-10.0])).edge_marg[0] - 1) < 1e-8


def test_marginal_consistency_bounds():
    rng = np.random.default_rng(5)
    for _ in range(20):
        m = random_masked_model(rng, scale=2.0)
        mg = exact_marginals(m)
        assert ((mg.node_marg >= 0) & (mg.node_marg <= 1)).all()
        u, v = m.graph.edge_index.T
        a, b = mg.node_mean[u], mg.node_mean[v]
        # Frechet bounds on a pair of +-1 variables with given means
        assert (mg.edge_marg >= np.abs(a + b) - 1 - 1e-12).all()
        assert (mg.edge_marg <= 1 - np.abs(a - b) + 1e-12).all()


def test_resource_limit():
    with pytest.raises(ResourceLimitError):
        log_partition(IsingModel.zeros(build_chimera(6)))
    with pytest.raises(ResourceLimitError):
        log_partition(IsingModel.zeros(build_chimera(3)), max_n=2)


def test_sampling_chi_square_c1():
    m = _random_c1(9, scale=0.5)
    S, p, _, _ = enumerate_distribution(m)
    s = exact_sample(m, 1.0, 100_000, 3)
    idx = ((s.spins > 0).astype(np.int64) @ (1 << np.arange(7, -1, -1)))
    counts = np.bincount(idx, minlength=256)
    # pool sparse cells so expected counts are at least 5
    order = np.argsort(p)
    exp = p[order] * len(s)
    obs = counts[order]
    cut = np.searchsorted(np.cumsum(exp), 5)
    exp = np.concatenate([[exp[: cut + 1].sum()], exp[cut + 1:]])
    obs = np.concatenate([[obs[: cut + 1].sum()], obs[cut + 1:]])
    assert stats.chisquare(obs, exp).pvalue > 0.001


def test_sampling_zero_model_and_determinism():
    g = build_chimera(1)
    s = exact_sample(IsingModel.zeros(g), 1.0, 100_000, 0)
    freq = (s.spins > 0).mean(axis=0)
    assert (np.abs(freq - 0.5) < 5 * np.sqrt(0.25 / 1e5)).all()
    m = make_random_pm1(3, 1)
    assert np.array_equal(exact_sample(m, 1.0, 1000, 5).spins, exact_sample(m, 1.0, 1000, 5).spins)
    assert not np.array_equal(exact_sample(m, 1.0, 1000, 5).spins, exact_sample(m, 1.0, 1000, 6).spins)


def test_sample_stats_converge_c3():
    m = make_random_pm1(3, 0).scaled(0.4)
    mg = exact_marginals(m)
    s = exact_sample(m, 1.0, 50_000, 1)
    err = np.abs(s.stats().vector - mg.vector)
    sigma = np.sqrt(np.maximum(1 - mg.vector**2, 1e-12) / len(s))
    assert (err < 5 * sigma + 1e-9).all()


def test_fcl1_mode_probabilities():
    m = make_fcl(1)
    cat = enumerate_cluster_minima(m, fcl_spec(1))
    p = exact_mode_probabilities(m, 1.0, cat.configs)
    ground, excited = p[cat.ground], p[~cat.ground]
    assert np.allclose(ground, ground[0], rtol=1e-12) and np.allclose(excited, excited[0], rtol=1e-12)
    assert np.isclose(ground[0] / excited[0], np.exp(4.0), rtol=1e-10)
    s = exact_sample(m, 1.0, 100_000, 2)
    from chimera_bm.evaluation import mode_histogram

    hist = mode_histogram(s, cat)
    sigma = np.sqrt(p * (1 - p) / len(s))
    assert (np.abs(hist.probs - p) < 3.5 * sigma).all()


def test_cache_roundtrip(tmp_path, monkeypatch):
    monkeypatch.setenv("CHIMERA_BM_CACHE", str(tmp_path))
    m = _random_c1(1)
    a = exact_marginals(m)
    b = exact_marginals(m)
    assert a.log_Z == b.log_Z and np.array_equal(a.vector, b.vector)
    assert len(list(tmp_path.iterdir())) == 1


def test_enumerate_log_partition_helper():
    m = _random_c1(2)
    assert np.isclose(enumerate_log_partition(m), log_partition(m), rtol=1e-13)
    assert sufficient_stats(m.graph, enumerate_states(8)).count == 256
