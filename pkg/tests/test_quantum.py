import numpy as np
import pytest
from scipy.linalg import expm

from chimera_bm.exact import ResourceLimitError, exact_marginals, log_partition
from chimera_bm.graph import build_chimera
from chimera_bm.ising import IsingModel, SufficientStats, energy, enumerate_states, phi
from chimera_bm.quantum import (
    ClusterReduction, build_hamiltonian, golden_thompson_bound, quantum_diagonal_distribution,
    quantum_distribution, quantum_gradient_datum, quantum_log_likelihood, quantum_stats,
)


def _small_model(rng, k, scale=1.0):
    g = build_chimera(1)
    nodes = np.sort(rng.choice(8, size=k, replace=False))
    sub = g.subgraph(nodes)
    return IsingModel(sub, scale * rng.normal(size=sub.num_nodes), scale * rng.normal(size=sub.num_edges))


def test_one_qubit_matrix():
    g = build_chimera(1).subgraph([0], [])
    H = build_hamiltonian(IsingModel(g, [0.7], []), 0.3, 2.0).matrix()
    # state 0 is spin -1, state 1 is spin +1
    np.testing.assert_allclose(H, 2.0 * np.array([[-0.7, 0.3], [0.3, 0.7]]))


def test_one_qubit_closed_form():
    g = build_chimera(1).subgraph([0], [])
    dist = quantum_distribution(IsingModel(g, [1.0], []), 1.0, 1.0)
    lam = np.sqrt(2.0)
    # eigenvectors of [[-1, 1], [1, 1]]
    w, U = np.linalg.eigh(np.array([[-1.0, 1.0], [1.0, 1.0]]))
    assert np.allclose(w, [-lam, lam])
    diag = U[:, 0] ** 2 * np.exp(lam) + U[:, 1] ** 2 * np.exp(-lam)
    np.testing.assert_allclose(dist.probs, diag / diag.sum(), atol=1e-14)
    assert np.isclose(dist.log_Zbar, np.log(2 * np.cosh(lam)))


def test_hamiltonian_structure():
    rng = np.random.default_rng(0)
    m = _small_model(rng, 5)
    H = build_hamiltonian(m, 0.4, 1.3).matrix()
    assert np.allclose(H, H.T)
    off = H - np.diag(np.diag(H))
    assert np.count_nonzero(off) == 5 * 2**5
    S = enumerate_states(5)
    i, j = np.nonzero(off)
    assert ((S[i] != S[j]).sum(axis=1) == 1).all()
    H0 = build_hamiltonian(m, 0.0, 1.0).matrix()
    assert np.array_equal(H0, np.diag(energy(m, S)))


def test_matches_expm_oracle():
    rng = np.random.default_rng(1)
    m = _small_model(rng, 4)
    H = build_hamiltonian(m, 0.7, 0.9)
    rho = expm(-H.matrix())
    dist = quantum_diagonal_distribution(H)
    np.testing.assert_allclose(dist.probs, np.diag(rho) / np.trace(rho), atol=1e-12)
    assert np.isclose(dist.log_Zbar, np.log(np.trace(rho)))


def test_gamma_zero_is_classical():
    rng = np.random.default_rng(2)
    for _ in range(10):
        m = _small_model(rng, 6, scale=2.0)
        p = quantum_distribution(m, 0.0, 1.7).probs
        lw = -1.7 * energy(m, enumerate_states(6))
        q = np.exp(lw - lw.max())
        q /= q.sum()
        assert 0.5 * np.abs(p - q).sum() < 1e-10
        assert np.isclose(quantum_distribution(m, 0.0, 1.7).log_Zbar, log_partition(m, 1.7), rtol=1e-12)
    # full eigensolver path at vanishing gamma
    d = quantum_distribution(m, 1e-6, 1.7)
    assert 0.5 * np.abs(d.probs - q).sum() < 1e-4


def test_gradient_finite_differences():
    rng = np.random.default_rng(3)
    for _ in range(3):
        m = _small_model(rng, 6)
        stats, _ = quantum_stats(m, 0.6, 1.0)
        theta = m.theta
        eps = 1e-5
        for i in range(len(theta)):
            e = np.zeros_like(theta)
            e[i] = eps
            up = quantum_distribution(m.with_theta(theta + e), 0.6, 1.0).log_Zbar
            dn = quantum_distribution(m.with_theta(theta - e), 0.6, 1.0).log_Zbar
            assert abs(-(up - dn) / (2 * eps) - stats.vector[i]) < 1e-6


def test_gradient_gamma_zero_is_classical():
    rng = np.random.default_rng(4)
    m = _small_model(rng, 6)
    data = SufficientStats.from_vector(m.graph, rng.uniform(-1, 1, m.num_params), 10)
    g = quantum_gradient_datum(m, data, 0.0, 1.0)
    np.testing.assert_allclose(g, exact_marginals(m).vector - data.vector, atol=1e-12)


def test_golden_thompson_bound_direction():
    rng = np.random.default_rng(5)
    for _ in range(100):
        k = int(rng.integers(2, 6))
        m = _small_model(rng, k, scale=float(rng.uniform(0.2, 2.0)))
        gamma = float(rng.uniform(0.05, 2.0))
        dist = quantum_distribution(m, gamma, 1.0)
        data = SufficientStats.from_vector(m.graph, dist.probs @ phi(m.graph, enumerate_states(k)), 0)
        bound = golden_thompson_bound(m, data, gamma, 1.0)
        exact = quantum_log_likelihood(m, dist.probs, gamma, 1.0)
        assert bound <= exact + 1e-12


def test_flip_symmetry_with_zero_field():
    rng = np.random.default_rng(6)
    m = _small_model(rng, 6)
    m = IsingModel(m.graph, np.zeros(m.graph.num_nodes), m.J)
    p = quantum_distribution(m, 0.8, 1.0).probs
    np.testing.assert_allclose(p, p[::-1], atol=1e-14)
    assert abs(p.sum() - 1) < 1e-10


def test_reduced_toy_deviates_from_boltzmann():
    # two clusters of two spins each, strong and weak
    g = build_chimera(1).subgraph([0, 1, 4, 5], [(0, 4), (1, 5), (0, 5)])
    m = IsingModel(g, [0.1, 0, 0, 0], [-2.5, -1.5, 0.3])
    red = ClusterReduction(g, ((0, 2), (1, 3)))
    q = quantum_distribution(m, 0.5, 1.0, reduction=red).probs
    c = quantum_distribution(m, 0.0, 1.0, reduction=red).probs
    kl = float(np.sum(c * np.log(c / q)))
    assert kl > 0


def test_moment_matching_training_4_qubits():
    rng = np.random.default_rng(7)
    m_true = _small_model(rng, 4, scale=0.7)
    data = exact_marginals(m_true).stats()
    theta = np.zeros(m_true.num_params)
    for _ in range(3000):
        g = quantum_gradient_datum(m_true.with_theta(theta), data, 0.5, 1.0)
        theta = theta + 0.5 * g
        if np.abs(g).max() < 1e-7:
            break
    stats, _ = quantum_stats(m_true.with_theta(theta), 0.5, 1.0)
    assert np.abs(stats.vector - data.vector).max() < 1e-6


def test_cap_and_validation():
    m = IsingModel.zeros(build_chimera(2))
    with pytest.raises(ResourceLimitError):
        build_hamiltonian(m, 0.5, 1.0)
    g = build_chimera(1)
    with pytest.raises(ValueError):
        ClusterReduction(g, ((0, 1),))
    with pytest.raises(ValueError):
        build_hamiltonian(IsingModel.zeros(g), -1.0, 1.0)


def test_per_qubit_gamma_override():
    rng = np.random.default_rng(8)
    m = _small_model(rng, 3)
    a = quantum_distribution(m, [0.5, 0.5, 0.5], 1.0).probs
    b = quantum_distribution(m, 0.5, 1.0).probs
    np.testing.assert_array_equal(a, b)
    c = quantum_distribution(m, [0.5, 0.0, 0.5], 1.0).probs
    assert not np.allclose(a, c)
