"""Transverse-field Ising quantum Boltzmann distribution at small scale.

The Hamiltonian is ``beta * diag(E(s)) + beta * sum_i gamma_i X_i`` over the
2^n computational states (state index bit ``n-1-i`` is qubit i, bit 1 means
spin +1). The probability of a classical state is the corresponding diagonal
entry of ``exp(-H) / trace(exp(-H))``, computed by dense spectral
decomposition.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .exact import ResourceLimitError
from .graph import ChimeraGraph
from .ising import IsingModel, SufficientStats, energy, enumerate_states, phi

QUANTUM_CAP = 12


@dataclass(frozen=True, eq=False)
class ClusterReduction:
    """One effective qubit per cluster of spins that always flip together.

    ``clusters`` holds node positions; every active node must belong to
    exactly one cluster. Effective state ``a`` (a +-1 vector over clusters)
    expands to the configuration with every spin of cluster k set to ``a_k``.
    """

    graph: ChimeraGraph
    clusters: tuple

    def __post_init__(self):
        cl = tuple(np.asarray(c, dtype=np.int64) for c in self.clusters)
        allpos = np.sort(np.concatenate(cl)) if cl else np.empty(0, dtype=np.int64)
        if not np.array_equal(allpos, np.arange(self.graph.num_nodes)):
            raise ValueError("clusters must partition the graph's nodes")
        object.__setattr__(self, "clusters", cl)

    @property
    def n_qubits(self) -> int:
        return len(self.clusters)

    def expand(self, assignments) -> np.ndarray:
        a = np.atleast_2d(np.asarray(assignments, dtype=np.int8))
        out = np.empty((len(a), self.graph.num_nodes), dtype=np.int8)
        for k, pos in enumerate(self.clusters):
            out[:, pos] = a[:, k:k + 1]
        return out

    def configs(self) -> np.ndarray:
        return self.expand(enumerate_states(self.n_qubits))


@dataclass(frozen=True, eq=False)
class TransverseHamiltonian:
    n_qubits: int
    diag: np.ndarray  # E(s) per computational state, unscaled
    gamma: np.ndarray  # per-qubit transverse amplitude
    beta: float

    def matrix(self) -> np.ndarray:
        dim = 1 << self.n_qubits
        H = np.diag(self.beta * self.diag)
        idx = np.arange(dim)
        for i in range(self.n_qubits):
            H[idx, idx ^ (1 << (self.n_qubits - 1 - i))] = self.beta * self.gamma[i]
        return H


@dataclass(frozen=True, eq=False)
class DiagonalDistribution:
    probs: np.ndarray
    log_Zbar: float


def _state_space(model: IsingModel, cap: int, reduction: ClusterReduction | None) -> np.ndarray:
    if reduction is not None:
        if not reduction.graph.same_as(model.graph):
            raise ValueError("cluster reduction is for a different graph")
        n = reduction.n_qubits
    else:
        n = model.graph.num_nodes
    if n > cap:
        raise ResourceLimitError(f"{n} qubits exceeds the dense quantum cap of {cap}")
    return reduction.configs() if reduction is not None else enumerate_states(n)


def build_hamiltonian(model: IsingModel, gamma, beta: float = 1.0, *, cap: int = QUANTUM_CAP,
                      reduction: ClusterReduction | None = None) -> TransverseHamiltonian:
    configs = _state_space(model, cap, reduction)
    n = int(np.log2(len(configs)))
    g = np.broadcast_to(np.asarray(gamma, dtype=np.float64), (n,)).copy()
    if (g < 0).any():
        raise ValueError("gamma must be nonnegative")
    return TransverseHamiltonian(n, np.atleast_1d(energy(model, configs)), g, float(beta))


def quantum_diagonal_distribution(H: TransverseHamiltonian) -> DiagonalDistribution:
    if not H.gamma.any():
        lw = -H.beta * H.diag
        m = lw.max()
        w = np.exp(lw - m)
        return DiagonalDistribution(w / w.sum(), float(m + np.log(w.sum())))
    try:
        w, U = np.linalg.eigh(H.matrix())
    except np.linalg.LinAlgError as err:
        raise FloatingPointError(
            f"eigensolver failed for {H.n_qubits} qubits, beta={H.beta}, "
            f"gamma range [{H.gamma.min()}, {H.gamma.max()}]: {err}") from err
    wmin = w[0]
    diag = (U * U) @ np.exp(-(w - wmin))
    total = diag.sum()
    return DiagonalDistribution(np.clip(diag / total, 0, None), float(-wmin + np.log(total)))


def quantum_distribution(model: IsingModel, gamma, beta: float = 1.0, *, cap: int = QUANTUM_CAP,
                         reduction: ClusterReduction | None = None) -> DiagonalDistribution:
    return quantum_diagonal_distribution(build_hamiltonian(model, gamma, beta, cap=cap, reduction=reduction))


def quantum_stats(model: IsingModel, gamma, beta: float = 1.0, *, cap: int = QUANTUM_CAP,
                  reduction: ClusterReduction | None = None) -> tuple[SufficientStats, float]:
    """Exact ``E_P0[phi]`` under the diagonal distribution, and ``ln Zbar``."""
    configs = _state_space(model, cap, reduction)
    dist = quantum_distribution(model, gamma, beta, cap=cap, reduction=reduction)
    mean = dist.probs @ phi(model.graph, configs)
    return SufficientStats.from_vector(model.graph, mean, 0), dist.log_Zbar


def quantum_gradient_datum(model: IsingModel, data_stats: SufficientStats, gamma, beta: float = 1.0, *,
                           cap: int = QUANTUM_CAP, reduction: ClusterReduction | None = None,
                           mask=None) -> np.ndarray:
    """Gradient of the bound ``-beta <theta, E_D phi> - ln Zbar`` with respect to theta.

    Equals ``beta * (-E_D[phi] + E_P0[phi])``; at beta = 1 this is the
    moment difference used with raw (k = 0) sampler statistics.
    """
    stats, _ = quantum_stats(model, gamma, beta, cap=cap, reduction=reduction)
    g = beta * (stats.vector - data_stats.vector)
    if mask is not None:
        g = np.where(mask, g, 0.0)
    return g


def golden_thompson_bound(model: IsingModel, data_stats: SufficientStats, gamma, beta: float = 1.0, *,
                          cap: int = QUANTUM_CAP, reduction: ClusterReduction | None = None) -> float:
    _, log_Zbar = quantum_stats(model, gamma, beta, cap=cap, reduction=reduction)
    return float(-beta * model.theta @ data_stats.vector - log_Zbar)


def quantum_log_likelihood(model: IsingModel, data_probs, gamma, beta: float = 1.0, *,
                           cap: int = QUANTUM_CAP, reduction: ClusterReduction | None = None) -> float:
    """``sum_s P_D(s) ln rho_ss`` for a data distribution over the state space."""
    dist = quantum_distribution(model, gamma, beta, cap=cap, reduction=reduction)
    p = np.asarray(data_probs, dtype=np.float64)
    nz = p > 0
    with np.errstate(divide="ignore"):
        return float(p[nz] @ np.log(dist.probs[nz]))
