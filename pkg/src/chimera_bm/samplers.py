"""Blocked Gibbs dynamics, annealed MCMC, seeded chains and stand-in hardware samplers."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import gibbs
from .exact import ResourceLimitError, exact_sample
from .ising import IsingModel, SampleSet, apply_flips, gauge_transform
from .quantum import QUANTUM_CAP, ClusterReduction, build_hamiltonian, quantum_diagonal_distribution, _state_space


@dataclass(frozen=True)
class AnnealSchedule:
    betas: np.ndarray
    sweeps_per_beta: int = 10

    def __post_init__(self):
        b = np.atleast_1d(np.asarray(self.betas, dtype=np.float64))
        if b.size == 0 or not np.isfinite(b).all() or (b < 0).any():
            raise ValueError("schedule needs a nonempty list of finite nonnegative betas")
        if (np.diff(b) < 0).any():
            raise ValueError("schedule betas must be nondecreasing")
        if self.sweeps_per_beta < 1:
            raise ValueError("sweeps_per_beta must be positive")
        b.setflags(write=False)
        object.__setattr__(self, "betas", b)

    @classmethod
    def linear(cls, beta_min: float = 0.01, beta_max: float = 1.0, steps: int = 1000,
               sweeps_per_beta: int = 10) -> "AnnealSchedule":
        return cls(np.linspace(beta_min, beta_max, steps), sweeps_per_beta)

    @property
    def per_sweep(self) -> np.ndarray:
        return np.repeat(self.betas, self.sweeps_per_beta)


@dataclass(frozen=True)
class SurrogateConfig:
    mode: str = "ideal"
    beta_hw: float = 2.5
    sigma_h: float = 0.03
    sigma_j: float = 0.025
    gauge_count: int = 100
    gamma: float = 0.5
    quantum_cap: int = QUANTUM_CAP

    def __post_init__(self):
        if self.mode not in ("ideal", "noisy", "quantum"):
            raise ValueError(f"unknown surrogate mode {self.mode!r}")
        if self.beta_hw <= 0 or self.sigma_h < 0 or self.sigma_j < 0 or self.gamma < 0:
            raise ValueError("surrogate beta_hw must be positive and noise/gamma nonnegative")
        if self.gauge_count < 1:
            raise ValueError("gauge_count must be positive")


@dataclass
class _Kernel:
    order: np.ndarray
    indptr: np.ndarray
    nbr: np.ndarray
    wts: np.ndarray
    h: np.ndarray


def _kernel(model: IsingModel) -> _Kernel:
    g = model.graph
    N = g.num_nodes
    u, v = g.edge_index.T
    src = np.concatenate([u, v])
    dst = np.concatenate([v, u])
    w = np.concatenate([model.J, model.J])
    perm = np.argsort(src, kind="stable")
    indptr = np.zeros(N + 1, dtype=np.int64)
    np.cumsum(np.bincount(src, minlength=N), out=indptr[1:])
    order = np.argsort(g.color, kind="stable").astype(np.int64)
    return _Kernel(order, indptr, dst[perm].astype(np.int64), w[perm].astype(np.float64),
                   np.ascontiguousarray(model.h, dtype=np.float64))


def run_sweeps(model: IsingModel, states, betas, seed: int, *, chain_offset: int = 0,
               sweep_offset: int = 0) -> np.ndarray:
    """Apply one two-block sweep per entry of ``betas`` to every chain.

    Chain c uses random stream ``(seed, chain_offset + c, sweep_offset + t)``
    for its t-th sweep.
    """
    s = np.array(states, dtype=np.int8, copy=True)
    one = s.ndim == 1
    s = np.ascontiguousarray(s.reshape(-1, model.graph.num_nodes))
    betas = np.ascontiguousarray(np.atleast_1d(betas), dtype=np.float64)
    if len(betas) and len(s):
        k = _kernel(model)
        gibbs.gibbs_sweeps(s, k.order, k.indptr, k.nbr, k.wts, k.h, betas, int(seed), int(chain_offset),
                           int(sweep_offset))
    return s[0] if one else s


def blocked_gibbs_sweep(model: IsingModel, beta: float, state, rng: int, *, sweep: int = 0,
                        chain_offset: int = 0) -> np.ndarray:
    """One sweep: color class A given B, then B given A.

    ``rng`` is the integer seed of the counter-based stream; ``sweep`` selects
    the position in that stream.
    """
    if beta < 0:
        raise ValueError("beta must be nonnegative")
    return run_sweeps(model, state, [beta], rng, chain_offset=chain_offset, sweep_offset=sweep)


def random_states(model_or_graph, n_chains: int, seed: int, *, chain_offset: int = 0) -> np.ndarray:
    g = getattr(model_or_graph, "graph", model_or_graph)
    return gibbs.random_states(int(n_chains), g.num_nodes, int(seed), int(chain_offset))


@dataclass
class ChainEnsemble:
    """Persistent chains with fixed per-chain stream ids."""

    states: np.ndarray
    seed: int
    chain_offset: int = 0
    sweeps_done: int = 0

    def advance(self, model: IsingModel, k: int, beta: float = 1.0) -> np.ndarray:
        self.states = run_sweeps(model, self.states, np.full(k, beta), self.seed,
                                 chain_offset=self.chain_offset, sweep_offset=self.sweeps_done)
        self.sweeps_done += k
        return self.states


def annealed_mcmc(model: IsingModel, schedule: AnnealSchedule, n_chains: int, seed: int) -> SampleSet:
    """Uniform random starts, then ``sweeps_per_beta`` sweeps at each beta of the schedule."""
    s = random_states(model, n_chains, seed)
    return SampleSet(model.graph, run_sweeps(model, s, schedule.per_sweep, seed))


@dataclass
class Trajectory:
    betas: np.ndarray
    mode_probs: np.ndarray  # (steps, modes)
    other: np.ndarray = field(default=None)

    def mass(self, labels) -> np.ndarray:
        return self.mode_probs[:, np.asarray(labels)].sum(axis=1)


def annealed_mcmc_trajectory(model: IsingModel, schedule: AnnealSchedule, n_chains: int, seed: int,
                             catalog) -> tuple[SampleSet, Trajectory]:
    """As :func:`annealed_mcmc`, recording catalog-mode occupation after each beta step.

    The final samples are bit-identical to :func:`annealed_mcmc` with the same arguments.
    """
    from .evaluation import mode_index

    s = random_states(model, n_chains, seed)
    spb = schedule.sweeps_per_beta
    probs = np.zeros((len(schedule.betas), len(catalog.configs)))
    other = np.zeros(len(schedule.betas))
    for j, beta in enumerate(schedule.betas):
        s = run_sweeps(model, s, np.full(spb, beta), seed, sweep_offset=j * spb)
        idx = mode_index(s, catalog.configs)
        counts = np.bincount(idx[idx >= 0], minlength=len(catalog.configs))
        probs[j] = counts / n_chains
        other[j] = 1.0 - counts.sum() / n_chains
    return SampleSet(model.graph, s), Trajectory(schedule.betas.copy(), probs, other)


def seeded_chains(model: IsingModel, seeds: SampleSet, k: int, seed: int, *, chain_offset: int = 0,
                  sweep_offset: int = 0) -> SampleSet:
    """Exactly k sweeps at beta = 1 from the given seeds (k = 0 returns them unchanged)."""
    if k < 0:
        raise ValueError("k must be nonnegative")
    if k == 0:
        return seeds
    return SampleSet(model.graph, run_sweeps(model, seeds.spins, np.ones(k), seed,
                                             chain_offset=chain_offset, sweep_offset=sweep_offset))


def _split(count: int, parts: int) -> list[int]:
    base, extra = divmod(count, parts)
    return [base + (1 if g < extra else 0) for g in range(parts)]


def surrogate_sample(model: IsingModel, config: SurrogateConfig, count: int, seed: int, *,
                     reduction: ClusterReduction | None = None) -> SampleSet:
    """Stand-in for hardware draws.

    ideal: exact Boltzmann samples at beta = 1.
    noisy: per random gauge, theta / beta_hw plus Gaussian noise, clamped to
    [-1, 1], sampled exactly at beta_hw and transformed back.
    quantum: the diagonal of the transverse-field Boltzmann operator of
    theta / beta_hw at (beta_hw, gamma), over all states or over the
    cluster-aligned states of ``reduction``.
    """
    if count < 1:
        raise ValueError("count must be at least 1")
    if config.mode == "ideal":
        return exact_sample(model, 1.0, count, seed)
    if config.mode == "noisy":
        g = model.graph
        is_node = np.arange(model.num_params) < g.num_nodes
        parts = []
        for gi, part in enumerate(_split(count, config.gauge_count)):
            if part == 0:
                continue
            rng = np.random.default_rng([int(seed), gi])
            flips = rng.random(g.num_nodes) < 0.5
            gm = gauge_transform(model, flips)
            noise = rng.normal(size=model.num_params) * np.where(is_node, config.sigma_h, config.sigma_j)
            theta = np.clip(gm.theta / config.beta_hw + noise, -1.0, 1.0)
            draw = exact_sample(gm.with_theta(theta), config.beta_hw, part, int(rng.integers(2**62)))
            parts.append(apply_flips(draw.spins, flips))
        return SampleSet(g, np.concatenate(parts))
    try:
        configs = _state_space(model, config.quantum_cap, reduction)
    except ResourceLimitError as err:
        raise ResourceLimitError(f"quantum surrogate needs a cluster reduction: {err}") from err
    H = build_hamiltonian(model.scaled(1.0 / config.beta_hw), config.gamma, config.beta_hw,
                          cap=config.quantum_cap, reduction=reduction)
    p = quantum_diagonal_distribution(H).probs
    idx = np.random.default_rng(int(seed)).choice(len(p), size=count, p=p / p.sum())
    return SampleSet(model.graph, configs[idx])
