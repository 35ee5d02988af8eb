"""Ising energy model, sufficient statistics and gauge transformations."""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .graph import ChimeraGraph

_STATS_CHUNK = 65536


def _frozen(a, dtype=np.float64) -> np.ndarray:
    a = np.array(a, dtype=dtype)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class IsingModel:
    """Linear weights ``h`` (per node) and couplings ``J`` (per edge) on a graph.

    The parameter vector ``theta`` is ``[h, J]``, so that
    ``energy(s) = theta . phi(s)`` with ``phi(s) = [s_v, s_u s_v]``.
    """

    graph: ChimeraGraph
    h: np.ndarray
    J: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "h", _frozen(self.h))
        object.__setattr__(self, "J", _frozen(self.J))
        if self.h.shape != (self.graph.num_nodes,):
            raise ValueError(f"h has shape {self.h.shape}, expected ({self.graph.num_nodes},)")
        if self.J.shape != (self.graph.num_edges,):
            raise ValueError(f"J has shape {self.J.shape}, expected ({self.graph.num_edges},)")
        if not (np.isfinite(self.h).all() and np.isfinite(self.J).all()):
            raise ValueError("Ising weights must be finite")

    @classmethod
    def zeros(cls, graph: ChimeraGraph) -> "IsingModel":
        return cls(graph, np.zeros(graph.num_nodes), np.zeros(graph.num_edges))

    @classmethod
    def from_theta(cls, graph: ChimeraGraph, theta) -> "IsingModel":
        theta = np.asarray(theta, dtype=np.float64)
        return cls(graph, theta[: graph.num_nodes], theta[graph.num_nodes:])

    @property
    def theta(self) -> np.ndarray:
        return np.concatenate([self.h, self.J])

    @property
    def num_params(self) -> int:
        return self.graph.num_nodes + self.graph.num_edges

    def with_theta(self, theta) -> "IsingModel":
        return IsingModel.from_theta(self.graph, theta)

    def scaled(self, factor: float) -> "IsingModel":
        return IsingModel(self.graph, self.h * factor, self.J * factor)

    def coupling_matrix(self) -> np.ndarray:
        """Dense symmetric (N, N) coupling matrix."""
        N = self.graph.num_nodes
        W = np.zeros((N, N))
        u, v = self.graph.edge_index.T
        W[u, v] = self.J
        W[v, u] = self.J
        return W


def _as_configs(graph: ChimeraGraph, s) -> np.ndarray:
    s = np.asarray(s)
    if s.shape[-1] != graph.num_nodes:
        raise ValueError(f"configuration length {s.shape[-1]} does not match {graph.num_nodes} nodes")
    return s


def energy(model: IsingModel, s) -> np.ndarray | float:
    """``sum_v h_v s_v + sum_(u,v) J_uv s_u s_v`` for one config or a batch."""
    s = _as_configs(model.graph, s)
    sf = s.astype(np.float64)
    u, v = model.graph.edge_index.T
    e = sf @ model.h + (sf[..., u] * sf[..., v]) @ model.J
    return float(e) if np.ndim(e) == 0 else e


def phi(graph: ChimeraGraph, s) -> np.ndarray:
    """Sufficient statistics vector ``[s_v, s_u s_v]`` of one or many configs."""
    s = _as_configs(graph, s).astype(np.float64)
    u, v = graph.edge_index.T
    return np.concatenate([s, s[..., u] * s[..., v]], axis=-1)


@dataclass(frozen=True, eq=False)
class SufficientStats:
    node_part: np.ndarray
    edge_part: np.ndarray
    count: int

    @property
    def vector(self) -> np.ndarray:
        return np.concatenate([self.node_part, self.edge_part])

    @classmethod
    def from_vector(cls, graph: ChimeraGraph, vec, count: int) -> "SufficientStats":
        vec = np.asarray(vec, dtype=np.float64)
        return cls(vec[: graph.num_nodes].copy(), vec[graph.num_nodes:].copy(), count)


def sufficient_stats(graph: ChimeraGraph, configs) -> SufficientStats:
    """Means of ``s_v`` and ``s_u s_v`` over a batch of configurations.

    Sums are accumulated as exact integers, so the result does not depend on
    how the batch is chunked or ordered.
    """
    configs = np.asarray(configs)
    if configs.size == 0:
        return SufficientStats(np.zeros(graph.num_nodes), np.zeros(graph.num_edges), 0)
    configs = _as_configs(graph, configs).reshape(-1, graph.num_nodes)
    u, v = graph.edge_index.T
    node_sum = np.zeros(graph.num_nodes, dtype=np.int64)
    edge_sum = np.zeros(graph.num_edges, dtype=np.int64)
    for start in range(0, len(configs), _STATS_CHUNK):
        block = configs[start:start + _STATS_CHUNK].astype(np.int64)
        node_sum += block.sum(axis=0)
        edge_sum += (block[:, u] * block[:, v]).sum(axis=0)
    m = len(configs)
    return SufficientStats(node_sum / m, edge_sum / m, m)


def gauge_transform(model: IsingModel, flips) -> IsingModel:
    """Spin-reversal transform: negate ``h_v`` for flipped ``v`` and ``J_uv``
    when exactly one endpoint is flipped.

    ``flips`` is a boolean mask over node positions or an iterable of node ids.
    """
    mask = flip_mask(model.graph, flips)
    sign = np.where(mask, -1.0, 1.0)
    u, v = model.graph.edge_index.T
    return IsingModel(model.graph, model.h * sign, model.J * sign[u] * sign[v])


def flip_mask(graph: ChimeraGraph, flips) -> np.ndarray:
    flips = np.asarray(list(flips) if not isinstance(flips, np.ndarray) else flips)
    if flips.dtype == bool:
        if flips.shape != (graph.num_nodes,):
            raise ValueError("boolean flip mask must cover every node")
        return flips
    mask = np.zeros(graph.num_nodes, dtype=bool)
    if flips.size:
        ids = flips.astype(np.int64)
        if ((ids < 0) | (ids >= len(graph.position))).any() or (graph.position[ids] < 0).any():
            raise ValueError("flip set contains nodes outside the graph")
        mask[graph.position[ids]] = True
    return mask


def apply_flips(s, mask: np.ndarray) -> np.ndarray:
    return np.where(mask, -np.asarray(s), np.asarray(s)).astype(np.int8)


def spin_to_bool(s) -> np.ndarray:
    return ((1 + np.asarray(s)) // 2).astype(np.int8)


def bool_to_spin(x) -> np.ndarray:
    return (2 * np.asarray(x) - 1).astype(np.int8)


@dataclass(frozen=True, eq=False)
class SampleSet:
    """A batch of +-1 configurations over a graph, shape (count, N)."""

    graph: ChimeraGraph
    spins: np.ndarray = field(repr=False)

    def __post_init__(self):
        spins = np.ascontiguousarray(self.spins, dtype=np.int8).reshape(-1, self.graph.num_nodes)
        if not np.isin(spins, (-1, 1)).all():
            raise ValueError("spins must be +-1")
        spins.setflags(write=False)
        object.__setattr__(self, "spins", spins)

    def __len__(self) -> int:
        return len(self.spins)

    @cached_property
    def _stats(self) -> SufficientStats:
        return sufficient_stats(self.graph, self.spins)

    def stats(self) -> SufficientStats:
        """Mean sufficient statistics (computed once per sample set)."""
        return self._stats

    def mean_energy(self, model: "IsingModel") -> float:
        """Average energy over the samples, as ``theta . mean phi``."""
        return float(model.theta @ self._stats.vector)

    def split_interleaved(self) -> tuple["SampleSet", "SampleSet"]:
        """Even-indexed rows for training, odd-indexed rows for testing."""
        return SampleSet(self.graph, self.spins[0::2]), SampleSet(self.graph, self.spins[1::2])

    def take(self, idx) -> "SampleSet":
        return SampleSet(self.graph, self.spins[idx])

    @staticmethod
    def concat(parts: list["SampleSet"]) -> "SampleSet":
        return SampleSet(parts[0].graph, np.concatenate([p.spins for p in parts]))


def enumerate_states(num: int) -> np.ndarray:
    """All 2^num configurations; row i has spin +1 at position j when bit
    ``num - 1 - j`` of i is set."""
    idx = np.arange(2**num, dtype=np.int64)[:, None]
    bits = (idx >> np.arange(num - 1, -1, -1)) & 1
    return (2 * bits - 1).astype(np.int8)
