"""Frustrated cluster loop problems, random Chimera problems and their mode catalogs.

A cluster is one unit cell whose 16 intra-cell couplers all share a
ferromagnetic weight. Adjacent clusters are joined by a bundle of four
parallel couplers with a common weight. Because clusters are strongly
ferromagnetic, the low-energy landscape is described by one effective spin
per cluster: each of the 2^K cluster-aligned configurations is a local
minimum, and these form the mode catalog.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np

from .graph import LEFT, RIGHT, build_chimera, node_id
from .ising import IsingModel, energy, enumerate_states
from .quantum import ClusterReduction

# cells of the 4-cluster loop, in loop order
LOOP_CELLS = ((0, 0), (0, 1), (1, 1), (1, 0))
LOOP_BUNDLES = ((0, 1), (1, 2), (2, 3), (3, 0))
MAX_CATALOG_CLUSTERS = 16

FCL_INTER = {
    1: (-0.25, -0.25, -0.25, 0.25),
    2: (-0.30, -0.25, -0.20, 0.20),
}
FCL_INTRA = {
    1: (-2.5, -2.5, -2.5, -2.5),
    3: (-2.5, -1.5, -2.5, -1.5),
}
EXPECTED_GROUND = {1: 8, 2: 4}


class InvalidSpecError(ValueError):
    pass


class DegenerateSpecError(InvalidSpecError):
    """A cluster-aligned configuration is not a strict local minimum."""


@dataclass(frozen=True)
class FCLSpec:
    """Clusters on unit cells of a C_n, joined by uniform coupler bundles.

    ``bundles`` are ``(a, b, value)`` with a, b cluster indices of
    grid-adjacent cells. ``frustrated_cycles`` lists closed cluster loops
    (as cluster index sequences) that must admit no assignment satisfying
    all their bundles.
    """

    n: int
    cells: tuple
    j_intra: tuple
    bundles: tuple
    frustrated_cycles: tuple = ()
    expected_ground: int | None = None
    name: str = "custom"

    def __post_init__(self):
        if len(self.cells) != len(self.j_intra):
            raise InvalidSpecError("one j_intra value per cluster is required")
        if any(j >= 0 for j in self.j_intra):
            raise InvalidSpecError("every j_intra must be negative (ferromagnetic)")
        for r, c in self.cells:
            if not (0 <= r < self.n and 0 <= c < self.n):
                raise InvalidSpecError(f"cell {(r, c)} lies outside C_{self.n}")
        for a, b, _ in self.bundles:
            (ra, ca), (rb, cb) = self.cells[a], self.cells[b]
            if abs(ra - rb) + abs(ca - cb) != 1:
                raise InvalidSpecError(f"bundle {a}-{b} joins non-adjacent cells")

    @property
    def num_clusters(self) -> int:
        return len(self.cells)

    def bundle_value(self, a: int, b: int) -> float:
        for x, y, v in self.bundles:
            if {x, y} == {a, b}:
                return v
        raise KeyError((a, b))

    def with_j_intra(self, j_intra) -> "FCLSpec":
        return FCLSpec(self.n, self.cells, tuple(j_intra), self.bundles, self.frustrated_cycles,
                       None, self.name)


def fcl_spec(variant: int, j_intra=None, j_inter=None) -> FCLSpec:
    """Preset FCL-1..4 on a 2 x 2 loop of cells of a C2, optionally overriding weights."""
    if variant not in (1, 2, 3, 4):
        raise InvalidSpecError(f"unknown FCL variant {variant}")
    intra = FCL_INTRA[3 if variant in (3, 4) else 1] if j_intra is None else tuple(j_intra)
    inter = FCL_INTER[2 if variant in (2, 4) else 1] if j_inter is None else tuple(j_inter)
    if len(inter) != 4 or len(intra) != 4:
        raise InvalidSpecError("loop problems take four intra and four inter weights")
    bundles = tuple((a, b, float(v)) for (a, b), v in zip(LOOP_BUNDLES, inter))
    expected = EXPECTED_GROUND[2 if variant in (2, 4) else 1] if j_inter is None else None
    return FCLSpec(2, LOOP_CELLS, tuple(float(j) for j in intra), bundles, ((0, 1, 2, 3),), expected,
                   f"FCL-{variant}")


def _bundle_edges(n: int, cell_a, cell_b) -> list[tuple[int, int]]:
    (ra, ca), (rb, cb) = sorted([cell_a, cell_b])
    side = LEFT if ca == cb else RIGHT
    return [(node_id(n, ra, ca, side, k), node_id(n, rb, cb, side, k)) for k in range(4)]


def cycle_frustrated(values) -> bool:
    """A closed loop of bundles is frustrated when no assignment satisfies all of them."""
    v = np.asarray(values, dtype=np.float64)
    if (v == 0).any():
        return False
    return bool((-1) ** len(v) * np.prod(np.sign(v)) < 0)


def _cycle_values(spec: FCLSpec, cycle) -> list[float]:
    return [spec.bundle_value(cycle[i], cycle[(i + 1) % len(cycle)]) for i in range(len(cycle))]


def _check_frustration(spec: FCLSpec) -> None:
    for cycle in spec.frustrated_cycles:
        vals = np.array(_cycle_values(spec, cycle))
        # exhaustive: a bundle (a, b, J) is satisfied when J * s_a * s_b < 0
        for a in itertools.product((-1, 1), repeat=len(cycle)):
            a = np.array(a)
            if all(vals[i] * a[i] * a[(i + 1) % len(cycle)] < 0 for i in range(len(cycle))):
                raise InvalidSpecError(f"cycle {cycle} is not frustrated: assignment {a.tolist()} satisfies it")


def build_fcl_model(spec: FCLSpec) -> IsingModel:
    full = build_chimera(spec.n)
    nodes, edge_val = [], {}
    for (r, c), j in zip(spec.cells, spec.j_intra):
        left = [node_id(spec.n, r, c, LEFT, i) for i in range(4)]
        right = [node_id(spec.n, r, c, RIGHT, i) for i in range(4)]
        nodes += left + right
        for u in left:
            for v in right:
                edge_val[(u, v)] = j
    for a, b, v in spec.bundles:
        for e in _bundle_edges(spec.n, spec.cells[a], spec.cells[b]):
            edge_val[e] = v
    graph = full.subgraph(nodes, list(edge_val))
    J = np.array([edge_val[tuple(e)] for e in graph.edges.tolist()])
    return IsingModel(graph, np.zeros(graph.num_nodes), J)


def make_fcl(variant, j_intra=None, j_inter=None, *, validate: bool = True) -> IsingModel:
    """FCL-1..4 (or a custom :class:`FCLSpec`) as a masked sub-Chimera model with h = 0."""
    spec = variant if isinstance(variant, FCLSpec) else fcl_spec(int(variant), j_intra, j_inter)
    model = build_fcl_model(spec)
    if validate:
        _check_frustration(spec)
        if spec.num_clusters <= MAX_CATALOG_CLUSTERS:
            cat = enumerate_cluster_minima(model, spec)
            if spec.expected_ground is not None and cat.ground_count != spec.expected_ground:
                raise InvalidSpecError(
                    f"{spec.name}: expected {spec.expected_ground} ground states, catalog has {cat.ground_count}")
    return model


def make_scaled_fcl3() -> IsingModel:
    """FCL-3 with every intra-cluster weight divided by 3."""
    return make_fcl(scaled_fcl3_spec())


def scaled_fcl3_spec() -> FCLSpec:
    spec = fcl_spec(3)
    return spec.with_j_intra(tuple(j / 3 for j in spec.j_intra))


def random_fcl_grid_spec(n: int, j_intra_set, j_inter_set, frustrate_all_4cycles: bool, seed: int) -> FCLSpec:
    rng = np.random.default_rng(seed)
    cells = tuple((r, c) for r in range(n) for c in range(n))
    j_intra = tuple(float(x) for x in rng.choice(np.asarray(j_intra_set, dtype=np.float64), size=len(cells)))
    pairs = [(r * n + c, r * n + c + 1) for r in range(n) for c in range(n - 1)]
    pairs += [(r * n + c, (r + 1) * n + c) for r in range(n - 1) for c in range(n)]
    values = {p: float(x) for p, x in zip(pairs, rng.choice(np.asarray(j_inter_set, dtype=np.float64),
                                                            size=len(pairs)))}
    cycles = []
    if frustrate_all_4cycles:
        for r in range(n - 1):
            for c in range(n - 1):
                a, b, d, e = r * n + c, r * n + c + 1, (r + 1) * n + c + 1, (r + 1) * n + c
                cycle = (a, b, d, e)
                loop = [values[(a, b)], values[(b, d)], values[(e, d)], values[(a, e)]]
                if not cycle_frustrated(loop):
                    # the bottom bundle belongs to no plaquette visited earlier
                    values[(e, d)] = -values[(e, d)]
                    if not cycle_frustrated([values[(a, b)], values[(b, d)], values[(e, d)], values[(a, e)]]):
                        raise InvalidSpecError(f"cannot frustrate plaquette at cell {(r, c)}")
                cycles.append(cycle)
    bundles = tuple((a, b, values[(a, b)]) for a, b in pairs)
    return FCLSpec(n, cells, j_intra, bundles, tuple(cycles), None, f"grid-{n}")


def make_random_fcl_grid(n: int, j_intra_set=(-2.5,), j_inter_set=(-0.25, 0.25), frustrate_all_4cycles=False,
                         seed: int = 0) -> IsingModel:
    """n x n grid of clusters with weights drawn from the given sets."""
    spec = random_fcl_grid_spec(n, j_intra_set, j_inter_set, frustrate_all_4cycles, seed)
    model = build_fcl_model(spec)
    _check_frustration(spec)
    return model


def make_random_pm1(n: int, seed: int) -> IsingModel:
    """Full C_n with h = 0 and independent uniform +-1 couplings."""
    g = build_chimera(n)
    J = np.random.default_rng(seed).choice([-1.0, 1.0], size=g.num_edges)
    return IsingModel(g, np.zeros(g.num_nodes), J)


@dataclass(frozen=True, eq=False)
class ModeCatalog:
    """The 2^K cluster-aligned local minima, indexed by assignment.

    Entry i has cluster k set to +1 when bit ``K-1-k`` of i is set.
    """

    reduction: ClusterReduction
    assignments: np.ndarray
    configs: np.ndarray
    energies: np.ndarray
    tol: float = 1e-9
    ground: np.ndarray = field(init=False)

    def __post_init__(self):
        object.__setattr__(self, "ground", self.energies <= self.energies.min() + self.tol)

    @property
    def graph(self):
        return self.reduction.graph

    def __len__(self) -> int:
        return len(self.energies)

    @property
    def ground_count(self) -> int:
        return int(self.ground.sum())

    @property
    def ground_energy(self) -> float:
        return float(self.energies.min())

    @property
    def excited_energies(self) -> np.ndarray:
        return np.unique(np.round(self.energies[~self.ground], 9))

    @property
    def gap(self) -> float:
        exc = self.energies[~self.ground]
        return float(exc.min() - self.ground_energy) if exc.size else float("nan")

    @property
    def labels(self) -> list[str]:
        return ["ground" if g else "excited" for g in self.ground]

    def to_dict(self) -> dict:
        g = self.graph
        return {
            "clusters": [g.nodes[c].tolist() for c in self.reduction.clusters],
            "assignments": self.assignments.tolist(),
            "energies": self.energies.tolist(),
            "labels": self.labels,
            "ground_count": self.ground_count,
            "gap": self.gap,
        }

    @classmethod
    def from_dict(cls, d: dict, model: IsingModel) -> "ModeCatalog":
        g = model.graph
        red = ClusterReduction(g, tuple(g.position[np.asarray(c)] for c in d["clusters"]))
        a = np.asarray(d["assignments"], dtype=np.int8)
        return cls(red, a, red.expand(a), np.asarray(d["energies"], dtype=np.float64))


def cluster_reduction(model: IsingModel, spec: FCLSpec) -> ClusterReduction:
    g = model.graph
    return ClusterReduction(g, tuple(g.cell_nodes(r, c) for r, c in spec.cells))


def single_flip_deltas(model: IsingModel, configs) -> np.ndarray:
    """Energy change of flipping each single spin, per configuration."""
    s = np.atleast_2d(configs).astype(np.float64)
    local = model.h + s @ model.coupling_matrix()
    return -2.0 * s * local


def enumerate_cluster_minima(model: IsingModel, spec: FCLSpec) -> ModeCatalog:
    """Catalog of cluster-aligned configurations, verified to be strict local minima."""
    if spec.num_clusters > MAX_CATALOG_CLUSTERS:
        raise InvalidSpecError(f"catalog of {spec.num_clusters} clusters exceeds {MAX_CATALOG_CLUSTERS}")
    red = cluster_reduction(model, spec)
    a = enumerate_states(spec.num_clusters)
    configs = red.expand(a)
    E = np.atleast_1d(energy(model, configs))
    bad = (single_flip_deltas(model, configs) <= 0).any(axis=1)
    if bad.any():
        raise DegenerateSpecError(
            f"{spec.name}: {int(bad.sum())} cluster-aligned configurations are not strict local minima")
    configs.setflags(write=False)
    return ModeCatalog(red, a, configs, E)
