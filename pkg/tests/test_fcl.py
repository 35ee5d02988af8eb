import itertools

import numpy as np
import pytest

from chimera_bm.fcl import (
    DegenerateSpecError, FCLSpec, InvalidSpecError, build_fcl_model, cycle_frustrated, enumerate_cluster_minima,
    fcl_spec, make_fcl, make_random_fcl_grid, make_random_pm1, make_scaled_fcl3, random_fcl_grid_spec,
    scaled_fcl3_spec, single_flip_deltas,
)
from chimera_bm.ising import energy, enumerate_states


def _catalog(v):
    return enumerate_cluster_minima(make_fcl(v), fcl_spec(v))


def test_fcl1_structure():
    cat = _catalog(1)
    assert len(cat) == 16 and cat.ground_count == 8 and cat.gap == 4.0
    m = make_fcl(1)
    assert m.graph.num_nodes == 32 and m.graph.num_edges == 4 * 16 + 4 * 4
    assert not m.h.any()


def test_fcl1_ground_is_minimum_over_aligned_states():
    m = make_fcl(1)
    cat = _catalog(1)
    brute = min(energy(m, cat.reduction.expand(np.array(a))) for a in itertools.product((-1, 1), repeat=4))
    assert np.isclose(cat.ground_energy, float(np.min(brute)))
    assert np.allclose(cat.energies[cat.ground], cat.ground_energy)


def test_fcl2_structure():
    cat = _catalog(2)
    assert cat.ground_count == 4
    assert len(cat.excited_energies) >= 3


@pytest.mark.parametrize("v", [1, 2, 3, 4])
def test_catalog_entries_are_strict_local_minima(v):
    m = make_fcl(v)
    cat = _catalog(v)
    assert (single_flip_deltas(m, cat.configs) > 0).all()
    # h = 0: global cluster flip preserves energy; entry i and 15 - i are flips of each other
    assert np.allclose(cat.energies, cat.energies[::-1])


def test_cell_flip_penalty_fcl1():
    m = make_fcl(1)
    cat = _catalog(1)
    s = cat.configs[0].copy()
    pos = cat.reduction.clusters[0]
    # flipping every spin of one cell keeps its 16 intra bonds satisfied and only changes inter bonds
    flipped = s.copy()
    flipped[pos] *= -1
    assert abs(energy(m, flipped) - energy(m, s)) <= 2 * 8 * 0.25 + 1e-12
    # flipping half a cell breaks all 16 intra bonds: penalty 16 * 2 * |J_intra| up to inter terms
    half = s.copy()
    half[pos[:4]] *= -1
    assert energy(m, half) - energy(m, s) >= 16 * 2 * 2.5 - 2 * 4 * 0.25


def test_frustration_validation():
    with pytest.raises(InvalidSpecError):
        make_fcl(1, j_inter=(-0.25, -0.25, -0.25, -0.25))
    assert cycle_frustrated([-0.25, -0.25, -0.25, 0.25])
    assert not cycle_frustrated([-0.25, -0.25, -0.25, -0.25])
    assert not cycle_frustrated([0.0, -0.25, -0.25, 0.25])


def test_spec_validation():
    with pytest.raises(InvalidSpecError):
        fcl_spec(5)
    with pytest.raises(InvalidSpecError):
        FCLSpec(2, ((0, 0),), (1.0,), ())
    with pytest.raises(InvalidSpecError):
        FCLSpec(2, ((0, 0), (1, 1)), (-1.0, -1.0), ((0, 1, 0.25),))
    weak = fcl_spec(1).with_j_intra((-0.01, -2.5, -2.5, -2.5))
    with pytest.raises(DegenerateSpecError):
        make_fcl(weak)


def test_spec_default_fcl2_weights_give_two_ground_states():
    spec = FCLSpec(2, fcl_spec(2).cells, fcl_spec(2).j_intra,
                   tuple((a, b, v) for (a, b, _), v in zip(fcl_spec(2).bundles, (-0.30, -0.25, -0.20, 0.25))))
    assert enumerate_cluster_minima(build_fcl_model(spec), spec).ground_count == 2


def test_scaled_fcl3():
    m = make_scaled_fcl3()
    spec = scaled_fcl3_spec()
    assert np.isclose(min(spec.j_intra), -2.5 / 3)
    cat3, cats = _catalog(3), enumerate_cluster_minima(m, spec)
    assert np.array_equal(cat3.assignments, cats.assignments)
    # inter energies are unchanged, intra energies scale by 1/3
    intra3 = -16 * (2.5 + 1.5 + 2.5 + 1.5)
    np.testing.assert_allclose(cats.energies - intra3 / 3, cat3.energies - intra3)
    assert np.isclose(cats.gap, cat3.gap)


def test_fcl34_intra_pattern():
    assert fcl_spec(3).j_intra == (-2.5, -1.5, -2.5, -1.5)
    assert fcl_spec(4).j_intra == fcl_spec(3).j_intra
    assert [b[2] for b in fcl_spec(4).bundles] == [b[2] for b in fcl_spec(2).bundles]


def test_random_grid_sizes_and_determinism():
    m = make_random_fcl_grid(5, (-2.5,), (-0.25, 0.25), False, 3)
    assert m.graph.num_nodes == 200 and m.graph.num_edges == 25 * 16 + 40 * 4
    spec = random_fcl_grid_spec(5, (-2.5,), (-0.25, 0.25), False, 3)
    assert spec.num_clusters == 25 and len(spec.bundles) == 40
    a = make_random_fcl_grid(3, (-2.5,), (-0.25,), False, 1)
    b = make_random_fcl_grid(3, (-2.5,), (-0.25,), False, 99)
    assert np.array_equal(a.J, b.J)


def test_random_grid_frustrates_every_plaquette():
    spec = random_fcl_grid_spec(5, (-1.5, -2.5), (-0.5, -0.25, 0.38), True, 7)
    assert len(spec.frustrated_cycles) == 16
    for cycle in spec.frustrated_cycles:
        vals = [spec.bundle_value(cycle[i], cycle[(i + 1) % 4]) for i in range(4)]
        sats = [all(vals[i] * a[i] * a[(i + 1) % 4] < 0 for i in range(4))
                for a in itertools.product((-1, 1), repeat=4)]
        assert not any(sats)
    mags = {abs(v) for _, _, v in spec.bundles}
    assert mags <= {0.5, 0.25, 0.38}


def test_random_pm1():
    for n, count in [(3, 72), (4, 128), (5, 200)]:
        m = make_random_pm1(n, 0)
        assert m.graph.num_nodes == count and not m.h.any() and set(np.unique(m.J)) <= {-1.0, 1.0}
    assert np.array_equal(make_random_pm1(3, 5).J, make_random_pm1(3, 5).J)


def test_catalog_sidecar_roundtrip():
    m = make_fcl(2)
    cat = _catalog(2)
    from chimera_bm.fcl import ModeCatalog

    back = ModeCatalog.from_dict(cat.to_dict(), m)
    assert np.array_equal(back.configs, cat.configs) and np.array_equal(back.energies, cat.energies)
    assert back.ground_count == 4
    assert np.array_equal(cat.assignments, enumerate_states(4))
