import numpy as np
import pytest

from chimera_bm.exact import exact_sample
from chimera_bm.fcl import enumerate_cluster_minima, fcl_spec, make_fcl, make_random_pm1
from chimera_bm.graph import build_chimera
from chimera_bm.io import load_model, load_samples, read_csv, save_model, save_samples, write_csv, write_json
from chimera_bm.ising import IsingModel


def test_model_roundtrip_exact(tmp_path):
    for m in (make_fcl(2), make_random_pm1(3, 1), IsingModel(build_chimera(1), np.linspace(-1, 1, 8) / 3,
                                                              np.arange(16) * 0.1)):
        path = tmp_path / "m.json"
        save_model(m, path)
        back = load_model(path)
        assert back.graph.same_as(m.graph)
        assert np.array_equal(back.theta, m.theta)
        save_model(back, tmp_path / "m2.json")
        assert (tmp_path / "m2.json").read_bytes() == path.read_bytes()


def test_masked_model_roundtrip(tmp_path):
    g = build_chimera(2).subgraph([0, 4, 5, 9, 12], [(0, 4), (0, 5)])
    m = IsingModel(g, [0.1, 0.2, 0.3, 0.4, 0.5], [-1.0, 0.5])
    save_model(m, tmp_path / "m.json")
    back = load_model(tmp_path / "m.json")
    assert np.array_equal(back.graph.nodes, g.nodes) and np.array_equal(back.graph.edges, g.edges)
    assert np.array_equal(back.theta, m.theta)


@pytest.mark.parametrize("name", ["s.txt", "s.txt.gz"])
def test_samples_roundtrip(tmp_path, name):
    m = make_fcl(1)
    s = exact_sample(m, 1.0, 300, 0)
    save_samples(s, tmp_path / name)
    back = load_samples(tmp_path / name, m.graph)
    assert np.array_equal(back.spins, s.spins)
    with pytest.raises(ValueError):
        load_samples(tmp_path / name, build_chimera(3))


def test_sample_count_mismatch(tmp_path):
    p = tmp_path / "bad.txt"
    p.write_text("n=1 count=3\n" + "1 -1 1 1 1 1 1 1\n" * 2)
    with pytest.raises(ValueError):
        load_samples(p)


def test_csv_and_json(tmp_path):
    write_csv(tmp_path / "a.csv", ["x", "y"], [(1, 0.1), (np.int64(2), np.float64(1 / 3))])
    rows = read_csv(tmp_path / "a.csv")
    assert rows[1] == {"x": "2", "y": repr(1 / 3)}
    cat = enumerate_cluster_minima(make_fcl(1), fcl_spec(1))
    write_json(tmp_path / "c.json", {"energies": cat.energies, "count": np.int64(3)})
    assert '"count": 3' in (tmp_path / "c.json").read_text()
