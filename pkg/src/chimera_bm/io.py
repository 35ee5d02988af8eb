"""Model, sample, CSV and manifest files."""

from __future__ import annotations

import csv
import gzip
import json
from pathlib import Path

import numpy as np

from .graph import ChimeraGraph, build_chimera
from .ising import IsingModel, SampleSet


def _open(path, mode: str):
    path = Path(path)
    if path.suffix == ".gz":
        return gzip.open(path, mode + "t", encoding="utf-8")
    return open(path, mode, encoding="utf-8")


def model_to_dict(model: IsingModel) -> dict:
    g = model.graph
    full = np.arange(8 * g.n * g.n)
    d = {"n": g.n}
    masked = np.setdiff1d(full, g.nodes)
    if masked.size:
        d["masked_nodes"] = masked.tolist()
    d["h"] = [{"node": int(v), "value": float(x)} for v, x in zip(g.nodes, model.h)]
    d["J"] = [{"u": int(u), "v": int(v), "value": float(x)} for (u, v), x in zip(g.edges, model.J)]
    return d


def model_from_dict(d: dict) -> IsingModel:
    """Inverse of :func:`model_to_dict`. The active edge set is the one listed in ``J``."""
    full = build_chimera(int(d["n"]))
    nodes = np.setdiff1d(full.nodes, np.asarray(d.get("masked_nodes", []), dtype=np.int64))
    pairs = [tuple(sorted((int(e["u"]), int(e["v"])))) for e in d["J"]]
    graph = full.subgraph(nodes, pairs) if len(pairs) != full.num_edges or len(nodes) != full.num_nodes else full
    h = np.zeros(graph.num_nodes)
    for e in d["h"]:
        pos = graph.position[int(e["node"])]
        if pos < 0:
            raise ValueError(f"field on masked node {e['node']}")
        h[pos] = float(e["value"])
    index = {tuple(p): i for i, p in enumerate(graph.edges.tolist())}
    J = np.zeros(graph.num_edges)
    for p, e in zip(pairs, d["J"]):
        J[index[p]] = float(e["value"])
    return IsingModel(graph, h, J)


def save_model(model: IsingModel, path) -> None:
    Path(path).write_text(json.dumps(model_to_dict(model), indent=1) + "\n")


def load_model(path) -> IsingModel:
    return model_from_dict(json.loads(Path(path).read_text()))


def save_samples(samples: SampleSet, path) -> None:
    """Header ``n=<grid side> count=<c>``, then one line of +-1 values per sample."""
    with _open(path, "w") as f:
        f.write(f"n={samples.graph.n} count={len(samples)}\n")
        lines = np.where(samples.spins > 0, "1", "-1")
        for row in lines:
            f.write(" ".join(row))
            f.write("\n")


def load_samples(path, graph: ChimeraGraph | None = None) -> SampleSet:
    with _open(path, "r") as f:
        header = dict(kv.split("=") for kv in f.readline().split())
        n, count = int(header["n"]), int(header["count"])
        spins = np.loadtxt(f, dtype=np.int8, ndmin=2) if count else np.empty((0, 0), dtype=np.int8)
    if graph is None:
        graph = build_chimera(n)
    elif graph.n != n:
        raise ValueError(f"sample file is for C_{n}, graph is C_{graph.n}")
    if len(spins) != count:
        raise ValueError(f"sample file declares {count} samples but holds {len(spins)}")
    return SampleSet(graph, spins.reshape(count, graph.num_nodes))


def write_csv(path, header: list[str], rows) -> None:
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(x) for x in row])


def _fmt(x):
    if isinstance(x, (float, np.floating)):
        return repr(float(x))
    if isinstance(x, np.integer):
        return int(x)
    return x


def read_csv(path) -> list[dict]:
    with open(path, newline="") as f:
        return list(csv.DictReader(f))


def write_json(path, obj) -> None:
    Path(path).write_text(json.dumps(obj, indent=1, default=_json_default) + "\n")


def _json_default(x):
    if isinstance(x, np.ndarray):
        return x.tolist()
    if isinstance(x, np.generic):
        return x.item()
    raise TypeError(f"not JSON serializable: {type(x).__name__}")
