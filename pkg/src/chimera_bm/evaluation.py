"""Mode histograms, catalog KL, exact log-likelihood measures and Boltzmann fits."""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
from scipy.optimize import minimize

from .exact import MAX_N, exact_marginals, log_partition
from .ising import IsingModel, SampleSet

_PRIME = np.uint64(0x100000001B3)


def _pack(states) -> np.ndarray:
    """Rows of +-1 values as (rows, words) uint64 bit patterns."""
    bits = np.asarray(states) > 0
    nbytes = -(-bits.shape[1] // 64) * 8
    packed = np.packbits(bits, axis=1)
    out = np.zeros((len(bits), nbytes), dtype=np.uint8)
    out[:, : packed.shape[1]] = packed
    return out.view(np.uint64)


def mode_index(states, configs) -> np.ndarray:
    """Index of each state in ``configs`` (exact match), or -1."""
    ps, pc = _pack(states), _pack(configs)
    with np.errstate(over="ignore"):
        hs = np.zeros(len(ps), dtype=np.uint64)
        hc = np.zeros(len(pc), dtype=np.uint64)
        for w in range(ps.shape[1]):
            hs = hs * _PRIME ^ ps[:, w]
            hc = hc * _PRIME ^ pc[:, w]
    order = np.argsort(hc, kind="stable")
    pos = np.clip(np.searchsorted(hc[order], hs), 0, len(order) - 1)
    cand = order[pos]
    hit = (pc[cand] == ps).all(axis=1)
    return np.where(hit, cand, -1)


@dataclass(frozen=True, eq=False)
class ModeHistogram:
    counts: np.ndarray
    total_count: int

    @property
    def probs(self) -> np.ndarray:
        return self.counts / self.total_count

    @property
    def other_mass(self) -> float:
        return 1.0 - self.counts.sum() / self.total_count


def mode_histogram(samples: SampleSet, catalog) -> ModeHistogram:
    idx = mode_index(samples.spins, catalog.configs)
    return ModeHistogram(np.bincount(idx[idx >= 0], minlength=len(catalog.configs)), len(samples))


def kl_over_modes(exact, empirical: ModeHistogram) -> float:
    """``sum p ln(p / q)`` over catalog modes.

    ``q`` is the empirical mode frequency plus 1/(2N), and both ``p`` and
    ``q`` are renormalized over the catalog.
    """
    p = np.asarray(exact, dtype=np.float64)
    p = p / p.sum()
    q = empirical.probs + 1.0 / (2 * empirical.total_count)
    q = q / q.sum()
    nz = p > 0
    return float(np.sum(p[nz] * np.log(p[nz] / q[nz])))


def histogram_rows(exact, empirical: ModeHistogram) -> list[tuple]:
    return [(i, float(e), float(q)) for i, (e, q) in enumerate(zip(exact, empirical.probs))]


def ll_ratio(model_true: IsingModel, model_learn: IsingModel, test: SampleSet, *, max_n: int = MAX_N,
             log_Z_true: float | None = None) -> float:
    """Test-sample estimate of KL(B(theta_true) || B(theta_learn))."""
    if not model_true.graph.same_as(model_learn.graph):
        raise ValueError("models live on different graphs")
    if log_Z_true is None:
        log_Z_true = log_partition(model_true, 1.0, max_n=max_n)
    log_Z_learn = log_partition(model_learn, 1.0, max_n=max_n)
    diff = (model_learn.theta - model_true.theta) @ test.stats().vector
    return float(diff + log_Z_learn - log_Z_true)


def test_log_likelihood(model: IsingModel, test: SampleSet, *, max_n: int = MAX_N) -> float:
    """Mean of ``-E(s) - ln Z`` over the test samples."""
    return float(-test.mean_energy(model) - log_partition(model, 1.0, max_n=max_n))


@dataclass(frozen=True, eq=False)
class FitResult:
    model: IsingModel
    status: str  # "converged", "bounded" or "budget"
    max_moment_error: float
    evaluations: int


def boltzmann_fit(samples: SampleSet, graph=None, *, bound: float = 30.0, tol: float = 1e-3,
                  max_iter: int = 1000, max_n: int = MAX_N, theta0=None) -> FitResult:
    """Maximum-likelihood Boltzmann parameters for a sample set, with exact gradients.

    Returns the best iterate; the status is "bounded" when a parameter sits on
    the magnitude cap (the unbounded-MLE case) and "budget" when the moment
    error is still above ``tol`` after ``max_iter`` iterations.
    """
    graph = samples.graph if graph is None else graph
    data = samples.stats().vector
    count = [0]

    def objective(theta):
        count[0] += 1
        mg = exact_marginals(IsingModel.from_theta(graph, theta), 1.0, max_n=max_n)
        return float(theta @ data + mg.log_Z), data - mg.vector

    x0 = np.zeros(len(data)) if theta0 is None else np.array(theta0, dtype=np.float64)
    # a moment at +-1 has its likelihood maximum at infinity: pin it to the cap
    saturated = np.abs(data) >= 1.0 - 1e-12
    limits = [(-bound, bound)] * len(data)
    for i in np.flatnonzero(saturated):
        limits[i] = (-bound * np.sign(data[i]),) * 2
        x0[i] = limits[i][0]
    res = minimize(objective, x0, jac=True, method="L-BFGS-B", bounds=limits,
                   options={"maxiter": max_iter, "gtol": tol * 0.5, "ftol": 1e-15, "maxcor": 20})
    model = IsingModel.from_theta(graph, res.x)
    err = float(np.abs(exact_marginals(model, 1.0, max_n=max_n).vector - data).max())
    if (np.abs(res.x) >= bound - 1e-9).any():
        status = "bounded"
    elif err < tol:
        status = "converged"
    else:
        status = "budget"
    if status != "converged":
        warnings.warn(f"boltzmann_fit stopped with status {status!r}, moment error {err:.2e}", RuntimeWarning)
    return FitResult(model, status, err, count[0])
