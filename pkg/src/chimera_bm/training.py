"""Maximum-likelihood training of fully visible Boltzmann machines."""

from __future__ import annotations

import hashlib
import time
from dataclasses import dataclass, field

import numpy as np

from .evaluation import ll_ratio
from .exact import MAX_N, exact_marginals, log_partition
from .ising import IsingModel, SampleSet, SufficientStats
from .quantum import ClusterReduction
from .samplers import ChainEnsemble, SurrogateConfig, seeded_chains, surrogate_sample

METHODS = ("CD", "PCD", "SEEDED", "EXACT")
TRACE_COLUMNS = ["iter", "eta", "grad_norm", "kl_train", "kl_test", "seconds"]


@dataclass(frozen=True)
class TrainConfig:
    method: str = "EXACT"
    k: int = 50
    n_chains: int = 1000
    optimizer: str = "nesterov"
    eta0: float = 0.1
    schedule: str = "constant"
    t_scale: float = 200.0
    mu: float = 0.9
    iterations: int = 200
    surrogate: SurrogateConfig = field(default_factory=SurrogateConfig)
    minibatch: int | None = None
    eval_every: int = 1
    seed: int = 0
    learn_h: bool = False

    def __post_init__(self):
        if self.method not in METHODS:
            raise ValueError(f"method must be one of {METHODS}, got {self.method!r}")
        if self.method in ("CD", "PCD") and self.k < 1:
            raise ValueError(f"{self.method} needs k >= 1 so that chains move")
        if self.k < 0 or self.n_chains < 1 or self.iterations < 1 or self.eval_every < 1:
            raise ValueError("k, n_chains, iterations and eval_every must be positive")
        if self.optimizer not in ("sgd", "nesterov"):
            raise ValueError(f"unknown optimizer {self.optimizer!r}")
        if self.schedule not in ("constant", "annealed"):
            raise ValueError(f"unknown schedule {self.schedule!r}")
        if not (self.eta0 > 0 and 0 <= self.mu < 1 and self.t_scale > 0):
            raise ValueError("need eta0 > 0, 0 <= mu < 1 and t_scale > 0")


@dataclass
class OptimizerState:
    velocity: np.ndarray
    t: int = 0


@dataclass
class TraceRow:
    iter: int
    eta: float
    grad_norm: float
    kl_train: float
    kl_test: float
    seconds: float
    theta_hash: str


@dataclass
class TrainTrace:
    rows: list = field(default_factory=list)
    status: str = "completed"
    model: IsingModel | None = None
    thetas: list = field(default_factory=list)
    initial_kl: tuple = (float("nan"), float("nan"))

    def column(self, name: str) -> np.ndarray:
        return np.array([getattr(r, name) for r in self.rows])

    def csv_rows(self):
        return [[getattr(r, c) for c in TRACE_COLUMNS] for r in self.rows]

    @property
    def final_kl_test(self) -> float:
        return self.rows[-1].kl_test if self.rows else float("nan")


def gradient_estimate(data_stats: SufficientStats, model_stats: SufficientStats, mask=None) -> np.ndarray:
    """``-E_data[phi] + E_model[phi]``; components outside ``mask`` are zero."""
    d, m = data_stats.vector, model_stats.vector
    if d.shape != m.shape:
        raise ValueError(f"statistics shapes differ: {d.shape} vs {m.shape}")
    g = m - d
    if mask is not None:
        g = np.where(mask, g, 0.0)
    return g


def sgd_step(theta, grad, eta: float) -> np.ndarray:
    return np.asarray(theta) + eta * np.asarray(grad)


def nesterov_step(theta, state: OptimizerState, grad_at_lookahead, eta: float, mu: float):
    """Momentum step with the gradient taken at ``theta + mu * velocity``."""
    v = mu * state.velocity + eta * np.asarray(grad_at_lookahead)
    return np.asarray(theta) + v, OptimizerState(v, state.t + 1)


def lr_schedule(eta0: float, t: int, mode: str = "constant", t_scale: float = 200.0) -> float:
    if t < 0:
        raise ValueError("t must be nonnegative")
    if mode == "constant":
        return eta0
    if mode == "annealed":
        return eta0 / (t / t_scale + 1.0)
    raise ValueError(f"unknown schedule {mode!r}")


def _theta_hash(theta) -> str:
    return hashlib.sha1(np.ascontiguousarray(theta).tobytes()).hexdigest()[:12]


def _subseed(seed: int, *key) -> int:
    return int(np.random.SeedSequence([int(seed), *key]).generate_state(1, np.uint64)[0] >> np.uint64(2))


def train(model0: IsingModel, data: SampleSet, test: SampleSet, config: TrainConfig, *,
          reference: IsingModel | None = None, reduction: ClusterReduction | None = None,
          max_n: int = MAX_N, keep_thetas: bool = False, kl_fn=None) -> TrainTrace:
    """Run ``config.iterations`` parameter updates from ``model0``.

    ``reference`` is the data-generating model; when given, ``kl_train`` and
    ``kl_test`` are KL(reference || learned) estimated on the train and test
    samples. ``kl_fn(model) -> (kl_train, kl_test)`` overrides that.
    """
    graph = model0.graph
    if not (data.graph.same_as(graph) and test.graph.same_as(graph)):
        raise ValueError("data and test samples must live on the model's graph")
    cfg = config
    data_stats = data.stats()
    mask = np.ones(model0.num_params, dtype=bool)
    if not cfg.learn_h:
        mask[: graph.num_nodes] = False
    theta = model0.theta.copy()
    state = OptimizerState(np.zeros_like(theta))
    rng = np.random.default_rng([int(cfg.seed), 1])
    gibbs_seed = _subseed(cfg.seed, 2)
    ensemble = None
    if cfg.method == "PCD":
        idx = rng.choice(len(data), size=cfg.n_chains, replace=len(data) < cfg.n_chains)
        ensemble = ChainEnsemble(data.spins[idx].copy(), gibbs_seed)

    log_Z_ref = None
    if kl_fn is None and reference is not None:
        log_Z_ref = log_partition(reference, 1.0, max_n=max_n)

        def kl_fn(m):
            return (ll_ratio(reference, m, data, max_n=max_n, log_Z_true=log_Z_ref),
                    ll_ratio(reference, m, test, max_n=max_n, log_Z_true=log_Z_ref))

    trace = TrainTrace()
    if kl_fn is not None:
        trace.initial_kl = kl_fn(model0)
    start = time.perf_counter()
    for t in range(cfg.iterations):
        eta = lr_schedule(cfg.eta0, t, cfg.schedule, cfg.t_scale)
        with np.errstate(over="ignore", invalid="ignore"):
            point = theta + cfg.mu * state.velocity if cfg.optimizer == "nesterov" else theta
        if not np.isfinite(point).all():
            trace.status = "diverged"
            break
        model_t = IsingModel.from_theta(graph, point)
        if cfg.method == "EXACT":
            model_stats = exact_marginals(model_t, 1.0, max_n=max_n).stats()
        elif cfg.method == "CD":
            size = min(cfg.minibatch or cfg.n_chains, len(data))
            seeds = data.take(np.sort(rng.choice(len(data), size=size, replace=False)))
            model_stats = seeded_chains(model_t, seeds, cfg.k, gibbs_seed, sweep_offset=t * cfg.k).stats()
        elif cfg.method == "PCD":
            model_stats = SampleSet(graph, ensemble.advance(model_t, cfg.k)).stats()
        else:
            seeds = surrogate_sample(model_t, cfg.surrogate, cfg.n_chains, _subseed(cfg.seed, 3, t),
                                     reduction=reduction)
            model_stats = seeded_chains(model_t, seeds, cfg.k, gibbs_seed, sweep_offset=t * cfg.k).stats()
        grad = gradient_estimate(data_stats, model_stats, mask)
        if cfg.optimizer == "nesterov":
            new_theta, state = nesterov_step(theta, state, grad, eta, cfg.mu)
        else:
            new_theta, state = sgd_step(theta, grad, eta), OptimizerState(state.velocity, state.t + 1)
        with np.errstate(over="ignore", invalid="ignore"):
            new_theta = np.where(mask, new_theta, model0.theta)
        if not np.isfinite(new_theta).all():
            trace.status = "diverged"
            break
        theta = new_theta
        if keep_thetas:
            trace.thetas.append(theta.copy())
        if (t + 1) % cfg.eval_every == 0 or t + 1 == cfg.iterations:
            learned = IsingModel.from_theta(graph, theta)
            kl_tr, kl_te = kl_fn(learned) if kl_fn is not None else (float("nan"), float("nan"))
            trace.rows.append(TraceRow(t + 1, eta, float(np.linalg.norm(grad)), kl_tr, kl_te,
                                       time.perf_counter() - start, _theta_hash(theta)))
    trace.model = IsingModel.from_theta(graph, theta)
    return trace
