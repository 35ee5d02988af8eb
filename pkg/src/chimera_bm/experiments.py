"""Figure-data pipelines: each writes plot-ready CSVs plus a JSON manifest."""

from __future__ import annotations

import platform
import time
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np

from . import __version__
from .evaluation import boltzmann_fit, kl_over_modes, mode_histogram, test_log_likelihood
from .exact import exact_mode_probabilities, exact_sample
from .fcl import (
    enumerate_cluster_minima, fcl_spec, make_fcl, make_random_fcl_grid, make_random_pm1, make_scaled_fcl3,
    scaled_fcl3_spec,
)
from .io import save_model, write_csv, write_json
from .ising import IsingModel
from .samplers import AnnealSchedule, SurrogateConfig, annealed_mcmc, annealed_mcmc_trajectory, seeded_chains, \
    surrogate_sample
from .training import TRACE_COLUMNS, TrainConfig, train

PCD_ETAS = (0.1, 0.2, 0.4, 0.7, 1.0)
SGD_ETAS = (0.4, 0.2, 0.1, 0.05, 0.025, 0.0125)


@dataclass
class Scale:
    """Sizes that differ between the quick default and the published settings."""

    chains: int = 10_000
    data_size: int = 100_000
    sizes: tuple = (3, 4)
    instances: int = 5
    size_iterations: int = 500
    ks: tuple = (2, 10, 50)
    train_iterations: int = 200
    sgd_iterations: int = 3000
    grid_n: int = 3
    grid_instances: int = 4
    grid_iterations: int = 500
    grid_k: int = 50

    @classmethod
    def paper(cls) -> "Scale":
        return cls(chains=100_000, data_size=500_000, sizes=(3, 4, 5), sgd_iterations=10_000, grid_n=5)


@dataclass
class Result:
    tables: dict = field(default_factory=dict)  # name -> (header, rows)
    summary: dict = field(default_factory=dict)
    models: dict = field(default_factory=dict)


class _Timer:
    def __init__(self):
        self.stages = {}

    def stage(self, name):
        timer = self

        class _Ctx:
            def __enter__(self):
                self.t = time.perf_counter()

            def __exit__(self, *exc):
                timer.stages[name] = timer.stages.get(name, 0.0) + time.perf_counter() - self.t

        return _Ctx()


def _fcl_sampling(variant: int, scale: Scale, seed: int, timer: _Timer) -> Result:
    model = make_fcl(variant)
    cat = enumerate_cluster_minima(model, fcl_spec(variant))
    with timer.stage("exact"):
        p = exact_mode_probabilities(model, 1.0, cat.configs)
    with timer.stage("annealed_mcmc"):
        mc = mode_histogram(annealed_mcmc(model, AnnealSchedule.linear(), scale.chains, seed), cat)
    with timer.stage("surrogate"):
        sur = mode_histogram(surrogate_sample(model, SurrogateConfig("ideal"), scale.chains, seed + 1), cat)
    rows = [(i, label, float(cat.energies[i]), p[i], mc.probs[i], sur.probs[i])
            for i, label in enumerate(cat.labels)]
    header = ["mode", "label", "energy", "exact", "annealed_mcmc", "surrogate_ideal"]
    return Result({"mode_probabilities": (header, rows)},
                  {"kl_annealed_mcmc": kl_over_modes(p, mc), "kl_surrogate_ideal": kl_over_modes(p, sur),
                   "other_mass_annealed_mcmc": mc.other_mass, "ground_count": cat.ground_count,
                   "gap": cat.gap})


def fcl1_sampling(scale, seed, timer):
    return _fcl_sampling(1, scale, seed, timer)


def fcl2_sampling(scale, seed, timer):
    return _fcl_sampling(2, scale, seed, timer)


def mcmc_dynamics(scale: Scale, seed: int, timer: _Timer) -> Result:
    model = make_fcl(1)
    cat = enumerate_cluster_minima(model, fcl_spec(1))
    sched = AnnealSchedule.linear()
    ground, excited = cat.ground, ~cat.ground
    with timer.stage("exact_trajectory"):
        exact = np.array([exact_mode_probabilities(model, b, cat.configs) for b in sched.betas])
    with timer.stage("annealed_mcmc"):
        _, traj = annealed_mcmc_trajectory(model, sched, scale.chains, seed, cat)
    rows = []
    for j, b in enumerate(sched.betas):
        rows.append((j, b, exact[j, ground].sum(), exact[j, excited].sum(), exact[j].sum(),
                     traj.mode_probs[j, ground].sum(), traj.mode_probs[j, excited].sum(),
                     traj.mode_probs[j].sum()))
    header = ["step", "beta", "exact_ground", "exact_excited", "exact_total",
              "mcmc_ground", "mcmc_excited", "mcmc_total"]
    ex = exact[:, excited].sum(axis=1)
    return Result({"occupation": (header, rows)},
                  {"exact_excited_peak": float(ex.max()), "exact_excited_final": float(ex[-1]),
                   "peak_beta": float(sched.betas[ex.argmax()])})


def _train_row(kind, trace):
    return [(kind, *r) for r in trace.csv_rows()]


def pcd_size_scaling(scale: Scale, seed: int, timer: _Timer) -> Result:
    rows, finals = [], []
    for n in scale.sizes:
        for inst in range(scale.instances):
            truth = make_random_pm1(n, seed + inst)
            data, test = exact_sample(truth, 1.0, scale.data_size, seed + 1000 + inst).split_interleaved()
            eval_every = 10 if n >= 5 else 1
            runs = [("EXACT", 0)] + [("PCD", k) for k in scale.ks]
            for method, k in runs:
                cfg = TrainConfig(method=method, k=max(k, 1), iterations=scale.size_iterations,
                                  eval_every=eval_every, seed=seed + inst)
                with timer.stage(f"C{n}_{method}{k or ''}"):
                    tr = train(IsingModel.zeros(truth.graph), data, test, cfg, reference=truth)
                finals.append((n, inst, method, k, tr.final_kl_test, tr.status))
                rows += [(n, inst, method, k, *r) for r in tr.csv_rows()]
    header = ["n", "instance", "method", "k"] + TRACE_COLUMNS
    final_header = ["n", "instance", "method", "k", "final_kl_test", "status"]
    return Result({"traces": (header, rows), "final_kl": (final_header, finals)})


def fcl1_training(scale: Scale, seed: int, timer: _Timer) -> Result:
    model = make_fcl(1)
    data, test = exact_sample(model, 1.0, scale.data_size, seed).split_interleaved()
    rows, summary = [], {}
    for method in ("SEEDED", "CD", "PCD"):
        cfg = TrainConfig(method=method, k=50, n_chains=1000, eta0=0.1, iterations=scale.train_iterations,
                          seed=seed + 1)
        with timer.stage(method):
            tr = train(IsingModel.zeros(model.graph), data, test, cfg, reference=model)
        kl = tr.column("kl_test")
        summary[method] = {"final_kl_test": float(kl[-1]), "min_kl_test": float(kl.min()),
                           "argmin_iter": int(tr.column("iter")[kl.argmin()]), "status": tr.status}
        rows += _train_row(method, tr)
    return Result({"traces": (["method"] + TRACE_COLUMNS, rows)}, summary)


def updates_to_reach(iters, kl, level: float):
    """First recorded iteration whose test KL is at or below ``level`` (None if never)."""
    hit = np.flatnonzero(np.asarray(kl) <= level)
    return int(np.asarray(iters)[hit[0]]) if hit.size else None


def fcl2_sgd(scale: Scale, seed: int, timer: _Timer) -> Result:
    model = make_fcl(2)
    data, test = exact_sample(model, 1.0, scale.data_size, seed).split_interleaved()
    rows = []
    cfg = TrainConfig(method="SEEDED", k=50, n_chains=1000, eta0=0.1, iterations=scale.train_iterations,
                      seed=seed + 1)
    with timer.stage("SEEDED"):
        seeded = train(IsingModel.zeros(model.graph), data, test, cfg, reference=model)
    rows += _train_row("SEEDED-nesterov-0.1", seeded)
    level = float(np.mean(seeded.column("kl_test")[-20:]))
    summary = {"level": level,
               "seeded_updates": updates_to_reach(seeded.column("iter"), seeded.column("kl_test"), level)}
    for eta in SGD_ETAS:
        cfg = TrainConfig(method="PCD", optimizer="sgd", k=50, n_chains=1000, eta0=eta,
                          iterations=scale.sgd_iterations, eval_every=10, seed=seed + 1)
        with timer.stage(f"PCD-sgd-{eta}"):
            tr = train(IsingModel.zeros(model.graph), data, test, cfg, reference=model)
        rows += _train_row(f"PCD-sgd-{eta}", tr)
        summary[f"pcd_sgd_{eta}_updates"] = updates_to_reach(tr.column("iter"), tr.column("kl_test"), level)
        summary[f"pcd_sgd_{eta}_min_kl"] = float(tr.column("kl_test").min())
    return Result({"traces": (["run"] + TRACE_COLUMNS, rows)}, summary)


def quantum_compensation(scale: Scale, seed: int, timer: _Timer, *, k: int = 1, gamma: float = 0.5,
                         count: int | None = None) -> Result:
    """Train against the cluster-reduced quantum surrogate and compare mode fits and log-likelihoods."""
    model = make_scaled_fcl3()
    cat = enumerate_cluster_minima(model, scaled_fcl3_spec())
    count = count or scale.data_size
    data, test = exact_sample(model, 1.0, 2 * count, seed).split_interleaved()
    sur = SurrogateConfig("quantum", gamma=gamma)
    cfg = TrainConfig(method="SEEDED", k=k, n_chains=1000, eta0=0.1, iterations=scale.train_iterations,
                      seed=seed + 1, surrogate=sur, eval_every=10)
    with timer.stage("train"):
        tr = train(IsingModel.zeros(model.graph), data, test, cfg, reference=model, reduction=cat.reduction)
    learned = tr.model
    with timer.stage("surrogate_samples"):
        seeds = surrogate_sample(learned, sur, count, seed + 2, reduction=cat.reduction)
        sur_samples = seeded_chains(learned, seeds, k, seed + 3)
    with timer.stage("boltzmann_samples"):
        boltz_samples = exact_sample(learned, 1.0, count, seed + 4)
    with timer.stage("boltzmann_fit"):
        fit = boltzmann_fit(sur_samples)
    h_data = mode_histogram(test, cat)
    h_sur = mode_histogram(sur_samples, cat)
    h_boltz = mode_histogram(boltz_samples, cat)
    p_fit = exact_mode_probabilities(fit.model, 1.0, cat.configs)
    rows = [(i, label, float(cat.energies[i]), h_data.probs[i], h_sur.probs[i], h_boltz.probs[i], p_fit[i])
            for i, label in enumerate(cat.labels)]
    summary = {
        "kl_surrogate": kl_over_modes(h_data.probs, h_sur),
        "kl_boltzmann_learned": kl_over_modes(h_data.probs, h_boltz),
        "ll_fit": test_log_likelihood(fit.model, test),
        "ll_learned": test_log_likelihood(learned, test),
        "ll_true": test_log_likelihood(model, test),
        "fit_status": fit.status,
        "train_status": tr.status,
    }
    header = ["mode", "label", "energy", "data", "surrogate_learned", "boltzmann_learned", "boltzmann_fit"]
    return Result({"mode_probabilities": (header, rows),
                   "trace": (TRACE_COLUMNS, tr.csv_rows())}, summary,
                  {"learned": learned, "fit": fit.model})


def boltzmann_fit_figure(scale, seed, timer):
    return quantum_compensation(scale, seed, timer)


def annealed_schedule(scale: Scale, seed: int, timer: _Timer, *, surrogate: SurrogateConfig | None = None,
                      etas=PCD_ETAS) -> Result:
    """SEEDED vs PCD under the annealed learning rate on random frustrated-cluster grids."""
    rows, finals = [], []
    surrogate = surrogate or SurrogateConfig("ideal")
    for inst in range(scale.grid_instances):
        truth = make_random_fcl_grid(scale.grid_n, (-1.5, -2.5), (-0.5, -0.25, 0.38), True, seed + inst)
        data, test = exact_sample(truth, 1.0, scale.data_size, seed + 100 + inst).split_interleaved()
        runs = [("SEEDED", None)] + [("PCD", eta) for eta in etas]
        for method, eta in runs:
            cfg = TrainConfig(method=method, k=scale.grid_k, n_chains=1000, eta0=eta or 0.1,
                              schedule="annealed", iterations=scale.grid_iterations,
                              eval_every=scale.grid_iterations, seed=seed + inst, surrogate=surrogate)
            with timer.stage(f"inst{inst}_{method}_{eta}"):
                tr = train(IsingModel.zeros(truth.graph), data, test, cfg, reference=truth)
            finals.append((inst, method, cfg.eta0, tr.final_kl_test, tr.status))
            rows += [(inst, method, cfg.eta0, *r) for r in tr.csv_rows()]
    return Result({"traces": (["instance", "method", "eta0"] + TRACE_COLUMNS, rows),
                   "final_kl": (["instance", "method", "eta0", "final_kl_test", "status"], finals)})


FIGURES = {
    "fcl1-sampling": fcl1_sampling,
    "fcl2-sampling": fcl2_sampling,
    "mcmc-dynamics": mcmc_dynamics,
    "pcd-size-scaling": pcd_size_scaling,
    "fcl1-training": fcl1_training,
    "fcl2-sgd": fcl2_sgd,
    "boltzmann-fit": boltzmann_fit_figure,
    "annealed-schedule": annealed_schedule,
}


def reproduce(figure_id: str, out_dir, *, seed: int = 0, paper_scale: bool = False, overrides: dict | None = None,
              threads: int | None = None) -> dict:
    """Run one figure pipeline and write ``<table>.csv`` files and ``manifest.json`` into ``out_dir``."""
    if figure_id not in FIGURES:
        raise KeyError(f"unknown figure id {figure_id!r}; valid ids: {', '.join(FIGURES)}")
    scale = Scale.paper() if paper_scale else Scale()
    if overrides:
        scale = replace(scale, **overrides)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    timer = _Timer()
    start = time.perf_counter()
    result = FIGURES[figure_id](scale, seed, timer)
    files = []
    for name, (header, rows) in result.tables.items():
        write_csv(out / f"{name}.csv", header, rows)
        files.append(f"{name}.csv")
    for name, model in result.models.items():
        save_model(model, out / f"{name}_model.json")
        files.append(f"{name}_model.json")
    manifest = {
        "figure": figure_id,
        "seed": seed,
        "paper_scale": paper_scale,
        "scale": asdict(scale),
        "threads": threads,
        "files": files,
        "summary": result.summary,
        "stage_seconds": timer.stages,
        "total_seconds": time.perf_counter() - start,
        "version": __version__,
        "python": platform.python_version(),
        "numpy": np.__version__,
    }
    write_json(out / "manifest.json", manifest)
    return manifest
