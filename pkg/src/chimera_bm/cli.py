"""Command-line experiment runner: generate, sample, train, eval, reproduce."""

from __future__ import annotations

import argparse
import json
import sys
import time
from pathlib import Path


try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from . import __version__, gibbs
from .evaluation import boltzmann_fit, kl_over_modes, ll_ratio, mode_histogram, test_log_likelihood
from .exact import ResourceLimitError, exact_mode_probabilities, exact_sample
from .experiments import FIGURES, reproduce
from .fcl import (
    MAX_CATALOG_CLUSTERS, InvalidSpecError, ModeCatalog, enumerate_cluster_minima, fcl_spec, make_fcl,
    make_random_pm1, random_fcl_grid_spec, scaled_fcl3_spec,
)
from .io import load_model, load_samples, save_model, save_samples, write_csv, write_json
from .ising import IsingModel
from .samplers import AnnealSchedule, SurrogateConfig, annealed_mcmc, seeded_chains, surrogate_sample
from .training import TRACE_COLUMNS, TrainConfig, train

EXIT_OK = 0
EXIT_DIVERGED = 3
EXIT_IO = 4
EXIT_RESOURCE = 5
EXIT_INVALID = 6


class ConfigError(ValueError):
    pass


def _load_config(path) -> dict:
    if path is None:
        return {}
    with open(path, "rb") as f:
        return tomllib.load(f)


def _pick(args, name: str, section: dict, default=None, key: str | None = None):
    """Command-line value, else the config-file value, else ``default``."""
    value = getattr(args, name, None)
    if value is not None:
        return value
    return section.get(key or name, default)


def _out_dir(args, cfg) -> Path:
    out = Path(_pick(args, "out", cfg.get("output", {}), ".", key="dir"))
    out.mkdir(parents=True, exist_ok=True)
    return out


def _manifest(out: Path, command: str, params: dict, start: float, **extra) -> None:
    write_json(out / "manifest.json", {"command": command, "params": params, "version": __version__,
                                       "seconds": time.perf_counter() - start, **extra})


def _float_list(text):
    return [float(x) for x in str(text).split(",")] if text is not None else None


# ---------------------------------------------------------------- generate

def _problem(args, section: dict):
    """Build (model, spec-or-None, params) from flags and the [problem] section."""
    kind = section.get("kind")
    if args.fcl is not None:
        kind = "fcl"
    elif args.scaled_fcl3:
        kind = "scaled-fcl3"
    elif args.random_pm1:
        kind = "random-pm1"
    elif args.fcl_grid:
        kind = "fcl-grid"
    seed = int(_pick(args, "seed", section, 0))
    params = {"kind": kind, "seed": seed}
    if kind == "fcl":
        variant = int(_pick(args, "fcl", section, 1, key="variant"))
        j_intra = _float_list(args.j_intra) or section.get("j_intra")
        j_inter = _float_list(args.j_inter) or section.get("j_inter")
        spec = fcl_spec(variant, j_intra, j_inter)
        params.update(variant=variant, j_intra=list(spec.j_intra), j_inter=[b[2] for b in spec.bundles])
    elif kind == "scaled-fcl3":
        spec = scaled_fcl3_spec()
    elif kind == "fcl-grid":
        n = int(_pick(args, "n", section, 5))
        j_intra = _float_list(args.j_intra) or section.get("j_intra", [-2.5])
        j_inter = _float_list(args.j_inter) or section.get("j_inter", [-0.25, 0.25])
        frustrate = bool(args.frustrate_all or section.get("frustrate_all", False))
        spec = random_fcl_grid_spec(n, j_intra, j_inter, frustrate, seed)
        params.update(n=n, j_intra=list(j_intra), j_inter=list(j_inter), frustrate_all=frustrate)
    elif kind == "random-pm1":
        n = int(_pick(args, "n", section, 3))
        params["n"] = n
        return make_random_pm1(n, seed), None, params
    else:
        raise ConfigError("choose a problem: --fcl V, --scaled-fcl3, --random-pm1 or --fcl-grid")
    return make_fcl(spec), spec, params


def cmd_generate(args, cfg) -> int:
    start = time.perf_counter()
    model, spec, params = _problem(args, cfg.get("problem", {}))
    out = _out_dir(args, cfg)
    save_model(model, out / "model.json")
    g = model.graph
    summary = f"nodes {g.num_nodes}, edges {g.num_edges}"
    if spec is not None and spec.num_clusters <= MAX_CATALOG_CLUSTERS:
        cat = enumerate_cluster_minima(model, spec)
        write_json(out / "catalog.json", cat.to_dict())
        summary += f"; {len(cat)} minima, {cat.ground_count} ground, gap {cat.gap:g}"
    print(summary)
    _manifest(out, "generate", params, start)
    return EXIT_OK


# ------------------------------------------------------------------ sample

def _catalog(path, model):
    if path is None:
        return None
    return ModeCatalog.from_dict(json.loads(Path(path).read_text()), model)


def cmd_sample(args, cfg) -> int:
    start = time.perf_counter()
    sec = cfg.get("data", {})
    model = load_model(_pick(args, "model", sec))
    catalog = _catalog(_pick(args, "catalog", sec), model)
    seed = int(_pick(args, "seed", sec, 0))
    sampler = _pick(args, "sampler", sec, "exact")
    count = int(_pick(args, "count", sec, 100_000 if args.paper_scale else 10_000))
    params = {"model": str(_pick(args, "model", sec)), "sampler": sampler, "count": count, "seed": seed}
    if sampler == "exact":
        beta = float(_pick(args, "beta", sec, 1.0))
        params["beta"] = beta
        samples = exact_sample(model, beta, count, seed)
    elif sampler == "annealed-mcmc":
        steps = int(_pick(args, "anneal_steps", sec, 1000))
        sweeps = int(_pick(args, "sweeps_per_beta", sec, 10))
        params.update(anneal_steps=steps, sweeps_per_beta=sweeps)
        samples = annealed_mcmc(model, AnnealSchedule.linear(0.01, 1.0, steps, sweeps), count, seed)
    elif sampler == "surrogate":
        sur = SurrogateConfig(mode=_pick(args, "surrogate_mode", sec, "ideal"),
                              gamma=float(_pick(args, "gamma", sec, 0.5)))
        params.update(surrogate_mode=sur.mode, gamma=sur.gamma)
        reduction = catalog.reduction if catalog is not None and sur.mode == "quantum" else None
        samples = surrogate_sample(model, sur, count, seed, reduction=reduction)
    elif sampler == "seeded":
        seeds_path = _pick(args, "seeds", sec)
        if seeds_path is None:
            raise ConfigError("the seeded sampler needs --seeds FILE")
        k = int(_pick(args, "k", sec, 50))
        params.update(seeds=str(seeds_path), k=k)
        samples = seeded_chains(model, load_samples(seeds_path, model.graph), k, seed)
    else:
        raise ConfigError(f"unknown sampler {sampler!r}")
    out = _out_dir(args, cfg)
    if args.split:
        tr, te = samples.split_interleaved()
        save_samples(tr, out / "train.txt.gz")
        save_samples(te, out / "test.txt.gz")
    else:
        save_samples(samples, out / "samples.txt.gz")
    extra = {}
    if catalog is not None:
        hist = mode_histogram(samples, catalog)
        p = exact_mode_probabilities(model, 1.0, catalog.configs)
        rows = [(i, lab, float(catalog.energies[i]), p[i], hist.probs[i]) for i, lab in enumerate(catalog.labels)]
        write_csv(out / "histogram.csv", ["mode", "label", "energy", "exact", "empirical"], rows)
        kl = kl_over_modes(p, hist)
        extra = {"kl_over_modes": kl, "other_mass": hist.other_mass}
        print(f"KL over modes {kl:.4f} (other mass {hist.other_mass:.4f})")
    print(f"wrote {len(samples)} samples to {out}")
    _manifest(out, "sample", params, start, **extra)
    return EXIT_OK


# ------------------------------------------------------------------- train

def _train_config(args, sec: dict) -> TrainConfig:
    sur_sec = sec.get("surrogate", {})
    sur = SurrogateConfig(mode=_pick(args, "surrogate_mode", sur_sec, "ideal", key="mode"),
                          gamma=float(_pick(args, "gamma", sur_sec, 0.5)),
                          **{k: v for k, v in sur_sec.items() if k not in ("mode", "gamma")})
    defaults = TrainConfig()
    fields = {}
    for name in ("method", "k", "n_chains", "optimizer", "eta0", "schedule", "t_scale", "mu", "iterations",
                 "minibatch", "eval_every", "seed", "learn_h"):
        fields[name] = _pick(args, name, sec, getattr(defaults, name))
    return TrainConfig(surrogate=sur, **fields)


def cmd_train(args, cfg) -> int:
    start = time.perf_counter()
    sec = cfg.get("train", {})
    reference_path = _pick(args, "reference", sec)
    reference = load_model(reference_path) if reference_path else None
    init_path = _pick(args, "init", sec)
    if init_path:
        model0 = load_model(init_path)
    elif reference is not None:
        model0 = IsingModel.zeros(reference.graph)
    else:
        raise ConfigError("train needs --init MODEL or --reference MODEL to fix the graph")
    data = load_samples(_pick(args, "data", sec), model0.graph)
    test = load_samples(_pick(args, "test", sec), model0.graph)
    config = _train_config(args, sec)
    reduction = None
    catalog_path = _pick(args, "catalog", sec)
    if catalog_path and config.surrogate.mode == "quantum":
        reduction = _catalog(catalog_path, model0).reduction
    trace = train(model0, data, test, config, reference=reference, reduction=reduction)
    out = _out_dir(args, cfg)
    write_csv(out / "trace.csv", TRACE_COLUMNS, trace.csv_rows())
    save_model(trace.model, out / "learned_model.json")
    params = {k: v for k, v in vars(config).items() if k != "surrogate"}
    params["surrogate"] = vars(config.surrogate)
    params.update(data=str(_pick(args, "data", sec)), test=str(_pick(args, "test", sec)),
                  reference=str(reference_path), init=str(init_path))
    _manifest(out, "train", params, start, status=trace.status, final_kl_test=trace.final_kl_test,
              theta_hash=trace.rows[-1].theta_hash if trace.rows else None)
    print(f"{trace.status}: {len(trace.rows)} trace rows, final kl_test {trace.final_kl_test:.5g}")
    return EXIT_DIVERGED if trace.status == "diverged" else EXIT_OK


# -------------------------------------------------------------------- eval

def cmd_eval(args, cfg) -> int:
    start = time.perf_counter()
    sec = cfg.get("eval", {})
    model = load_model(_pick(args, "model", sec))
    report = {}
    test_path = _pick(args, "test", sec)
    test = load_samples(test_path, model.graph) if test_path else None
    if test is not None:
        report["test_log_likelihood"] = test_log_likelihood(model, test)
        ref_path = _pick(args, "reference", sec)
        if ref_path:
            report["kl_estimate"] = ll_ratio(load_model(ref_path), model, test)
    samples_path = _pick(args, "samples", sec)
    samples = load_samples(samples_path, model.graph) if samples_path else None
    catalog = _catalog(_pick(args, "catalog", sec), model)
    if catalog is not None and samples is not None:
        p = exact_mode_probabilities(model, 1.0, catalog.configs)
        report["kl_over_modes"] = kl_over_modes(p, mode_histogram(samples, catalog))
    if args.fit:
        if samples is None:
            raise ConfigError("--fit needs --samples")
        fit = boltzmann_fit(samples)
        report["fit_status"] = fit.status
        out = _out_dir(args, cfg)
        save_model(fit.model, out / "fit_model.json")
        if test is not None:
            report["fit_test_log_likelihood"] = test_log_likelihood(fit.model, test)
    out = _out_dir(args, cfg)
    write_json(out / "eval.json", report)
    for key, value in report.items():
        print(f"{key}: {value}")
    _manifest(out, "eval", {"model": str(_pick(args, "model", sec))}, start)
    return EXIT_OK


# --------------------------------------------------------------- reproduce

def cmd_reproduce(args, cfg) -> int:
    if args.figure not in FIGURES:
        print(f"unknown figure id {args.figure!r}; valid ids: {', '.join(FIGURES)}", file=sys.stderr)
        return EXIT_INVALID
    overrides = dict(cfg.get("reproduce", {}))
    if args.instances is not None:
        overrides["instances"] = args.instances
        overrides["grid_instances"] = args.instances
    seed = int(_pick(args, "seed", cfg.get("reproduce", {}), 0))
    overrides.pop("seed", None)
    out = _out_dir(args, cfg)
    manifest = reproduce(args.figure, out, seed=seed, paper_scale=args.paper_scale, overrides=overrides,
                         threads=args.threads)
    print(json.dumps(manifest["summary"], indent=1, default=float))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="TOML experiment config")
    common.add_argument("--seed", type=int)
    common.add_argument("--threads", type=int, help="worker threads (results do not depend on it)")
    common.add_argument("--paper-scale", action="store_true", help="published sizes instead of quick defaults")
    common.add_argument("--out", help="output directory")

    parser = argparse.ArgumentParser(prog="chimera-bm", description=__doc__)
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", parents=[common], help="write a problem model and its mode catalog")
    kind = p.add_mutually_exclusive_group()
    kind.add_argument("--fcl", type=int, metavar="V", help="FCL variant 1-4")
    kind.add_argument("--scaled-fcl3", action="store_true")
    kind.add_argument("--random-pm1", action="store_true")
    kind.add_argument("--fcl-grid", action="store_true")
    p.add_argument("--n", type=int)
    p.add_argument("--j-intra", help="comma-separated intra-cell weights (or value set for --fcl-grid)")
    p.add_argument("--j-inter", help="comma-separated bundle weights (or value set for --fcl-grid)")
    p.add_argument("--frustrate-all", action="store_true", help="frustrate every plaquette of the grid")
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("sample", parents=[common], help="draw samples from a model")
    p.add_argument("--model")
    p.add_argument("--catalog")
    p.add_argument("--sampler", choices=["exact", "annealed-mcmc", "surrogate", "seeded"])
    p.add_argument("--count", type=int)
    p.add_argument("--beta", type=float)
    p.add_argument("--anneal-steps", type=int)
    p.add_argument("--sweeps-per-beta", type=int)
    p.add_argument("--surrogate-mode", choices=["ideal", "noisy", "quantum"])
    p.add_argument("--gamma", type=float)
    p.add_argument("--seeds", help="sample file of chain seeds for the seeded sampler")
    p.add_argument("--k", type=int)
    p.add_argument("--split", action="store_true", help="write interleaved train/test halves")
    p.set_defaults(func=cmd_sample)

    p = sub.add_parser("train", parents=[common], help="fit a model to samples")
    p.add_argument("--data")
    p.add_argument("--test")
    p.add_argument("--reference", help="data-generating model, enables KL tracking")
    p.add_argument("--init", help="starting model (default: zeros on the reference graph)")
    p.add_argument("--catalog", help="mode catalog, used for the cluster-reduced quantum surrogate")
    p.add_argument("--method", choices=["CD", "PCD", "SEEDED", "EXACT"])
    p.add_argument("--k", type=int)
    p.add_argument("--n-chains", type=int)
    p.add_argument("--optimizer", choices=["sgd", "nesterov"])
    p.add_argument("--eta0", type=float)
    p.add_argument("--schedule", choices=["constant", "annealed"])
    p.add_argument("--t-scale", type=float)
    p.add_argument("--mu", type=float)
    p.add_argument("--iterations", type=int)
    p.add_argument("--minibatch", type=int)
    p.add_argument("--eval-every", type=int)
    p.add_argument("--learn-h", action="store_const", const=True)
    p.add_argument("--surrogate-mode", choices=["ideal", "noisy", "quantum"])
    p.add_argument("--gamma", type=float)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", parents=[common], help="score a model on test data and samples")
    p.add_argument("--model")
    p.add_argument("--test")
    p.add_argument("--reference")
    p.add_argument("--samples")
    p.add_argument("--catalog")
    p.add_argument("--fit", action="store_true", help="Boltzmann-fit the samples and score the fit")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("reproduce", parents=[common], help="regenerate the data behind a figure")
    p.add_argument("figure", help=f"one of: {', '.join(FIGURES)}")
    p.add_argument("--instances", type=int)
    p.set_defaults(func=cmd_reproduce)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = _load_config(args.config)
        gibbs.set_threads(args.threads)
        return args.func(args, cfg)
    except (OSError, json.JSONDecodeError, tomllib.TOMLDecodeError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_IO
    except ResourceLimitError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_RESOURCE
    except (InvalidSpecError, ConfigError, ValueError, KeyError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
