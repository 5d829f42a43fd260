"""Command-line front end: single fits, dataset dumps and benchmark sweeps.

Subcommands:

  fit       fit one dataset from a flat file, write a JSON report
  simulate  dump generated scenario replicates in the flat sample format
  sweep     Monte Carlo grid over (dimension x dilation x method), CSV out

Sweep outputs are deterministic byte for byte given the same
configuration and seed: per-replicate wall times go to a JSONL sidecar
(timings.txt), never into the CSVs.  The default output directory can
be set with the SPARSEMIX_OUT environment variable.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys
import time
from dataclasses import asdict, dataclass, field

from . import __version__
from .baseline import baseline_fit
from .evaluate import METHODS, run_mc_cell
from .model import Hyperparams, NumericalError, SampleSet
from .simulate import ScenarioConfig, gen_replicate, read_sample, write_sample
from .sparse_em import run as sparse_fit

EXIT_OK = 0
EXIT_NUMERICAL = 1
EXIT_USAGE = 2

OUT_ENV_VAR = "SPARSEMIX_OUT"


@dataclass
class SweepSpec:
    """Resolved configuration of one sweep invocation."""

    dims: list
    dilations: list
    methods: list
    replicates: int
    seed: int
    out: str
    jobs: int = 1
    n_points: int = 10
    components: int = 3
    weights: tuple = (0.3, 0.2, 0.5)
    variances: tuple = (5.0, 7.0, 10.0)
    hyperparams: Hyperparams = field(default_factory=Hyperparams)

    def __post_init__(self):
        if not self.dims or not self.dilations or not self.methods:
            raise ValueError("dims, dilations and methods must be non-empty")
        if self.replicates < 1:
            raise ValueError("replicates must be >= 1")
        for m in self.methods:
            if m not in METHODS:
                raise ValueError(f"unknown method {m!r}")

    def scenario(self, dim: int, dilation: float) -> ScenarioConfig:
        return ScenarioConfig(
            dim=dim,
            dilation=dilation,
            n_points=self.n_points,
            K=self.components,
            weights=self.weights,
            variances=self.variances,
            replicates=self.replicates,
            seed=self.seed,
        )


def fmt_num(x) -> str:
    """Compact stable rendering: integral floats lose the trailing .0."""
    f = float(x)
    if f == int(f) and abs(f) < 1e15:
        return str(int(f))
    return repr(f)


def cube_label(dilation: float) -> str:
    half = float(dilation) / 2.0
    return f"dilation={fmt_num(dilation)};cube=[{fmt_num(-half)}..{fmt_num(half)}]"


# ---------------------------------------------------------------------------
# fit
# ---------------------------------------------------------------------------

def cmd_fit(args) -> int:
    try:
        points, _labels = read_sample(args.input)
    except (OSError, ValueError) as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_USAGE
    try:
        Y = SampleSet.from_points(points)
    except ValueError as err:
        print(f"error: {args.input}: {err}", file=sys.stderr)
        return EXIT_USAGE

    hp = hyperparams_from_args(args)
    try:
        if args.method == "sparse":
            rep = sparse_fit(Y, args.components, hp)
            report = {
                "method": "sparse",
                "weights": rep.params.weights.tolist(),
                "means": Y.uncenter(rep.params.means(Y)).tolist(),
                "variances": rep.params.variances.tolist(),
                "betas": rep.params.betas.tolist(),
                "beta_kkt_residuals": rep.beta_kkt_residuals.tolist(),
                "assignments": rep.assignments.tolist(),
                "objective_trace": rep.objective_trace.tolist(),
                "converged": rep.converged,
                "cycles": rep.cycles_run,
                "restart_index": rep.restart_index,
                "reseed_events": [list(e) for e in rep.reseed_events],
                "diagnostic": rep.diagnostic,
            }
            final = float(rep.objective_trace[-1])
            converged = rep.converged
        else:
            rep = baseline_fit(Y, args.components, hp)
            report = {
                "method": "baseline",
                "weights": rep.params.weights.tolist(),
                "means": Y.uncenter(rep.params.means).tolist(),
                "variances": rep.params.variances.tolist(),
                "assignments": rep.assignments.tolist(),
                "objective_trace": rep.loglik_trace.tolist(),
                "converged": rep.converged,
                "cycles": rep.iterations,
                "restart_index": rep.restart_index,
                "reseed_events": [list(e) for e in rep.reseed_events],
                "diagnostic": rep.diagnostic,
            }
            final = float(rep.loglik_trace[-1])
            converged = rep.converged
    except NumericalError as err:
        print(f"error: numerical failure: {err}", file=sys.stderr)
        return EXIT_NUMERICAL

    report.update(
        {
            "input": str(args.input),
            "components": args.components,
            "n": Y.n,
            "dim": Y.d,
            "center_offset": Y.center_offset.tolist(),
            "seed": hp.seed,
            "version": __version__,
        }
    )
    out = args.out or default_report_path(args.input)
    with open(out, "w", encoding="ascii") as fh:
        json.dump(report, fh, indent=2, sort_keys=True)
        fh.write("\n")
    print(
        f"fit method={args.method} K={args.components} n={Y.n} d={Y.d} "
        f"converged={converged} cycles={report['cycles']} objective={final:.6f} report={out}"
    )
    return EXIT_OK


def default_report_path(input_path: str) -> str:
    base = os.path.basename(str(input_path))
    stem = base.rsplit(".", 1)[0] if "." in base else base
    out_dir = os.environ.get(OUT_ENV_VAR, os.path.dirname(str(input_path)) or ".")
    os.makedirs(out_dir, exist_ok=True)
    return os.path.join(out_dir, stem + ".report.json")


# ---------------------------------------------------------------------------
# simulate
# ---------------------------------------------------------------------------

def cmd_simulate(args) -> int:
    out_dir = resolve_out(args.out)
    cfg = ScenarioConfig(
        dim=args.dim,
        dilation=args.dilation,
        n_points=args.points,
        K=args.components,
        weights=tuple(args.weights),
        variances=tuple(args.variances),
        replicates=args.replicates,
        seed=args.seed,
    )
    os.makedirs(out_dir, exist_ok=True)
    for r in range(cfg.replicates):
        sample = gen_replicate(cfg, r)
        name = f"sample_dim{cfg.dim}_dilation{fmt_num(cfg.dilation)}_rep{r}.txt"
        write_sample(os.path.join(out_dir, name), sample)
    print(f"simulate wrote {cfg.replicates} replicate files to {out_dir}")
    return EXIT_OK


def resolve_out(out_flag) -> str:
    return str(out_flag) if out_flag else os.environ.get(OUT_ENV_VAR, ".")


# ---------------------------------------------------------------------------
# sweep
# ---------------------------------------------------------------------------

def cmd_sweep(args) -> int:
    try:
        spec = build_sweep_spec(args)
    except (OSError, ValueError, json.JSONDecodeError) as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_USAGE

    os.makedirs(spec.out, exist_ok=True)
    results = {}
    failures = []
    for dim in spec.dims:
        for dilation in spec.dilations:
            for method in spec.methods:
                scenario = spec.scenario(dim, dilation)
                t0 = time.perf_counter()
                try:
                    results[(dim, dilation, method)] = run_mc_cell(
                        scenario, method, spec.hyperparams, jobs=spec.jobs
                    )
                except Exception as err:  # record, keep sweeping
                    failures.append({"dim": dim, "dilation": dilation, "method": method, "error": str(err)})
                    continue
                elapsed = time.perf_counter() - t0
                print(
                    f"cell dim={dim} {cube_label(dilation)} method={method} "
                    f"ancrci={results[(dim, dilation, method)].ancrci:.3f} ({elapsed:.1f}s)"
                )

    write_ancrci_tables(spec, results)
    write_replicate_csv(spec, results)
    write_plot_files(spec, results)
    write_timings(spec, results)
    write_manifest(spec, results, failures)
    print(f"sweep wrote outputs to {spec.out}")
    return EXIT_OK if not failures else EXIT_NUMERICAL


def build_sweep_spec(args) -> SweepSpec:
    settings = {
        "dims": [2],
        "dilations": [10.0, 30.0, 50.0, 70.0, 100.0],
        "methods": list(METHODS),
        "replicates": 100,
        "seed": 0,
        "jobs": 1,
        "out": None,
        "n_points": 10,
        "components": 3,
        "weights": [0.3, 0.2, 0.5],
        "variances": [5.0, 7.0, 10.0],
        "hyperparams": {},
    }
    if args.config:
        with open(args.config, "r", encoding="utf-8") as fh:
            loaded = json.load(fh)
        unknown = set(loaded) - set(settings)
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        settings.update(loaded)

    # flags override file values
    for key in ("dims", "dilations", "methods", "replicates", "seed", "jobs", "out",
                "points", "components"):
        flag = getattr(args, key, None)
        if flag is not None:
            settings["n_points" if key == "points" else key] = flag
    if args.weights is not None:
        settings["weights"] = args.weights
    if args.variances is not None:
        settings["variances"] = args.variances

    hp_settings = dict(settings["hyperparams"])
    for key, flag in (
        ("lam", args.lam),
        ("max_cycles", args.max_cycles),
        ("tol", args.tol),
        ("variance_floor", args.variance_floor),
        ("restarts", args.restarts),
        ("relax", args.relax),
    ):
        if flag is not None:
            hp_settings[key] = flag
    hp_settings["seed"] = settings["seed"]
    hp = Hyperparams(**hp_settings)

    out = settings["out"] or os.environ.get(OUT_ENV_VAR) or "sweep_out"
    return SweepSpec(
        dims=[int(d) for d in settings["dims"]],
        dilations=[float(x) for x in settings["dilations"]],
        methods=list(settings["methods"]),
        replicates=int(settings["replicates"]),
        seed=int(settings["seed"]),
        out=str(out),
        jobs=int(settings["jobs"]),
        n_points=int(settings["n_points"]),
        components=int(settings["components"]),
        weights=tuple(float(w) for w in settings["weights"]),
        variances=tuple(float(v) for v in settings["variances"]),
        hyperparams=hp,
    )


def write_ancrci_tables(spec: SweepSpec, results) -> None:
    for method in spec.methods:
        path = os.path.join(spec.out, f"ancrci_{method}.csv")
        with open(path, "w", newline="", encoding="ascii") as fh:
            writer = csv.writer(fh)
            writer.writerow(["dim"] + [cube_label(dil) for dil in spec.dilations])
            for dim in spec.dims:
                row = [str(dim)]
                for dil in spec.dilations:
                    res = results.get((dim, dil, method))
                    row.append(repr(res.ancrci) if res is not None else "")
                writer.writerow(row)


def write_replicate_csv(spec: SweepSpec, results) -> None:
    path = os.path.join(spec.out, "replicates.csv")
    with open(path, "w", newline="", encoding="ascii") as fh:
        writer = csv.writer(fh)
        writer.writerow(["dim", "dilation", "method", "replicate", "correct", "converged", "data_hash"])
        for dim in spec.dims:
            for dil in spec.dilations:
                for method in spec.methods:
                    res = results.get((dim, dil, method))
                    if res is None:
                        continue
                    for rec in res.records:
                        writer.writerow(
                            [str(dim), fmt_num(dil), method, str(rec.replicate),
                             str(rec.correct), str(rec.converged).lower(), rec.data_hash]
                        )


def write_plot_files(spec: SweepSpec, results) -> None:
    for (dim, dil, method), res in sorted(results.items(), key=lambda kv: (kv[0][0], kv[0][1], kv[0][2])):
        name = f"plot_{method}_dim{dim}_dilation{fmt_num(dil)}.csv"
        with open(os.path.join(spec.out, name), "w", newline="", encoding="ascii") as fh:
            writer = csv.writer(fh)
            writer.writerow(["replicate", "correct"])
            for rec in res.records:
                writer.writerow([str(rec.replicate), str(rec.correct)])


def write_timings(spec: SweepSpec, results) -> None:
    path = os.path.join(spec.out, "timings.txt")
    with open(path, "w", encoding="ascii") as fh:
        for (dim, dil, method), res in sorted(results.items(), key=lambda kv: (kv[0][0], kv[0][1], kv[0][2])):
            for rec in res.records:
                fh.write(
                    json.dumps(
                        {
                            "dim": dim,
                            "dilation": dil,
                            "method": method,
                            "replicate": rec.replicate,
                            "seconds": rec.seconds,
                        },
                        sort_keys=True,
                    )
                    + "\n"
                )


def write_manifest(spec: SweepSpec, results, failures) -> None:
    cells = {}
    for (dim, dil, method), res in results.items():
        key = f"dim={dim};{cube_label(dil)};method={method}"
        cells[key] = {
            "ancrci": res.ancrci,
            "replicates": len(res.records),
            "non_converged": sum(1 for r in res.records if not r.converged),
            "total_seconds": sum(r.seconds for r in res.records),
        }
    hp = asdict(spec.hyperparams)
    manifest = {
        "version": __version__,
        "dims": spec.dims,
        "dilations": spec.dilations,
        "methods": spec.methods,
        "replicates": spec.replicates,
        "seed": spec.seed,
        "jobs": spec.jobs,
        "n_points": spec.n_points,
        "components": spec.components,
        "weights": list(spec.weights),
        "variances": list(spec.variances),
        "hyperparams": hp,
        "cells": cells,
        "failures": failures,
    }
    with open(os.path.join(spec.out, "manifest.json"), "w", encoding="ascii") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")


# ---------------------------------------------------------------------------
# argument parsing
# ---------------------------------------------------------------------------

def hyperparams_from_args(args) -> Hyperparams:
    kw = {}
    for key, flag in (
        ("lam", args.lam),
        ("max_cycles", args.max_cycles),
        ("tol", args.tol),
        ("variance_floor", args.variance_floor),
        ("restarts", args.restarts),
        ("relax", args.relax),
        ("seed", args.seed),
    ):
        if flag is not None:
            kw[key] = flag
    return Hyperparams(**kw)


def add_hyperparam_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--lambda", dest="lam", type=float, default=None,
                        help="fixed l1 penalty weight (default: adaptive heuristic)")
    parser.add_argument("--max-cycles", type=int, default=None, help="iteration budget per restart")
    parser.add_argument("--tol", type=float, default=None, help="relative objective convergence tolerance")
    parser.add_argument("--variance-floor", type=float, default=None, help="minimal component variance")
    parser.add_argument("--restarts", type=int, default=None, help="random restarts per fit")
    parser.add_argument("--relax", type=float, default=None, help="averaging factor in (0,1] for new iterates")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="sparsemix",
        description="Sparse self-regression Gaussian mixture estimation and benchmarks",
    )
    parser.add_argument("--version", action="version", version=f"sparsemix {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p_fit = sub.add_parser("fit", help="fit one dataset from a flat sample file")
    p_fit.add_argument("input", help="sample file (header 'd n K' format or headerless table)")
    p_fit.add_argument("--components", "-K", type=int, required=True, help="number of mixture components")
    p_fit.add_argument("--method", choices=list(METHODS), default="sparse")
    p_fit.add_argument("--seed", type=int, default=None)
    p_fit.add_argument("--out", default=None, help="report path (default: alongside input)")
    add_hyperparam_flags(p_fit)
    p_fit.set_defaults(func=cmd_fit)

    p_sim = sub.add_parser("simulate", help="dump scenario replicates as flat sample files")
    p_sim.add_argument("--dim", type=int, required=True)
    p_sim.add_argument("--dilation", type=float, required=True)
    p_sim.add_argument("--points", type=int, default=10)
    p_sim.add_argument("--components", "-K", type=int, default=3)
    p_sim.add_argument("--weights", type=float, nargs="+", default=[0.3, 0.2, 0.5])
    p_sim.add_argument("--variances", type=float, nargs="+", default=[5.0, 7.0, 10.0])
    p_sim.add_argument("--replicates", type=int, default=1)
    p_sim.add_argument("--seed", type=int, default=0)
    p_sim.add_argument("--out", default=None)
    p_sim.set_defaults(func=cmd_simulate)

    p_sweep = sub.add_parser("sweep", help="Monte Carlo accuracy sweep, CSV outputs")
    p_sweep.add_argument("--config", default=None, help="JSON config file; flags override its values")
    p_sweep.add_argument("--dims", type=int, nargs="+", default=None)
    p_sweep.add_argument("--dilations", type=float, nargs="+", default=None)
    p_sweep.add_argument("--methods", nargs="+", choices=list(METHODS), default=None)
    p_sweep.add_argument("--replicates", type=int, default=None)
    p_sweep.add_argument("--points", type=int, default=None)
    p_sweep.add_argument("--components", "-K", type=int, default=None)
    p_sweep.add_argument("--weights", type=float, nargs="+", default=None)
    p_sweep.add_argument("--variances", type=float, nargs="+", default=None)
    p_sweep.add_argument("--seed", type=int, default=None)
    p_sweep.add_argument("--jobs", type=int, default=None)
    p_sweep.add_argument("--out", default=None)
    add_hyperparam_flags(p_sweep)
    p_sweep.set_defaults(func=cmd_sweep)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
