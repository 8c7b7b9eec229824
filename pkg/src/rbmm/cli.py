"""Command line entry point: ``rbmm <subcommand> [options]``."""

from __future__ import annotations

import argparse
import json
import sys

import numpy as np

from rbmm import experiments as ex
from rbmm.config_io import load_config, write_csv, write_rows
from rbmm.core import ConfigError, ParticleEnsemble, RngStream, RunConfig
from rbmm.diagnostics import (
    batch_variance_factor,
    estimator_stats,
    frozen_x_sampler,
    frozen_y_sampler,
    lambda_i,
)
from rbmm.kernels import KernelSpec
from rbmm.solvers import simulate, write_trajectories


def parse_seeds(text: str | None, default=ex.DESK_SEEDS):
    """``"10"`` means seeds 0..9; ``"3,7,11"`` is an explicit list; ``"5:15"`` a range."""
    if text is None:
        return list(default)
    if ":" in text:
        a, b = text.split(":")
        return list(range(int(a), int(b)))
    if "," in text:
        return [int(s) for s in text.split(",") if s.strip()]
    return list(range(int(text)))


def _floats(text):
    return [float(s) for s in text.split(",") if s.strip()]


def _base(args, preset):
    if args.config:
        doc = load_config(args.config)
        return doc.run, doc.system
    return preset


def _emit(report, args):
    if args.out:
        write_csv(report, args.out)
    print(json.dumps({"kind": report.kind, "summary": report.sidecar()["summary"]}, indent=2))


def cmd_simulate(args):
    if not args.config:
        raise ConfigError("simulate needs --config")
    doc = load_config(args.config)
    trajs = simulate(doc.run, doc.system)
    if args.out:
        write_trajectories(trajs, args.out)
    errs = {}
    if "Reference" in trajs:
        ref = trajs["Reference"].final.positions
        for s, tr in trajs.items():
            if s != "Reference":
                errs[s] = float(np.sqrt(np.sum((tr.final.positions - ref) ** 2)))
    print(json.dumps({"steps": doc.run.n_steps, "terminal_l2_error": errs,
                      "defaults": doc.provenance}, indent=2))


def cmd_sweep_tau(args):
    run, spec = _base(args, ex.tau_study_base(args.full_scale))
    taus = _floats(args.taus) if args.taus else ex.TAUS
    _emit(ex.sweep_tau(run, spec, taus, parse_seeds(args.seeds), args.sup), args)


def cmd_sweep_beta(args):
    run, spec = _base(args, ex.beta_study_base(args.full_scale))
    betas = _floats(args.betas) if args.betas else ex.BETAS
    _emit(ex.sweep_beta(run, spec, betas, parse_seeds(args.seeds), args.sup), args)


def cmd_compare_kernels(args):
    if args.config:
        base = load_config(args.config).run
    else:
        base = RunConfig(**(ex.FULL_SCALE if args.full_scale else ex.DESK))
    table = ex.KERNEL_TABLE
    labels = args.kernels.split(",") if args.kernels else list(table)
    unknown = [k for k in labels if k not in table]
    if unknown:
        raise ConfigError(f"unknown kernel rows {unknown}; choose from {list(table)}")
    _emit(ex.compare_kernels([(k, table[k]) for k in labels], parse_seeds(args.seeds), base, args.sup), args)


def cmd_sweep_steepness(args):
    base = load_config(args.config).run if args.config else ex.steepness_base(args.full_scale)
    alphas = _floats(args.alphas) if args.alphas else ex.ALPHAS
    _emit(ex.sweep_steepness(base, alphas, parse_seeds(args.seeds), args.sigma, args.sup), args)


def cmd_bench(args):
    spec = load_config(args.config).system if args.config else ex.beta_study_base()[1]
    sizes = [int(s) for s in args.sizes.split(",")] if args.sizes else ex.BENCH_SIZES
    _emit(ex.bench_scaling(spec, sizes, args.reps), args)


def cmd_estimator_stats(args):
    n, p = args.n_particles, args.batch_size
    kernel = KernelSpec(args.kernel, delta=args.delta)
    gen = RngStream(args.seed, "init", 0).generator()
    x = gen.uniform(-1.0, 1.0, size=(n, kernel.dim))
    state = ParticleEnsemble(x)
    rows = []
    for i in range(n):
        lam = lambda_i(state, kernel, i)
        xs = estimator_stats(frozen_x_sampler(state, kernel, p, i), args.samples,
                             RngStream(args.seed, "sample", 2 * i), lam=lam)
        ys = estimator_stats(frozen_y_sampler(state, kernel, p, i, args.beta, args.steps), args.samples,
                             RngStream(args.seed, "sample", 2 * i + 1), lam=lam)
        rows.append(["X", i, 0, xs.mean_norm, xs.variance, xs.n_samples, args.beta, args.tau])
        rows.append(["Y", i, args.steps, ys.mean_norm, ys.variance, ys.n_samples, args.beta, args.tau])
        rows.append(["formula", i, 0, 0.0, batch_variance_factor(n, p) * lam, None, args.beta, args.tau])
    header = ["quantity", "particle", "step", "mean_norm", "variance", "n_samples", "beta", "tau"]
    if args.out:
        write_rows(args.out, header, rows)
    ratio = np.mean([rows[k + 1][4] / rows[k][4] for k in range(0, len(rows), 3)])
    print(json.dumps({"mean_var_ratio_Y_over_X": float(ratio),
                      "contraction_bound": (1 - args.beta) ** 2 / (1 - args.beta**2)}, indent=2))


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="rbmm", description="Random batch solvers with momentum correction")
    sub = ap.add_subparsers(dest="command", required=True)

    def common(sp, seeds=True):
        sp.add_argument("--config", help="INI config with [run], [system], [kernel] sections")
        sp.add_argument("--out", help="CSV output path (a .json metadata sidecar is written next to it)")
        sp.add_argument("--paper-scale", dest="full_scale", action="store_true", help="N=10000, p=360 instead of N=1000, p=40")
        if seeds:
            sp.add_argument("--seeds", help="count (10), list (1,2,3) or range (0:10); default 10 seeds")
            sp.add_argument("--sup", action="store_true", help="sup over saved snapshots instead of terminal error")
        return sp

    sp = common(sub.add_parser("simulate", help="run the solvers of one config"), seeds=False)
    sp.set_defaults(func=cmd_simulate)
    sp = common(sub.add_parser("sweep-tau", help="error vs time step"))
    sp.add_argument("--taus", help="comma list, default 0.016,0.004,0.001,0.00025")
    sp.set_defaults(func=cmd_sweep_tau)
    sp = common(sub.add_parser("sweep-beta", help="error vs momentum parameter"))
    sp.add_argument("--betas", help="comma list, default 0,0.04,0.06,0.08,0.1,0.12")
    sp.set_defaults(func=cmd_sweep_beta)
    sp = common(sub.add_parser("compare-kernels", help="RBM vs RBM-M over the kernel table"))
    sp.add_argument("--kernels", help=f"comma list of rows from {list(ex.KERNEL_TABLE)}")
    sp.set_defaults(func=cmd_compare_kernels)
    sp = common(sub.add_parser("sweep-steepness", help="RBM vs RBM-M over the steepness family"))
    sp.add_argument("--alphas", help="comma list of alpha values")
    sp.add_argument("--sigma", type=float, default=1.0)
    sp.set_defaults(func=cmd_sweep_steepness)
    sp = common(sub.add_parser("bench", help="wall time per step vs N"), seeds=False)
    sp.add_argument("--sizes", help="comma list, default 1000,2000,4000,8000")
    sp.add_argument("--reps", type=int, default=3)
    sp.set_defaults(func=cmd_bench)
    sp = common(sub.add_parser("estimator-stats", help="batch estimator mean/variance on a frozen state"),
                seeds=False)
    sp.add_argument("--kernel", default="BiotSavart")
    sp.add_argument("--delta", type=float, default=0.1)
    sp.add_argument("--n-particles", type=int, default=20)
    sp.add_argument("--batch-size", type=int, default=4)
    sp.add_argument("--samples", type=int, default=20000)
    sp.add_argument("--beta", type=float, default=0.1)
    sp.add_argument("--steps", type=int, default=30)
    sp.add_argument("--tau", type=float, default=1e-3)
    sp.add_argument("--seed", type=int, default=0)
    sp.set_defaults(func=cmd_estimator_stats)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        args.func(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
