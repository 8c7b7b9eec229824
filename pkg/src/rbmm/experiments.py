"""Error sweeps, kernel comparison and the cost-scaling benchmark.

Every sweep cell is a coupled run: the reference, RBM and RBM-M solvers see
the same initial ensemble, Brownian increments and (for the two batch
solvers) the same partitions, so the reported errors are pure method errors.
"""

from __future__ import annotations

import dataclasses
import math
import statistics
import time
from dataclasses import dataclass, field

import numpy as np

from rbmm.config_io import run_dict, run_from_dict, system_dict, system_from_dict
from rbmm.core import (
    ConfigError,
    RngStream,
    RunConfig,
    SystemSpec,
    gaussian_increments,
    sample_initial,
)
from rbmm.diagnostics import l2_error
from rbmm.kernels import KernelSpec
from rbmm.solvers import (
    MomentumBuffer,
    partition,
    simulate,
    step_rbm,
    step_rbmm,
    step_reference,
)

DESK = {"n_particles": 1000, "batch_size": 40, "t_end": 0.02, "tau": 1e-3}
FULL_SCALE = {"n_particles": 10_000, "batch_size": 360, "t_end": 0.02, "tau": 1e-3}
DESK_SEEDS = tuple(range(10))

ROW_FIELDS = ("value", "seed", "rbm_error", "rbmm_error",
              "reference_runtime", "rbm_runtime", "rbmm_runtime")


@dataclass
class SweepRow:
    value: object
    seed: int | None
    rbm_error: float | None = None
    rbmm_error: float | None = None
    reference_runtime: float | None = None
    rbm_runtime: float | None = None
    rbmm_runtime: float | None = None

    @property
    def ratio(self):
        if self.rbm_error is None or self.rbmm_error is None or self.rbm_error == 0:
            return None
        return self.rbmm_error / self.rbm_error


@dataclass
class SweepReport:
    kind: str
    parameter: str
    rows: list = field(default_factory=list)
    metadata: dict = field(default_factory=dict)
    summary: dict = field(default_factory=dict)

    def values(self):
        seen = []
        for r in self.rows:
            if r.value not in seen:
                seen.append(r.value)
        return seen

    @property
    def aggregate(self) -> dict:
        """Per-value means over seeds of every numeric row column."""
        agg = {}
        for v in self.values():
            rows = [r for r in self.rows if r.value == v]
            entry = {}
            for f in ROW_FIELDS[2:]:
                xs = [getattr(r, f) for r in rows if getattr(r, f) is not None]
                entry[f] = math.fsum(xs) / len(xs) if xs else None
            entry["n_seeds"] = len(rows)
            if entry["rbm_error"] and entry["rbmm_error"] is not None:
                entry["ratio"] = entry["rbmm_error"] / entry["rbm_error"]
                entry["advantage"] = entry["rbm_error"] - entry["rbmm_error"]
            else:
                entry["ratio"] = None
                entry["advantage"] = None
            agg[v] = entry
        return agg

    def header(self):
        return ["record", "parameter", *ROW_FIELDS, "ratio", "advantage"]

    def csv_rows(self):
        for r in self.rows:
            adv = None
            if r.rbm_error is not None and r.rbmm_error is not None:
                adv = r.rbm_error - r.rbmm_error
            yield ["seed", self.parameter, *(getattr(r, f) for f in ROW_FIELDS), r.ratio, adv]
        for v, a in self.aggregate.items():
            yield ["mean", self.parameter, v, None, *(a[f] for f in ROW_FIELDS[2:]),
                   a["ratio"], a["advantage"]]

    def sidecar(self) -> dict:
        return {"kind": self.kind, "parameter": self.parameter,
                "summary": _jsonable(self.summary), "metadata": _jsonable(self.metadata)}


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.generic):
        return obj.item()
    return obj


def loglog_slope(xs, ys):
    """Least-squares slope of ``log2 y`` against ``log2 x``; None if undefined."""
    xs = np.asarray(xs, dtype=float)
    ys = np.asarray(ys, dtype=float)
    if len(xs) < 2 or len(np.unique(xs)) < 2 or np.any(ys <= 0):
        return None
    return float(np.polyfit(np.log2(xs), np.log2(ys), 1)[0])


def _errors(trajs, sup: bool):
    ref = trajs["Reference"]
    out = {}
    for s in ("RBM", "RBMM"):
        if s not in trajs:
            out[s] = None
            continue
        tr = trajs[s]
        if sup:
            out[s] = max(l2_error(a, b) for a, b in zip(tr.states, ref.states))
        else:
            out[s] = l2_error(tr.final, ref.final)
    return out


def run_cell(config: RunConfig, spec: SystemSpec, value, sup: bool = False) -> SweepRow:
    """One coupled run; errors are taken against the reference trajectory."""
    solvers = tuple(s for s in ("Reference", "RBM", "RBMM") if s in config.solvers or s == "Reference")
    cfg = dataclasses.replace(config, solvers=solvers)
    trajs = simulate(cfg, spec)
    err = _errors(trajs, sup)
    sec = {s: trajs[s].metadata.get("seconds") for s in trajs}
    return SweepRow(value, config.seed, err["RBM"], err["RBMM"],
                    sec.get("Reference"), sec.get("RBM"), sec.get("RBMM"))


def _meta(base: RunConfig, spec: SystemSpec | None, **extra) -> dict:
    m = {"run": run_dict(base)}
    if spec is not None:
        m["system"] = system_dict(spec)
    m.update(extra)
    m["coupling"] = {"shared_noise": True, "shared_partitions": True}
    return m


def sweep_tau(base: RunConfig, spec: SystemSpec, taus, seeds, sup: bool = False) -> SweepReport:
    """Terminal error of RBM-M (and RBM when requested) against the coupled reference."""
    report = SweepReport("sweep_tau", "tau",
                         metadata=_meta(base, spec, taus=list(taus), seeds=list(seeds), sup=sup))
    for tau in taus:
        for seed in seeds:
            cfg = dataclasses.replace(base, tau=float(tau), seed=int(seed))
            report.rows.append(run_cell(cfg, spec, float(tau), sup))
    agg = report.aggregate
    xs = list(agg)
    report.summary["slope_rbmm"] = loglog_slope(xs, [agg[t]["rbmm_error"] for t in xs]) \
        if all(agg[t]["rbmm_error"] for t in xs) else None
    if all(agg[t]["rbm_error"] for t in xs):
        report.summary["slope_rbm"] = loglog_slope(xs, [agg[t]["rbm_error"] for t in xs])
    return report


def sweep_beta(base: RunConfig, spec: SystemSpec, betas, seeds, sup: bool = False) -> SweepReport:
    """RBM and RBM-M errors for each momentum parameter.

    The reference and RBM runs do not depend on beta, so they are computed once
    per seed; RBM-M is rerun per beta on the same noise and partitions.
    """
    for b in betas:
        if not 0 <= b < 1:
            raise ConfigError("beta must lie in [0,1)")
    report = SweepReport("sweep_beta", "beta",
                         metadata=_meta(base, spec, betas=list(betas), seeds=list(seeds), sup=sup))
    cells = {}
    for seed in seeds:
        cfg = dataclasses.replace(base, seed=int(seed), solvers=("Reference", "RBM"))
        trajs = simulate(cfg, spec)
        cells[seed] = trajs
    for beta in betas:
        for seed in seeds:
            cfg = dataclasses.replace(base, seed=int(seed), beta=float(beta), solvers=("RBMM",))
            trajs = dict(cells[seed])
            trajs.update(simulate(cfg, spec))
            err = _errors(trajs, sup)
            report.rows.append(SweepRow(float(beta), int(seed), err["RBM"], err["RBMM"],
                                        trajs["Reference"].metadata["seconds"],
                                        trajs["RBM"].metadata["seconds"],
                                        trajs["RBMM"].metadata["seconds"]))
    agg = report.aggregate
    ratios = {b: agg[b]["ratio"] for b in agg}
    report.summary["ratios"] = ratios
    live = [r for r in ratios.values() if r is not None]
    report.summary["min_ratio"] = min(live) if live else None
    return report


# Kernel comparison rows at desk scale. Smooth kernels use a small beta, singular ones 0.1.
KERNEL_TABLE = {
    "K1": dict(kernel="BiotSavart", delta=0.1, beta=0.01),
    "K2": dict(kernel="SecondOrderSmooth", order=2, prefactor="OverN", beta=0.01),
    "K3": dict(kernel="Morse", beta=0.01),
    "K4": dict(kernel="K4Table", delta=0.05, beta=0.1),
    "SingularDemo": dict(kernel="SingularDemo", delta=0.05, beta=0.1, external_drift="cos_flow"),
    "K5": dict(kernel="K5Table", delta=0.05, beta=0.1),
    "K6": dict(kernel="K6Table", delta=0.05, beta=0.1),
    "Control": dict(kernel="Zero", beta=0.1),
}
SMOOTH_ROWS = ("K1", "K2", "K3")
SINGULAR_ROWS = ("SingularDemo", "K5", "K6")


def kernel_case(label: str, overrides: dict, base: RunConfig, sigma: float = 1.0):
    """Build ``(RunConfig, SystemSpec)`` for one kernel-table row."""
    o = dict(overrides)
    kid = o.pop("kernel")
    params = o.pop("params", {})
    delta = float(o.pop("delta", 0.0))
    order = int(o.pop("order", 1))
    prefactor = o.pop("prefactor", "OverNMinus1")
    drift = o.pop("external_drift", "none")
    sig = float(o.pop("sigma", sigma))
    kernel = KernelSpec(kid, params, delta)
    spec = SystemSpec(kernel=kernel, order=order, external_drift=drift, sigma=sig, prefactor=prefactor)
    init = "UniformInterval1D" if kernel.dim == 1 else "UniformUnitDisk2D"
    cfg = dataclasses.replace(base, delta=delta, init=init, **o)
    return cfg, spec


def compare_kernels(configs, seeds, base: RunConfig | None = None, sup: bool = False) -> SweepReport:
    """Mean RBM and RBM-M errors per kernel.

    ``configs`` is a list of ``(label, overrides)`` where overrides name the
    kernel id and any of ``params, delta, order, prefactor, external_drift,
    sigma`` plus RunConfig fields such as ``beta``.
    """
    base = base or RunConfig(**DESK)
    report = SweepReport("compare_kernels", "kernel",
                         metadata=_meta(base, None, seeds=list(seeds),
                                        configs=[[lab, dict(o)] for lab, o in configs], sup=sup))
    cases = {}
    for label, overrides in configs:
        cfg, spec = kernel_case(label, overrides, base)
        cases[label] = {"run": run_dict(cfg), "system": system_dict(spec)}
        for seed in seeds:
            report.rows.append(run_cell(dataclasses.replace(cfg, seed=int(seed)), spec, label, sup))
    report.metadata["cases"] = cases
    report.summary["ratios"] = {k: v["ratio"] for k, v in report.aggregate.items()}
    return report


def steepness_case(base: RunConfig, alpha: float, sigma: float = 1.0):
    spec = SystemSpec(kernel=KernelSpec("Steepness", {"alpha": alpha}), sigma=sigma)
    cfg = dataclasses.replace(base, init="UniformInterval1D", delta=0.0)
    return cfg, spec


def sweep_steepness(base: RunConfig, alphas, seeds, sigma: float = 1.0, sup: bool = False) -> SweepReport:
    """RBM vs RBM-M on the 1-D steepness family, with the advantage column."""
    if len(seeds) < 10:
        raise ConfigError("the steepness study averages over at least 10 seeds")
    for a in alphas:
        if not a > 0:
            raise ConfigError("alpha must be > 0")
    report = SweepReport("sweep_steepness", "alpha",
                         metadata=_meta(base, None, alphas=list(alphas), seeds=list(seeds),
                                        sigma=sigma, sup=sup))
    for a in alphas:
        cfg, spec = steepness_case(base, float(a), sigma)
        for seed in seeds:
            report.rows.append(run_cell(dataclasses.replace(cfg, seed=int(seed)), spec, float(a), sup))
    report.summary["advantage"] = {k: v["advantage"] for k, v in report.aggregate.items()}
    return report


def _time_steps(fn, reps: int) -> float:
    times = []
    for _ in range(reps):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return statistics.median(times)


def bench_scaling(spec: SystemSpec, sizes, reps: int = 3, batch_size: int = 40,
                  tau: float = 1e-3, beta: float = 0.1, seed: int = 0) -> SweepReport:
    """Median wall time per step of each solver, with fitted power-law exponents.

    Each timed step includes everything the solver needs per step (partition,
    interaction, update); one warm-up step per solver is excluded.
    """
    sizes = [int(n) for n in sizes]
    if sizes != sorted(sizes):
        raise ConfigError("sizes must be ascending")
    if reps < 3:
        raise ConfigError("reps must be >= 3")
    init = "UniformInterval1D" if spec.kernel.dim == 1 else "UniformUnitDisk2D"
    report = SweepReport("bench", "n_particles",
                         metadata={"system": system_dict(spec), "sizes": sizes, "reps": reps,
                                   "batch_size": batch_size, "tau": tau, "beta": beta, "seed": seed})
    for n in sizes:
        cfg = RunConfig(n_particles=n, batch_size=min(batch_size, n), tau=tau, t_end=tau,
                        beta=beta, seed=seed, init=init)
        state = sample_initial(cfg, spec, RngStream(seed, "init", 0))
        noise = gaussian_increments(RngStream(seed, "noise", 0), n, state.dim, tau)
        mom = MomentumBuffer.zeros(n, state.dim)
        mom = MomentumBuffer(mom.corrected, 1)
        p = cfg.batch_size

        def ref():
            step_reference(state, spec, tau, noise)

        def rbm():
            part = partition(n, p, RngStream(seed, "partition", 0))
            step_rbm(state, part, spec, tau, noise)

        def rbmm():
            part = partition(n, p, RngStream(seed, "partition", 0))
            step_rbmm(state, mom, part, spec, tau, beta, noise)

        cells = {}
        for name, fn in (("ref", ref), ("rbm", rbm), ("rbmm", rbmm)):
            try:
                fn()  # warm-up
                cells[name] = _time_steps(fn, reps)
            except Exception as exc:  # timer failures are reported per cell
                cells[name] = None
                report.summary.setdefault("failures", {})[f"{name}@{n}"] = str(exc)
        report.rows.append(SweepRow(n, None, None, None, cells["ref"], cells["rbm"], cells["rbmm"]))
    ns = [r.value for r in report.rows]
    for name, f in (("reference", "reference_runtime"), ("rbm", "rbm_runtime"), ("rbmm", "rbmm_runtime")):
        ts = [getattr(r, f) for r in report.rows]
        report.summary[f"exponent_{name}"] = None if None in ts else loglog_slope(ns, ts)
    ratios = [r.rbmm_runtime / r.rbm_runtime for r in report.rows
              if r.rbm_runtime and r.rbmm_runtime is not None]
    report.summary["rbmm_over_rbm"] = ratios
    report.summary["rbmm_over_rbm_largest"] = ratios[-1] if ratios else None
    return report


def rerun(report: SweepReport) -> SweepReport:
    """Recompute a report from its own metadata (error columns reproduce exactly)."""
    m = report.metadata
    if report.kind == "sweep_tau":
        return sweep_tau(run_from_dict(m["run"]), system_from_dict(m["system"]), m["taus"], m["seeds"], m["sup"])
    if report.kind == "sweep_beta":
        return sweep_beta(run_from_dict(m["run"]), system_from_dict(m["system"]), m["betas"], m["seeds"], m["sup"])
    if report.kind == "compare_kernels":
        return compare_kernels([tuple(c) for c in m["configs"]], m["seeds"], run_from_dict(m["run"]), m["sup"])
    if report.kind == "sweep_steepness":
        return sweep_steepness(run_from_dict(m["run"]), m["alphas"], m["seeds"], m["sigma"], m["sup"])
    raise ValueError(f"cannot rerun a {report.kind} report")


# Preset bases for the CLI and the acceptance suite.

def tau_study_base(full_scale: bool = False) -> tuple:
    """Biot-Savart with delta = 0.1; the horizon is a multiple of every tau."""
    scale = FULL_SCALE if full_scale else DESK
    run = RunConfig(**{**scale, "t_end": 0.064, "tau": 1e-3}, beta=0.1, delta=0.1,
                    solvers=("Reference", "RBM", "RBMM"))
    spec = SystemSpec(kernel=KernelSpec("BiotSavart", delta=0.1), sigma=1.0)
    return run, spec


TAUS = (16e-3, 4e-3, 1e-3, 0.25e-3)
BETAS = (0.0, 0.04, 0.06, 0.08, 0.10, 0.12)
ALPHAS = (5e-3, 2.5e-3, 1e-3, 7.5e-4, 5e-4, 2.5e-4)
BENCH_SIZES = (1000, 2000, 4000, 8000)


def beta_study_base(full_scale: bool = False, delta: float = 0.05) -> tuple:
    """Singular demo system with the (0, cos x) flow."""
    scale = FULL_SCALE if full_scale else DESK
    run = RunConfig(**scale, beta=0.1, delta=delta)
    spec = SystemSpec(kernel=KernelSpec("SingularDemo", delta=delta), external_drift="cos_flow", sigma=1.0)
    return run, spec


def steepness_base(full_scale: bool = False) -> RunConfig:
    scale = FULL_SCALE if full_scale else DESK
    return RunConfig(**scale, beta=0.1, init="UniformInterval1D")
