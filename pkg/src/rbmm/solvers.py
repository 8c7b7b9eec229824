"""Reference, random-batch and momentum-corrected random-batch time steppers."""

from __future__ import annotations

import csv
import time
from dataclasses import dataclass, field

import numpy as np

from rbmm.core import (
    ConfigError,
    KernelDomainError,
    NumericError,
    ParticleEnsemble,
    Prefactor,
    RngStream,
    RunConfig,
    SystemSpec,
    external_drift,
    gaussian_increments,
    sample_initial,
)
from rbmm import _fast


class StepError(RuntimeError):
    """A solver step failed; carries the solver id and step index."""

    def __init__(self, message, solver=None, step=None):
        super().__init__(message)
        self.solver = solver
        self.step = step


@dataclass(frozen=True)
class BatchPartition:
    batches: tuple
    batch_size: int

    @property
    def n_particles(self) -> int:
        return sum(len(b) for b in self.batches)

    def batch_of(self, i: int) -> np.ndarray:
        for b in self.batches:
            if i in b:
                return b
        raise KeyError(i)


@dataclass
class MomentumBuffer:
    corrected: np.ndarray
    step_index: int = 0

    @classmethod
    def zeros(cls, n: int, d: int) -> "MomentumBuffer":
        return cls(np.zeros((n, d)), 0)


@dataclass
class Trajectory:
    solver_id: str
    times: list = field(default_factory=list)
    states: list = field(default_factory=list)
    steps: list = field(default_factory=list)
    metadata: dict = field(default_factory=dict)

    @property
    def snapshots(self):
        return list(zip(self.times, self.states))

    @property
    def final(self) -> ParticleEnsemble:
        return self.states[-1]

    def append(self, step: int, time: float, state: ParticleEnsemble):
        self.steps.append(step)
        self.times.append(time)
        self.states.append(state)


def partition(n: int, p: int, rng: RngStream) -> BatchPartition:
    """Uniform random division of ``0..n-1`` into batches of ``p``.

    A uniform shuffle is cut into consecutive blocks; the last block keeps the
    remainder. Each batch is stored sorted so that sums run in index order.
    """
    if p < 2 or p > n:
        raise ConfigError(f"batch_size must satisfy 2 <= p <= N (got p={p}, N={n})")
    perm = rng.generator().permutation(n)
    batches = tuple(np.sort(perm[k:k + p]) for k in range(0, n, p))
    return BatchPartition(batches, p)


def _scale(m: int, prefactor: Prefactor) -> float:
    if m < 2:
        return 0.0
    return 1.0 / (m - 1) if prefactor is Prefactor.OVER_N_MINUS_1 else 1.0 / m


def _accumulate(spec: SystemSpec, state: ParticleEnsemble, groups: np.ndarray, out: np.ndarray) -> None:
    """Write the within-group interaction of every member of ``groups`` into ``out``.

    ``groups`` is a ``(g, m)`` array of equally sized, sorted index groups.
    """
    g, m = groups.shape
    if m < 2:
        out[groups.ravel()] = 0.0
        return
    x = state.positions
    v = state.velocities if spec.order == 2 else x
    bad = np.zeros(3, dtype=np.int64)
    _fast.group_sums(x, v, np.ascontiguousarray(groups, dtype=np.int64),
                     _fast.KERNEL_CODES[spec.kernel.id], _fast.pack_params(spec.kernel),
                     float(spec.kernel.delta), spec.order, _scale(m, spec.prefactor), out, bad)
    if bad[0] == _fast.SINGULAR:
        pair = (int(bad[1]), int(bad[2]))
        raise KernelDomainError(f"kernel {spec.kernel.id} is singular at pair {pair}", pair=pair)
    if bad[0] == _fast.NONFINITE:
        raise NumericError(f"non-finite interaction on particle {int(bad[1])}")


def full_interaction(spec: SystemSpec, state: ParticleEnsemble) -> np.ndarray:
    """The interaction on every particle from all the others."""
    out = np.zeros_like(state.positions)
    _accumulate(spec, state, np.arange(state.n_particles)[None, :], out)
    return out


def batch_interaction(spec: SystemSpec, state: ParticleEnsemble, part: BatchPartition) -> np.ndarray:
    """Per-particle interaction restricted to each particle's batch.

    With a single batch of all ``N`` indices this performs exactly the same
    arithmetic as :func:`full_interaction`.
    """
    n = state.n_particles
    if part.n_particles != n:
        raise ConfigError("partition does not cover the ensemble")
    out = np.zeros_like(state.positions)
    full = [b for b in part.batches if len(b) == part.batch_size]
    if full:
        _accumulate(spec, state, np.stack(full), out)
    for b in part.batches:
        if len(b) != part.batch_size:
            _accumulate(spec, state, np.asarray(b)[None, :], out)
    return out


def _advance(state: ParticleEnsemble, spec: SystemSpec, tau: float, interaction: np.ndarray,
             noise: np.ndarray) -> ParticleEnsemble:
    if noise.shape != state.positions.shape:
        raise ValueError(f"noise must be shaped {state.positions.shape}, got {noise.shape}")
    if spec.order == 1:
        x = state.positions
        drift = external_drift(spec.external_drift, x) + interaction
        new = ParticleEnsemble(x + tau * drift + spec.sigma * noise)
    else:
        # semi-implicit Euler: velocity first, then position with the new velocity
        x, v = state.positions, state.velocities
        acc = external_drift(spec.external_drift, x) + interaction
        v_new = v + tau * acc + spec.sigma * noise
        new = ParticleEnsemble(x + tau * v_new, v_new)
    if not new.is_finite():
        raise NumericError("non-finite state after step")
    return new


def step_reference(state: ParticleEnsemble, spec: SystemSpec, tau: float,
                   noise: np.ndarray) -> ParticleEnsemble:
    return _advance(state, spec, tau, full_interaction(spec, state), noise)


def step_rbm(state: ParticleEnsemble, part: BatchPartition, spec: SystemSpec, tau: float,
             noise: np.ndarray) -> ParticleEnsemble:
    return _advance(state, spec, tau, batch_interaction(spec, state, part), noise)


def update_momentum(mom: MomentumBuffer, raw: np.ndarray, beta: float,
                    first_step: str = "history") -> MomentumBuffer:
    """One step of the exponentially weighted interaction average.

    On the first step the buffer takes the raw interaction as is, unless
    ``first_step="zero_history"``, which blends against an all-zero history.
    """
    if mom.step_index == 0 and first_step == "history":
        corrected = raw.copy()
    else:
        corrected = beta * mom.corrected + (1.0 - beta) * raw
    return MomentumBuffer(corrected, mom.step_index + 1)


def step_rbmm(state: ParticleEnsemble, mom: MomentumBuffer, part: BatchPartition, spec: SystemSpec,
              tau: float, beta: float, noise: np.ndarray, first_step: str = "history"):
    raw = batch_interaction(spec, state, part)
    mom = update_momentum(mom, raw, beta, first_step)
    return _advance(state, spec, tau, mom.corrected, noise), mom


def simulate(config: RunConfig, spec: SystemSpec, initial: ParticleEnsemble | None = None) -> dict:
    """Run every requested solver with shared noise and shared partitions.

    Returns ``{solver_id: Trajectory}``. Snapshots are kept every
    ``config.save_every`` steps (0 keeps only the start and the end).
    """
    if spec.kernel.dim != (1 if config.init == "UniformInterval1D" else 2):
        raise ConfigError("init dimensionality does not match the kernel")
    n_steps = config.n_steps
    n, p = config.n_particles, config.batch_size
    if initial is None:
        initial = sample_initial(config, spec, RngStream(config.seed, "init", 0))
    states = {s: initial for s in config.solvers}
    mom = MomentumBuffer.zeros(n, initial.dim)
    meta = {"shared_noise": True, "shared_partitions": True, "n_steps": n_steps}
    trajs = {s: Trajectory(s, metadata=dict(meta)) for s in config.solvers}
    for s in config.solvers:
        trajs[s].append(0, 0.0, initial)
    need_part = any(s in ("RBM", "RBMM") for s in config.solvers)
    stride = config.save_every
    for step in range(n_steps):
        noise = gaussian_increments(RngStream(config.seed, "noise", step), n, initial.dim, config.tau)
        part = partition(n, p, RngStream(config.seed, "partition", step)) if need_part else None
        for s in config.solvers:
            t0 = time.perf_counter()
            try:
                if s == "Reference":
                    states[s] = step_reference(states[s], spec, config.tau, noise)
                elif s == "RBM":
                    states[s] = step_rbm(states[s], part, spec, config.tau, noise)
                else:
                    states[s], mom = step_rbmm(states[s], mom, part, spec, config.tau,
                                               config.beta, noise, config.first_step)
            except (KernelDomainError, NumericError) as exc:
                raise StepError(f"{s} failed at step {step}: {exc}", solver=s, step=step) from exc
            trajs[s].metadata["seconds"] = trajs[s].metadata.get("seconds", 0.0) + time.perf_counter() - t0
        done = step + 1
        if done == n_steps or (stride and done % stride == 0):
            t = config.t_end if done == n_steps else done * config.tau
            for s in config.solvers:
                trajs[s].append(done, t, states[s])
    return trajs


def trajectory_rows(trajectories: dict):
    """Rows ``(solver, step, time, particle, x0.., v0..)`` for CSV export."""
    for sid, tr in trajectories.items():
        for step, t, st in zip(tr.steps, tr.times, tr.states):
            for i in range(st.n_particles):
                row = [sid, step, t, i, *st.positions[i]]
                if st.velocities is not None:
                    row.extend(st.velocities[i])
                yield row


def trajectory_header(trajectories: dict) -> list:
    tr = next(iter(trajectories.values()))
    st = tr.states[0]
    cols = ["solver", "step", "time", "particle"] + [f"x{k}" for k in range(st.dim)]
    if st.velocities is not None:
        cols += [f"v{k}" for k in range(st.dim)]
    return cols


def write_trajectories(trajectories: dict, path) -> None:
    from rbmm.config_io import format_value

    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(trajectory_header(trajectories))
        for row in trajectory_rows(trajectories):
            w.writerow([format_value(v) for v in row])
