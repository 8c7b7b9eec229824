"""Error metric and batch-estimator statistics.

The estimator helpers work on a frozen state: they compare the batch (or
momentum-averaged batch) interaction of one particle with its full
interaction. Exact partition enumeration is provided for small ``N`` as an
oracle for the sampled versions.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

from rbmm.core import ParticleEnsemble, RngStream
from rbmm.kernels import KernelSpec, evaluate


@dataclass(frozen=True)
class EstimatorSample:
    x_dev: np.ndarray
    y_dev: np.ndarray
    particle: int
    step: int


@dataclass(frozen=True)
class EstimatorStats:
    mean: np.ndarray
    variance: float
    n_samples: int
    lam: float | None = None

    @property
    def mean_norm(self) -> float:
        return float(np.linalg.norm(self.mean))

    @property
    def std_error(self) -> float:
        """Standard error of the mean (per component, pooled)."""
        d = max(1, self.mean.size)
        return float(np.sqrt(self.variance / d / self.n_samples))


def l2_error(a: ParticleEnsemble, b: ParticleEnsemble) -> float:
    """Root of the summed squared position differences."""
    if a.positions.shape != b.positions.shape:
        raise ValueError(f"shape mismatch: {a.positions.shape} vs {b.positions.shape}")
    if (a.velocities is None) != (b.velocities is None):
        raise ValueError("one ensemble has velocities and the other does not")
    diff = a.positions - b.positions
    return float(np.sqrt(np.sum(diff * diff)))


def kernel_row(state: ParticleEnsemble, spec: KernelSpec, i: int) -> np.ndarray:
    """``K(x_i - x_j)`` for every ``j``; the ``j = i`` row is zero."""
    x = state.positions
    excl = np.zeros(len(x), dtype=bool)
    excl[i] = True
    return evaluate(spec, x[i] - x, excl)


def full_mean(row: np.ndarray, i: int) -> np.ndarray:
    n = len(row)
    return (row.sum(axis=0) - row[i]) / (n - 1)


def batch_mean(row: np.ndarray, batch, i: int) -> np.ndarray:
    batch = np.asarray(batch)
    if len(batch) < 2:
        return np.zeros(row.shape[1])
    mates = batch[batch != i]
    return row[mates].sum(axis=0) / (len(batch) - 1)


def _batch_of(part, i):
    for b in part.batches:
        if i in b:
            return b
    raise KeyError(i)


def x_deviation(state: ParticleEnsemble, part, spec: KernelSpec, i: int) -> np.ndarray:
    """Batch interaction of particle ``i`` minus its full interaction."""
    row = kernel_row(state, spec, i)
    return batch_mean(row, _batch_of(part, i), i) - full_mean(row, i)


def lambda_i(state: ParticleEnsemble, spec: KernelSpec, i: int) -> float:
    """Spread of the kernel values seen by particle ``i``.

    ``sum_j |K(x_i - x_j) - mean|^2 / (N - 2)`` over ``j != i``.
    """
    n = state.n_particles
    if n < 3:
        raise ValueError("lambda_i needs at least three particles")
    row = kernel_row(state, spec, i)
    others = np.delete(row, i, axis=0)
    dev = others - others.mean(axis=0)
    return float(np.sum(dev * dev) / (n - 2))


def batch_variance_factor(n: int, p: int) -> float:
    return 1.0 / (p - 1) - 1.0 / (n - 1)


def y_deviation(history, spec: KernelSpec, beta: float, i: int, n: int) -> np.ndarray:
    """Momentum-averaged batch interaction at step ``n`` minus the full one.

    ``history`` is a sequence of ``(state, partition)`` pairs for steps
    ``0..n``; step 0 seeds the average with its raw batch interaction.
    """
    if len(history) < n + 1:
        raise ValueError(f"history covers {len(history)} steps, need {n + 1}")
    corrected = None
    for s in range(n + 1):
        state, part = history[s]
        row = kernel_row(state, spec, i)
        raw = batch_mean(row, _batch_of(part, i), i)
        corrected = raw if corrected is None else beta * corrected + (1.0 - beta) * raw
    state_n = history[n][0]
    return corrected - full_mean(kernel_row(state_n, spec, i), i)


def enumerate_partitions(n: int, p: int):
    """Every unordered division of ``0..n-1`` into blocks of ``p`` (``p | n``)."""
    if n % p:
        raise ValueError("enumeration needs p to divide n")

    def rec(rest):
        if not rest:
            yield []
            return
        first, tail = rest[0], rest[1:]
        for mates in itertools.combinations(tail, p - 1):
            left = [k for k in tail if k not in mates]
            for more in rec(left):
                yield [(first,) + mates] + more

    yield from rec(list(range(n)))


def exact_x_moments(state: ParticleEnsemble, spec: KernelSpec, p: int, i: int):
    """Mean vector and scalar variance of the batch deviation over all partitions."""
    n = state.n_particles
    row = kernel_row(state, spec, i)
    full = full_mean(row, i)
    devs = []
    for part in enumerate_partitions(n, p):
        batch = next(b for b in part if i in b)
        devs.append(batch_mean(row, np.array(batch), i) - full)
    devs = np.array(devs)
    mean = devs.mean(axis=0)
    var = float(np.mean(np.sum(devs * devs, axis=1)) - mean @ mean)
    return mean, var


def estimator_stats(sampler, n_samples: int, rng: RngStream, field: str = "x_dev",
                    lam: float | None = None) -> EstimatorStats:
    """Sample mean and scalar variance ``E|Z|^2 - |EZ|^2``.

    ``sampler(generator, size)`` returns either an ``EstimatorSample`` (size
    ignored, called repeatedly) or an array of ``size`` deviation vectors.
    """
    if n_samples < 2:
        raise ValueError("n_samples must be >= 2")
    gen = rng.generator()
    probe = sampler(gen, n_samples)
    if isinstance(probe, EstimatorSample):
        rows = [getattr(probe, field)]
        rows += [getattr(sampler(gen, 1), field) for _ in range(n_samples - 1)]
        z = np.array(rows, dtype=float)
    else:
        z = np.asarray(probe, dtype=float)
        if z.ndim == 1:
            z = z[:, None]
        if len(z) != n_samples:
            raise ValueError("sampler returned the wrong number of samples")
    if not np.isfinite(z).all():
        raise ValueError("sampler produced non-finite values")
    mean = z.mean(axis=0)
    var = float(np.mean(np.sum(z * z, axis=1)) - mean @ mean)
    return EstimatorStats(mean, max(var, 0.0), n_samples, lam)


def _random_mates(gen: np.random.Generator, n: int, p: int, i: int, size: int) -> np.ndarray:
    """Batch mates of ``i`` under ``size`` independent uniform partitions.

    When ``p | n`` the mates of one particle are a uniform ``(p-1)``-subset of
    the other ``n-1`` indices; ranks of iid uniforms give that subset.
    """
    keys = gen.random((size, n - 1))
    mates = np.argpartition(keys, p - 2, axis=1)[:, : p - 1]
    others = np.delete(np.arange(n), i)
    return others[mates]


def frozen_x_sampler(state: ParticleEnsemble, spec: KernelSpec, p: int, i: int):
    """Vectorized sampler of batch deviations on a frozen state."""
    n = state.n_particles
    if n % p:
        raise ValueError("frozen samplers assume p divides N")
    row = kernel_row(state, spec, i)
    full = full_mean(row, i)

    def sample(gen, size):
        mates = _random_mates(gen, n, p, i, size)
        return row[mates].sum(axis=1) / (p - 1) - full

    return sample


def frozen_y_sampler(state: ParticleEnsemble, spec: KernelSpec, p: int, i: int, beta: float,
                     n_steps: int, drift_rate: float = 0.0):
    """Sampler of momentum-averaged deviations after ``n_steps`` fresh partitions.

    With ``drift_rate = 0`` the state is frozen, so batch draws at different
    steps are independent. A positive ``drift_rate`` translates particle ``i``
    by ``drift_rate`` per step along the first axis (the other particles stay
    put), which makes the history stale in a controlled way.
    """
    n = state.n_particles
    if n % p:
        raise ValueError("frozen samplers assume p divides N")
    x0 = state.positions
    rows = []
    for s in range(n_steps + 1):
        x = x0.copy()
        x[i, 0] += drift_rate * s
        rows.append(kernel_row(ParticleEnsemble(x), spec, i))
    full_last = full_mean(rows[-1], i)

    def sample(gen, size):
        corrected = None
        for s in range(n_steps + 1):
            mates = _random_mates(gen, n, p, i, size)
            raw = rows[s][mates].sum(axis=1) / (p - 1)
            corrected = raw if corrected is None else beta * corrected + (1.0 - beta) * raw
        return corrected - full_last

    return sample


def momentum_weights(n: int, beta: float) -> np.ndarray:
    """Closed-form weights of raw terms ``0..n`` in the averaged interaction."""
    w = (1.0 - beta) * beta ** (n - np.arange(n + 1, dtype=float))
    w[0] = beta**n
    return w


def variance_contraction(beta: float) -> float:
    """Limiting ratio of averaged to raw estimator variance, ``(1-b)^2/(1-b^2)``."""
    return (1.0 - beta) ** 2 / (1.0 - beta**2)
