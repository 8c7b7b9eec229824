"""Domain types, seeded random streams and initial-condition samplers."""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import TYPE_CHECKING

import numpy as np

if TYPE_CHECKING:
    from rbmm.kernels import KernelSpec


class ConfigError(ValueError):
    """Invalid or inconsistent run/system configuration."""


class KernelDomainError(ArithmeticError):
    """Kernel evaluated at an excluded singular point."""

    def __init__(self, message, pair=None):
        super().__init__(message)
        self.pair = pair


class NumericError(ArithmeticError):
    """A computation produced NaN or Inf."""


class Prefactor(str, enum.Enum):
    OVER_N_MINUS_1 = "OverNMinus1"
    OVER_N = "OverN"


SOLVERS = ("Reference", "RBM", "RBMM")
INITS = ("UniformUnitDisk2D", "UniformInterval1D")
DRIFTS = ("none", "cos_flow")
FIRST_STEP = ("history", "zero_history")

# purpose tags keep the streams for different consumers disjoint
_PURPOSE = {"init": 0, "noise": 1, "partition": 2, "sample": 3}


@dataclass(frozen=True)
class RngStream:
    """A reproducible stream keyed by ``(seed, purpose, step)``.

    Per-particle draws are taken at a fixed offset (row ``i``) of the
    ``(purpose, step)`` stream, so particle ``i`` always sees the same values
    no matter how the work is split.
    """

    seed: int
    purpose: str = "noise"
    step: int = 0

    def __post_init__(self):
        if self.purpose not in _PURPOSE:
            raise ConfigError(f"unknown stream purpose {self.purpose!r}")

    def generator(self) -> np.random.Generator:
        ss = np.random.SeedSequence(
            entropy=int(self.seed) & (2**64 - 1),
            spawn_key=(_PURPOSE[self.purpose], int(self.step)),
        )
        return np.random.Generator(np.random.PCG64(ss))

    def at(self, step: int) -> "RngStream":
        return RngStream(self.seed, self.purpose, step)


@dataclass
class ParticleEnsemble:
    positions: np.ndarray
    velocities: np.ndarray | None = None

    def __post_init__(self):
        self.positions = np.asarray(self.positions, dtype=float)
        if self.positions.ndim != 2:
            raise ValueError("positions must be an N x d matrix")
        if self.velocities is not None:
            self.velocities = np.asarray(self.velocities, dtype=float)
            if self.velocities.shape != self.positions.shape:
                raise ValueError("velocities must match positions in shape")

    @property
    def n_particles(self) -> int:
        return self.positions.shape[0]

    @property
    def dim(self) -> int:
        return self.positions.shape[1]

    def is_finite(self) -> bool:
        ok = bool(np.isfinite(self.positions).all())
        if self.velocities is not None:
            ok = ok and bool(np.isfinite(self.velocities).all())
        return ok

    def copy(self) -> "ParticleEnsemble":
        v = None if self.velocities is None else self.velocities.copy()
        return ParticleEnsemble(self.positions.copy(), v)


@dataclass(frozen=True)
class SystemSpec:
    """Dynamics order, kernel, external drift, noise strength and prefactor."""

    kernel: "KernelSpec"
    order: int = 1
    external_drift: str = "none"
    sigma: float = 1.0
    prefactor: Prefactor = Prefactor.OVER_N_MINUS_1

    def __post_init__(self):
        if self.order not in (1, 2):
            raise ConfigError("order must be 1 or 2")
        if not self.sigma >= 0:
            raise ConfigError("sigma must be >= 0")
        if self.external_drift not in DRIFTS:
            raise ConfigError(f"unknown external_drift {self.external_drift!r}")
        object.__setattr__(self, "prefactor", Prefactor(self.prefactor))
        if self.external_drift == "cos_flow" and self.kernel.dim != 2:
            raise ConfigError("cos_flow drift needs a 2-D system")


@dataclass(frozen=True)
class RunConfig:
    n_particles: int = 1000
    batch_size: int = 40
    tau: float = 1e-3
    t_end: float = 0.02
    beta: float = 0.1
    delta: float = 0.0
    seed: int = 0
    solvers: tuple = SOLVERS
    init: str = "UniformUnitDisk2D"
    save_every: int = 0
    first_step: str = "history"

    def __post_init__(self):
        object.__setattr__(self, "solvers", tuple(self.solvers))
        if self.n_particles < 2:
            raise ConfigError("n_particles must be >= 2")
        if self.batch_size < 2:
            raise ConfigError("batch_size must be >= 2")
        if self.batch_size > self.n_particles:
            raise ConfigError("batch_size must be <= n_particles")
        if not self.tau > 0:
            raise ConfigError("tau must be > 0")
        if not self.t_end > 0:
            raise ConfigError("t_end must be > 0")
        if not 0 <= self.beta < 1:
            raise ConfigError("beta must lie in [0,1)")
        if not self.delta >= 0:
            raise ConfigError("delta must be >= 0")
        if self.init not in INITS:
            raise ConfigError(f"unknown init {self.init!r}")
        bad = [s for s in self.solvers if s not in SOLVERS]
        if bad or not self.solvers:
            raise ConfigError(f"solvers must be a non-empty subset of {SOLVERS}")
        if self.save_every < 0:
            raise ConfigError("save_every must be >= 0")
        if self.first_step not in FIRST_STEP:
            raise ConfigError(f"first_step must be one of {FIRST_STEP}")
        step_count(self.t_end, self.tau)

    @property
    def n_steps(self) -> int:
        return step_count(self.t_end, self.tau)


def step_count(t_end: float, tau: float) -> int:
    ratio = t_end / tau
    n = int(round(ratio))
    if n < 1 or abs(ratio - n) > 1e-9 * ratio:
        raise ConfigError(f"t_end/tau = {ratio!r} is not a positive integer step count")
    return n


def init_dim(init: str) -> int:
    return 1 if init == "UniformInterval1D" else 2


def sample_initial(config: RunConfig, spec: SystemSpec, rng: RngStream) -> ParticleEnsemble:
    """Draw the starting ensemble.

    ``UniformUnitDisk2D`` uses polar inverse-CDF sampling (radius ``sqrt(u)``)
    so every particle consumes exactly two uniforms. ``UniformInterval1D``
    is uniform on [-1, 1]. Second-order systems start at rest.
    """
    if config.init not in INITS:
        raise ConfigError(f"unknown init {config.init!r}")
    d = init_dim(config.init)
    if d != spec.kernel.dim:
        raise ConfigError(
            f"init {config.init} is {d}-D but kernel {spec.kernel.id} is {spec.kernel.dim}-D"
        )
    n = config.n_particles
    u = rng.generator().random((n, 2))
    if config.init == "UniformUnitDisk2D":
        r = np.sqrt(u[:, 0])
        theta = 2.0 * math.pi * u[:, 1]
        x = np.column_stack([r * np.cos(theta), r * np.sin(theta)])
        # guard rounding so the norm bound holds exactly
        norms = np.linalg.norm(x, axis=1)
        over = norms > 1.0
        x[over] /= norms[over, None]
    else:
        x = 2.0 * u[:, :1] - 1.0
    v = np.zeros_like(x) if spec.order == 2 else None
    return ParticleEnsemble(x, v)


def gaussian_increments(rng: RngStream, n: int, d: int, tau: float) -> np.ndarray:
    """Brownian increments over one step: an ``n x d`` matrix of N(0, tau) draws."""
    if not tau > 0:
        raise ConfigError("tau must be > 0")
    return math.sqrt(tau) * rng.generator().standard_normal((n, d))


def external_drift(name: str, x: np.ndarray) -> np.ndarray:
    """The ``-grad V`` term. ``cos_flow`` is the shear (0, cos x1)."""
    if name == "none":
        return np.zeros_like(x)
    if name == "cos_flow":
        out = np.zeros_like(x)
        out[:, 1] = np.cos(x[:, 0])
        return out
    raise ConfigError(f"unknown external_drift {name!r}")


def drift_bound(name: str) -> float:
    return {"none": 0.0, "cos_flow": 1.0}[name]
