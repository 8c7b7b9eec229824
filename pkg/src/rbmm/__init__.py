"""Interacting-particle SDE solvers: full interaction, random batch, and
random batch with momentum-corrected interactions."""

from rbmm.core import (
    ConfigError,
    KernelDomainError,
    NumericError,
    ParticleEnsemble,
    Prefactor,
    RngStream,
    RunConfig,
    SystemSpec,
    gaussian_increments,
    sample_initial,
)
from rbmm.kernels import KernelSpec, eval_kernel, pairwise_interaction, regularize
from rbmm.solvers import (
    BatchPartition,
    MomentumBuffer,
    Trajectory,
    partition,
    simulate,
    step_rbm,
    step_rbmm,
    step_reference,
)
from rbmm.diagnostics import l2_error

__version__ = "0.1.0"

__all__ = [
    "BatchPartition", "ConfigError", "KernelDomainError", "KernelSpec", "MomentumBuffer",
    "NumericError", "ParticleEnsemble", "Prefactor", "RngStream", "RunConfig", "SystemSpec",
    "Trajectory", "eval_kernel", "gaussian_increments", "l2_error", "pairwise_interaction",
    "partition", "regularize", "sample_initial", "simulate", "step_rbm", "step_rbmm",
    "step_reference",
]
