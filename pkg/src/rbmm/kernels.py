"""Interaction kernel catalog, delta-regularization and the steepness family.

All kernels take the displacement ``z = x_i - x_j`` as the last axis of an
array and return an array of the same shape.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from rbmm.core import ConfigError, KernelDomainError, NumericError, Prefactor

KERNEL_IDS = (
    "BiotSavart",
    "KellerSegel",
    "SecondOrderSmooth",
    "Morse",
    "SingularDemo",
    "K4Table",
    "K5Table",
    "K6Table",
    "Steepness",
    "Zero",
)

# kernels whose formula is undefined at z = 0 when unregularized
SINGULAR_AT_ORIGIN = frozenset(
    {"BiotSavart", "KellerSegel", "SingularDemo", "K4Table", "K5Table", "K6Table"}
)

DEFAULT_PARAMS = {
    "KellerSegel": {"C": 1.0},
    "Morse": {"C_r": 2.0, "l_r": 0.5, "C_a": 1.0, "l_a": 1.0},
    "Steepness": {"alpha": 1e-2},
}

# radius of the nearest tan pole guard for K6
_K6_TAN_GUARD = 1e-12


@dataclass(frozen=True)
class KernelSpec:
    id: str
    params: dict = field(default_factory=dict)
    delta: float = 0.0

    def __post_init__(self):
        if self.id not in KERNEL_IDS:
            raise ConfigError(f"unknown kernel id {self.id!r}")
        merged = dict(DEFAULT_PARAMS.get(self.id, {}))
        unknown = set(self.params) - set(merged)
        if unknown:
            raise ConfigError(f"kernel {self.id} has no parameters {sorted(unknown)}")
        merged.update({k: float(v) for k, v in self.params.items()})
        object.__setattr__(self, "params", merged)
        if self.id == "Steepness" and not merged["alpha"] > 0:
            raise ConfigError("alpha must be > 0")
        if self.id == "Morse" and not (merged["l_r"] > 0 and merged["l_a"] > 0):
            raise ConfigError("Morse length scales must be > 0")
        if not self.delta >= 0:
            raise ConfigError("delta must be >= 0")

    @property
    def dim(self) -> int:
        return 1 if self.id == "Steepness" else 2

    def __hash__(self):
        return hash((self.id, tuple(sorted(self.params.items())), self.delta))


def regularize(spec: KernelSpec, delta: float) -> KernelSpec:
    """Return ``spec`` wrapped as ``K(z) |z|^2 / (|z|^2 + delta^2)``.

    Applying it to an already regularized spec is rejected, since composing
    two wrappers would silently change the effective delta.
    """
    if not delta > 0:
        raise ConfigError("delta must be > 0")
    if spec.delta > 0:
        raise ConfigError(f"kernel {spec.id} is already regularized (delta={spec.delta})")
    return replace(spec, delta=float(delta))


def steepness(x, alpha):
    """The piecewise kernel with a peak of height ``1/alpha`` at ``1 +- alpha``."""
    x = np.asarray(x, dtype=float)
    s = x - 1.0
    with np.errstate(divide="ignore", invalid="ignore"):
        out = np.where(
            s < -alpha,
            -1.0 / s,
            np.where(s > alpha, 1.0 / s, np.abs(s) / alpha**2),
        )
    return out


def _raw(spec: KernelSpec, z: np.ndarray, r2: np.ndarray) -> np.ndarray:
    kid = spec.id
    p = spec.params
    if kid == "Steepness":
        return steepness(z, p["alpha"])
    if kid == "Zero":
        return np.zeros_like(z)
    z1 = z[..., 0]
    z2 = z[..., 1]
    if kid == "BiotSavart":
        return np.stack([-z2 / r2, z1 / r2], axis=-1)
    if kid == "KellerSegel":
        return p["C"] * z / r2[..., None]
    if kid == "SecondOrderSmooth":
        return z / (1.0 + r2)[..., None]
    r = np.sqrt(r2)
    if kid == "Morse":
        mag = p["C_r"] * np.exp(-r / p["l_r"]) - p["C_a"] * np.exp(-r / p["l_a"])
        unit = np.where(r[..., None] > 0, z / r[..., None], 0.0)
        return mag[..., None] * unit
    if kid == "SingularDemo":
        return np.stack([z1 / np.cosh(r2), np.cosh(z2) / r2], axis=-1)
    if kid == "K4Table":
        return np.stack([z1 / np.cosh(r2), np.exp(-(z2**2)) / r], axis=-1)
    if kid == "K5Table":
        return np.stack([np.sinh(z1) / r2, np.cosh(z2) / r2], axis=-1)
    if kid == "K6Table":
        t = np.tan(r2)
        if np.any(np.abs(np.cos(r2)) < _K6_TAN_GUARD):
            raise KernelDomainError("K6Table evaluated at a pole of tan(|z|^2)")
        mag = np.log(np.abs(-np.expm1(r2))) / (t / 10.0 + 2.0 * math.pi)
        return mag[..., None] * (z / r[..., None])
    raise ConfigError(f"unknown kernel id {kid!r}")


def evaluate(spec: KernelSpec, z: np.ndarray, exclude: np.ndarray | None = None) -> np.ndarray:
    """Vectorized kernel over displacements ``z`` of shape ``(..., d)``.

    Entries flagged in ``exclude`` (shape ``z.shape[:-1]``) are returned as 0
    and skip the singularity check; they mark self-pairs.
    """
    z = np.asarray(z, dtype=float)
    if z.shape[-1] != spec.dim:
        raise ValueError(f"kernel {spec.id} expects {spec.dim}-D displacements, got {z.shape[-1]}")
    r2 = np.einsum("...k,...k->...", z, z)
    zero = r2 == 0.0
    if exclude is not None:
        zero_live = zero & ~exclude
    else:
        zero_live = zero
    if spec.delta == 0 and spec.id in SINGULAR_AT_ORIGIN and zero_live.any():
        idx = np.argwhere(zero_live)[0]
        raise KernelDomainError(
            f"kernel {spec.id} is singular at z=0 (index {tuple(int(i) for i in idx)})",
            pair=tuple(int(i) for i in idx),
        )
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        k = _raw(spec, z, r2)
        if spec.delta > 0:
            k = k * (r2 / (r2 + spec.delta**2))[..., None]
    if spec.delta > 0:
        # continuous extension at the origin
        k[zero] = 0.0
    if exclude is not None:
        k[exclude] = 0.0
    if not np.isfinite(k).all():
        raise NumericError(f"kernel {spec.id} produced a non-finite value")
    return k


def eval_kernel(spec: KernelSpec, z) -> np.ndarray:
    """Kernel at a single displacement vector."""
    z = np.atleast_1d(np.asarray(z, dtype=float))
    if z.shape != (spec.dim,):
        raise ValueError(f"kernel {spec.id} expects a vector of length {spec.dim}")
    return evaluate(spec, z)


def velocity_weight(spec: KernelSpec, z: np.ndarray, exclude: np.ndarray | None = None) -> np.ndarray:
    """Scalar coupling weight for second-order systems: ``|K(z)|``.

    For ``SecondOrderSmooth`` this is ``|z| / (1 + |z|^2)``.
    """
    return np.linalg.norm(evaluate(spec, z, exclude), axis=-1)


def sup_norm(spec: KernelSpec) -> float:
    """Analytic bound on ``|K|`` for the bounded kernels used in step-bound checks."""
    if spec.id == "Zero":
        return 0.0
    if spec.id == "SecondOrderSmooth":
        return 0.5
    if spec.id == "BiotSavart" and spec.delta > 0:
        return 1.0 / (2.0 * spec.delta)
    if spec.id == "KellerSegel" and spec.delta > 0:
        return abs(spec.params["C"]) / (2.0 * spec.delta)
    if spec.id == "Morse":
        return max(abs(spec.params["C_r"] - spec.params["C_a"]), abs(spec.params["C_r"]), abs(spec.params["C_a"]))
    raise ValueError(f"no closed-form bound for kernel {spec.id} (delta={spec.delta})")


def pairwise_interaction(spec: KernelSpec, positions, subset, i, prefactor=Prefactor.OVER_N_MINUS_1,
                         velocities=None) -> np.ndarray:
    """Interaction on particle ``i`` from the other members of ``subset``.

    With ``velocities`` given, the summand is the second-order coupling
    ``|K(x_i - x_j)| (v_j - v_i)``.
    """
    subset = [int(j) for j in subset]
    if i not in subset:
        raise ValueError("i must belong to subset")
    if len(subset) < 2:
        raise ValueError("subset needs at least two members")
    x = np.asarray(positions, dtype=float)
    others = [j for j in subset if j != i]
    z = x[i] - x[others]
    try:
        if velocities is None:
            terms = evaluate(spec, z)
        else:
            v = np.asarray(velocities, dtype=float)
            w = velocity_weight(spec, z)
            terms = w[:, None] * (v[others] - v[i])
    except KernelDomainError as exc:
        j = others[exc.pair[0]] if exc.pair else None
        raise KernelDomainError(f"singular pair ({i}, {j})", pair=(i, j)) from exc
    m = len(subset)
    scale = 1.0 / (m - 1) if Prefactor(prefactor) is Prefactor.OVER_N_MINUS_1 else 1.0 / m
    return scale * terms.sum(axis=0)
