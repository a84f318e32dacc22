"""Synthetic ground-truth robot.

The decoupled yaw/pitch -> tendon map of the three-tendon continuum robot,
its inverse, and a smooth perturbation (saturation, yaw/pitch cross-coupling
and gravity droop) that plays the role of the physical simulator. Angles are
in degrees, tendon variations in dimensionless length units.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import NamedTuple

import numpy as np

from .errors import NoConvergence, NonFiniteInput
from .numerics import RngStream

# literal constant from the decoupled transfer function (~sqrt(3))
SQRT3_LITERAL = 1.732


class PoseAngles(NamedTuple):
    alpha: float
    beta: float


class TendonDelta(NamedTuple):
    l1: float
    l2: float
    l3: float


@dataclass(frozen=True)
class PlantParams:
    segments: int = 4
    kappa_sat: float = 0.08
    kappa_x: float = 0.02
    g_sag: float = 3.0
    noise_sigma: float = 0.0

    def __post_init__(self):
        if int(self.segments) != self.segments or self.segments < 1:
            raise ValueError(f"segments must be a positive integer, got {self.segments}")
        for name in ("kappa_sat", "kappa_x"):
            v = getattr(self, name)
            if not 0.0 <= v <= 0.5:
                raise ValueError(f"{name} must lie in [0, 0.5], got {v}")
        if not 0.0 <= self.g_sag <= 30.0:
            raise ValueError(f"g_sag must lie in [0, 30], got {self.g_sag}")
        if not self.noise_sigma >= 0.0:
            raise ValueError(f"noise_sigma must be >= 0, got {self.noise_sigma}")

    @property
    def effective_kappa_sat(self) -> float:
        return self.kappa_sat * 4.0 / self.segments

    @property
    def effective_g_sag(self) -> float:
        return self.g_sag * 4.0 / self.segments

    def noiseless(self) -> "PlantParams":
        return replace(self, noise_sigma=0.0)

    @property
    def is_ideal(self) -> bool:
        return self.kappa_sat == 0.0 and self.kappa_x == 0.0 and self.g_sag == 0.0


PRESETS = {
    "ideal": PlantParams(kappa_sat=0.0, kappa_x=0.0, g_sag=0.0),
    "default": PlantParams(),
    "heavy": PlantParams(kappa_sat=0.15, g_sag=6.0),
}


def preset(name: str, **overrides) -> PlantParams:
    try:
        base = PRESETS[name]
    except KeyError:
        raise ValueError(f"unknown plant preset {name!r}; choose from {sorted(PRESETS)}") from None
    return replace(base, **overrides) if overrides else base


# ---------------------------------------------------------------------------
# Analytical map
# ---------------------------------------------------------------------------

def analytical_inverse_array(poses) -> np.ndarray:
    """Vectorised pose -> tendon map on an ``(n, 2)`` array."""
    P = np.asarray(poses, dtype=np.float64).reshape(-1, 2)
    if not np.all(np.isfinite(P)):
        raise NonFiniteInput("pose contains non-finite values")
    a, b = P[:, 0], P[:, 1]
    return np.column_stack([a / 1.5, b / SQRT3_LITERAL - a / 3.0, -b / SQRT3_LITERAL - a / 3.0])


def analytical_forward_array(cmds) -> np.ndarray:
    """Vectorised tendon -> pose map; the common mode is removed first."""
    C = np.asarray(cmds, dtype=np.float64).reshape(-1, 3)
    C = C - C.mean(axis=1, keepdims=True)
    a = 1.5 * C[:, 0]
    b = SQRT3_LITERAL * (C[:, 1] + a / 3.0)
    return np.column_stack([a, b])


def analytical_inverse(pose) -> TendonDelta:
    """``L1 = a/1.5``, ``L2 = b/1.732 - a/3``, ``L3 = -b/1.732 - a/3``."""
    a, b = float(pose[0]), float(pose[1])
    if not (math.isfinite(a) and math.isfinite(b)):
        raise NonFiniteInput(f"non-finite pose {pose!r}")
    return TendonDelta(a / 1.5, b / SQRT3_LITERAL - a / 3.0, -b / SQRT3_LITERAL - a / 3.0)


def analytical_forward(cmd) -> PoseAngles:
    l1, l2, l3 = (float(v) for v in cmd)
    m = (l1 + l2 + l3) / 3.0
    a = 1.5 * (l1 - m)
    return PoseAngles(a, SQRT3_LITERAL * ((l2 - m) + a / 3.0))


# ---------------------------------------------------------------------------
# Perturbed plant
# ---------------------------------------------------------------------------

def _perturb(a_id, b_id, params: PlantParams):
    ks = params.effective_kappa_sat
    a = a_id * (1.0 - ks * (a_id / 90.0) ** 2) + params.kappa_x * a_id * b_id / 90.0
    b = b_id * (1.0 - ks * (b_id / 90.0) ** 2) - params.effective_g_sag * np.cos(np.radians(b_id))
    return a, b


def plant_forward_array(cmds, params: PlantParams, rng: RngStream | None = None) -> np.ndarray:
    ideal = analytical_forward_array(cmds)
    a, b = _perturb(ideal[:, 0], ideal[:, 1], params)
    out = np.column_stack([a, b])
    if rng is not None and params.noise_sigma > 0:
        out = out + params.noise_sigma * rng.gaussian(out.shape)
    return out


def plant_forward(cmd, params: PlantParams, rng: RngStream | None = None) -> PoseAngles:
    """Achieved pose for a tendon command.

    Noise of std ``params.noise_sigma`` is added to each angle only when an
    ``rng`` stream is supplied.
    """
    a_id, b_id = analytical_forward(cmd)
    a, b = _perturb(a_id, b_id, params)
    a, b = float(a), float(b)
    if rng is not None and params.noise_sigma > 0:
        a += params.noise_sigma * rng.gaussian()
        b += params.noise_sigma * rng.gaussian()
    return PoseAngles(a, b)


def _achieved(ab: np.ndarray, params: PlantParams) -> np.ndarray:
    a, b = _perturb(ab[0], ab[1], params)
    return np.array([a, b])


def invert_plant(
    target,
    params: PlantParams,
    tol: float = 1e-6,
    max_iter: int = 50,
    fd_step: float = 1e-4,
    max_halvings: int = 8,
) -> TendonDelta:
    """Command that drives the noise-free plant to ``target``.

    Damped Newton in the (ideal yaw, ideal pitch) plane with a central
    finite-difference Jacobian, starting from the target itself. The result
    is passed through the analytical inverse so it sums to zero.

    Raises:
        NoConvergence: residual still above ``tol`` after ``max_iter`` steps.
    """
    t = np.array([float(target[0]), float(target[1])])
    if not np.all(np.isfinite(t)):
        raise NonFiniteInput(f"non-finite target {target!r}")
    p = params.noiseless()
    x = t.copy()
    r = _achieved(x, p) - t
    res = float(np.abs(r).max())
    for _ in range(max_iter):
        if res < tol:
            break
        J = np.empty((2, 2))
        for j in range(2):
            e = np.zeros(2)
            e[j] = fd_step
            J[:, j] = (_achieved(x + e, p) - _achieved(x - e, p)) / (2.0 * fd_step)
        try:
            step = np.linalg.solve(J, r)
        except np.linalg.LinAlgError:
            raise NoConvergence(res, "singular Jacobian during plant inversion") from None
        norm0 = float(np.linalg.norm(r))
        lam = 1.0
        for _ in range(max_halvings + 1):
            x_new = x - lam * step
            r_new = _achieved(x_new, p) - t
            if np.linalg.norm(r_new) < norm0:
                break
            lam *= 0.5
        x, r = x_new, r_new
        res = float(np.abs(r).max())
    if res >= tol:
        raise NoConvergence(res)
    return analytical_inverse(x)


def invert_plant_array(targets, params: PlantParams, **kw) -> np.ndarray:
    return np.array([invert_plant(t, params, **kw) for t in np.asarray(targets, dtype=float)])
