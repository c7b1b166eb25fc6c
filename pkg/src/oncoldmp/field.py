"""Dynamic volumetric potential field around ellipsoidal obstacles.

The potential is active only while the system moves towards the obstacle:

    U(x, v) = lam * (-cos theta)^beta * |v| / C(x)^eta    for theta in [pi/2, pi]

where ``C`` is the ellipsoid isopotential and ``theta`` the angle between
``x - o`` and the velocity relative to the obstacle.  The perturbation fed
to the DMP is ``-grad_x U``.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Iterable, Optional

import numpy as np

log = logging.getLogger(__name__)

DEFAULT_LAMBDA = 10.0
DEFAULT_BETA = 4.0
DEFAULT_ETA = 1.0


def _vec3(v, name: str) -> np.ndarray:
    a = np.array(v, dtype=float).reshape(-1)
    if a.size != 3:
        raise ValueError(f"{name} must have 3 components, got {v!r}")
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class EllipsoidObstacle:
    center: np.ndarray
    radii: np.ndarray
    velocity: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        object.__setattr__(self, "center", _vec3(self.center, "center"))
        object.__setattr__(self, "radii", _vec3(self.radii, "radii"))
        object.__setattr__(self, "velocity", _vec3(self.velocity, "velocity"))
        if np.any(self.radii <= 0):
            raise ValueError(f"radii must be strictly positive, got {self.radii.tolist()}")

    @classmethod
    def sphere(cls, center, radius: float, velocity=(0.0, 0.0, 0.0)) -> "EllipsoidObstacle":
        return cls(center, (radius, radius, radius), velocity)

    @property
    def is_sphere(self) -> bool:
        return bool(np.all(self.radii == self.radii[0]))

    def to_dict(self) -> dict:
        return {"center": self.center.tolist(), "radii": self.radii.tolist(), "velocity": self.velocity.tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> "EllipsoidObstacle":
        unknown = set(d) - {"center", "radii", "velocity"}
        if unknown:
            raise ValueError(f"unknown obstacle fields: {sorted(unknown)}")
        return cls(d["center"], d["radii"], d.get("velocity", (0.0, 0.0, 0.0)))


@dataclass(frozen=True)
class FieldParams:
    lam: float = DEFAULT_LAMBDA
    beta: float = DEFAULT_BETA
    eta: float = DEFAULT_ETA

    def __post_init__(self):
        if not (self.lam > 0 and self.eta > 0):
            raise ValueError(f"lambda and eta must be > 0, got {self.lam!r}, {self.eta!r}")
        if not self.beta > 1:
            raise ValueError(f"beta must be > 1, got {self.beta!r}")

    def as_array(self) -> np.ndarray:
        return np.array([self.lam, self.beta, self.eta])

    def to_dict(self) -> dict:
        return {"lambda": self.lam, "beta": self.beta, "eta": self.eta}

    @classmethod
    def from_dict(cls, d: dict) -> "FieldParams":
        return cls(float(d["lambda"]), float(d["beta"]), float(d["eta"]))


def isopotential(obstacle: EllipsoidObstacle, x) -> float:
    r = (np.asarray(x, dtype=float) - obstacle.center) / obstacle.radii
    return float(r @ r)


def approach_angle(x, v, o) -> Optional[float]:
    """Angle between ``x - o`` and ``v``; ``None`` when either vector vanishes."""
    d = np.asarray(x, dtype=float) - np.asarray(o, dtype=float)
    v = np.asarray(v, dtype=float)
    nd, nv = math.sqrt(d @ d), math.sqrt(v @ v)
    if nd == 0.0 or nv == 0.0:
        return None
    return math.acos(max(-1.0, min(1.0, float(d @ v) / (nd * nv))))


def potential(params: FieldParams, obstacle: EllipsoidObstacle, x, v) -> float:
    """U at position ``x`` for system velocity ``v`` (the obstacle velocity is subtracted)."""
    x = np.asarray(x, dtype=float)
    v_rel = np.asarray(v, dtype=float) - obstacle.velocity
    d = x - obstacle.center
    nd, nv = math.sqrt(d @ d), math.sqrt(v_rel @ v_rel)
    if nd == 0.0 or nv == 0.0:
        return 0.0
    cos_t = float(d @ v_rel) / (nd * nv)
    if cos_t >= 0.0:
        return 0.0
    return params.lam * (-cos_t) ** params.beta * nv / isopotential(obstacle, x) ** params.eta


def field_force(params: FieldParams, obstacle: EllipsoidObstacle, x, v) -> np.ndarray:
    """Analytic ``-grad_x U`` for one obstacle."""
    x = np.asarray(x, dtype=float)
    v_rel = np.asarray(v, dtype=float) - obstacle.velocity
    d = x - obstacle.center
    nd2 = float(d @ d)
    nv = math.sqrt(v_rel @ v_rel)
    if nd2 == 0.0:
        log.warning("field evaluated at the obstacle center %s; returning zero force", obstacle.center)
        return np.zeros(3)
    if nv == 0.0:
        return np.zeros(3)
    nd = math.sqrt(nd2)
    cos_t = float(d @ v_rel) / (nd * nv)
    if cos_t >= 0.0:
        return np.zeros(3)
    c = isopotential(obstacle, x)
    grad_cos = v_rel / (nd * nv) - cos_t * d / nd2
    grad_c = 2.0 * d / obstacle.radii**2
    lam, beta, eta = params.lam, params.beta, params.eta
    return lam * nv * (-cos_t) ** (beta - 1.0) * c ** (-eta) * (beta * grad_cos - eta * cos_t / c * grad_c)


def total_field_force(params: FieldParams, obstacles: Iterable[EllipsoidObstacle], x, v) -> np.ndarray:
    f = np.zeros(3)
    for ob in obstacles:
        f = f + field_force(params, ob, x, v)
    return f
