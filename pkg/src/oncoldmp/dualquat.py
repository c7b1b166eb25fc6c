"""Dual-quaternion algebra, pose featurization and the semantic similarity metric.

Quaternions are stored as ``(w, x, y, z)``.  A pose ``(t, q_r)`` maps to the
unit dual quaternion ``q_r + eps * 0.5 * (q_t * q_r)`` with ``q_t = (0, t)``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

UNIT_TOLERANCE = 1e-6


class InvalidPoseError(ValueError):
    pass


class TrajectoryTooShortError(ValueError):
    pass


@dataclass(frozen=True, slots=True)
class Quaternion:
    w: float
    x: float
    y: float
    z: float

    @classmethod
    def identity(cls) -> "Quaternion":
        return cls(1.0, 0.0, 0.0, 0.0)

    @classmethod
    def from_axis_angle(cls, axis: Sequence[float], angle: float) -> "Quaternion":
        a = np.asarray(axis, dtype=float)
        n = np.linalg.norm(a)
        if n == 0.0:
            return cls.identity()
        a = a / n
        s = math.sin(angle / 2.0)
        return cls(math.cos(angle / 2.0), a[0] * s, a[1] * s, a[2] * s)

    @classmethod
    def pure(cls, v: Sequence[float]) -> "Quaternion":
        return cls(0.0, float(v[0]), float(v[1]), float(v[2]))

    def __mul__(self, o: "Quaternion") -> "Quaternion":
        return Quaternion(
            self.w * o.w - self.x * o.x - self.y * o.y - self.z * o.z,
            self.w * o.x + self.x * o.w + self.y * o.z - self.z * o.y,
            self.w * o.y - self.x * o.z + self.y * o.w + self.z * o.x,
            self.w * o.z + self.x * o.y - self.y * o.x + self.z * o.w,
        )

    def __add__(self, o: "Quaternion") -> "Quaternion":
        return Quaternion(self.w + o.w, self.x + o.x, self.y + o.y, self.z + o.z)

    def __sub__(self, o: "Quaternion") -> "Quaternion":
        return Quaternion(self.w - o.w, self.x - o.x, self.y - o.y, self.z - o.z)

    def __neg__(self) -> "Quaternion":
        return Quaternion(-self.w, -self.x, -self.y, -self.z)

    def scale(self, k: float) -> "Quaternion":
        return Quaternion(k * self.w, k * self.x, k * self.y, k * self.z)

    def conjugate(self) -> "Quaternion":
        return Quaternion(self.w, -self.x, -self.y, -self.z)

    def dot(self, o: "Quaternion") -> float:
        return self.w * o.w + self.x * o.x + self.y * o.y + self.z * o.z

    def norm(self) -> float:
        return math.sqrt(self.dot(self))

    def normalized(self) -> "Quaternion":
        n = self.norm()
        if n == 0.0:
            raise InvalidPoseError("cannot normalize a zero quaternion")
        return self.scale(1.0 / n)

    def canonical(self) -> "Quaternion":
        """Same rotation with ``w >= 0`` (first nonzero component positive on ties)."""
        for c in (self.w, self.x, self.y, self.z):
            if c > 0.0:
                return self
            if c < 0.0:
                return -self
        return self

    @property
    def vector(self) -> np.ndarray:
        return np.array([self.x, self.y, self.z])

    def as_array(self) -> np.ndarray:
        return np.array([self.w, self.x, self.y, self.z])

    def to_list(self) -> list[float]:
        return [self.w, self.x, self.y, self.z]

    def rotation_matrix(self) -> np.ndarray:
        w, x, y, z = self.w, self.x, self.y, self.z
        return np.array([
            [1 - 2 * (y * y + z * z), 2 * (x * y - z * w), 2 * (x * z + y * w)],
            [2 * (x * y + z * w), 1 - 2 * (x * x + z * z), 2 * (y * z - x * w)],
            [2 * (x * z - y * w), 2 * (y * z + x * w), 1 - 2 * (x * x + y * y)],
        ])


def _checked_rotation(q: Quaternion) -> Quaternion:
    n = q.norm()
    if not math.isfinite(n) or abs(n - 1.0) > UNIT_TOLERANCE:
        raise InvalidPoseError(f"rotation quaternion is not unit-norm (|q| = {n!r})")
    return q.scale(1.0 / n).canonical()


@dataclass(frozen=True, slots=True)
class Pose:
    """End-effector pose: translation in meters and a unit rotation quaternion."""

    translation: tuple[float, float, float]
    rotation: Quaternion = Quaternion(1.0, 0.0, 0.0, 0.0)

    def __post_init__(self):
        t = tuple(float(v) for v in self.translation)
        if len(t) != 3 or not all(math.isfinite(v) for v in t):
            raise InvalidPoseError(f"translation must be 3 finite values, got {self.translation!r}")
        object.__setattr__(self, "translation", t)
        object.__setattr__(self, "rotation", _checked_rotation(self.rotation))

    @property
    def position(self) -> np.ndarray:
        return np.array(self.translation)

    def translated(self, offset: Sequence[float]) -> "Pose":
        p = self.position + np.asarray(offset, dtype=float)
        return Pose(tuple(p), self.rotation)

    def to_dict(self) -> dict:
        return {"t": list(self.translation), "r": self.rotation.to_list()}

    @classmethod
    def from_dict(cls, d: dict) -> "Pose":
        try:
            t, r = d["t"], d["r"]
        except (KeyError, TypeError) as exc:
            raise InvalidPoseError(f"pose entry needs 't' and 'r': {d!r}") from exc
        if len(r) != 4:
            raise InvalidPoseError(f"rotation must be [w, x, y, z], got {r!r}")
        return cls(tuple(t), Quaternion(*(float(v) for v in r)))


@dataclass(frozen=True, slots=True)
class DualQuaternion:
    real: Quaternion
    dual: Quaternion

    @classmethod
    def identity(cls) -> "DualQuaternion":
        return cls(Quaternion.identity(), Quaternion(0.0, 0.0, 0.0, 0.0))

    def __mul__(self, other: "DualQuaternion") -> "DualQuaternion":
        return dual_quaternion_multiply(self, other)

    def conjugate(self) -> "DualQuaternion":
        """Quaternion conjugate of both parts; the inverse of a unit dual quaternion."""
        return DualQuaternion(self.real.conjugate(), self.dual.conjugate())

    def is_unit(self, tol: float = 1e-8) -> bool:
        return abs(self.real.norm() - 1.0) <= tol and abs(self.real.dot(self.dual)) <= tol

    def as_array(self) -> np.ndarray:
        return np.concatenate([self.real.as_array(), self.dual.as_array()])


def dual_quaternion_multiply(a: DualQuaternion, b: DualQuaternion) -> DualQuaternion:
    # eps^2 = 0 drops the dual*dual term
    return DualQuaternion(a.real * b.real, a.real * b.dual + a.dual * b.real)


def pose_to_dual_quaternion(p: Pose) -> DualQuaternion:
    q_r = _checked_rotation(p.rotation)
    q_t = Quaternion.pure(p.translation)
    return DualQuaternion(q_r, (q_t * q_r).scale(0.5))


def dual_quaternion_to_pose(dq: DualQuaternion) -> Pose:
    q_r = dq.real
    t = (dq.dual * q_r.conjugate()).scale(2.0 / q_r.dot(q_r))
    return Pose((t.x, t.y, t.z), q_r)


@dataclass(frozen=True, slots=True)
class FeaturizedPose:
    delta: DualQuaternion


@dataclass(frozen=True, slots=True)
class FeaturizedTrajectory:
    deltas: tuple[FeaturizedPose, ...]

    def __len__(self) -> int:
        return len(self.deltas)

    def __getitem__(self, i):
        return self.deltas[i]

    def __iter__(self):
        return iter(self.deltas)


FEATURIZE_MODES = ("paper", "conjugate")


def featurize(trajectory: Iterable[Pose], mode: str = "paper") -> FeaturizedTrajectory:
    """Express every pose but the last relative to the final pose.

    ``mode="paper"`` right-multiplies by the final dual quaternion;
    ``mode="conjugate"`` right-multiplies by its conjugate instead.
    """
    poses = list(trajectory)
    if len(poses) < 2:
        raise TrajectoryTooShortError(f"featurize needs at least 2 poses, got {len(poses)}")
    if mode not in FEATURIZE_MODES:
        raise ValueError(f"unknown featurize mode {mode!r}")
    dqs = [pose_to_dual_quaternion(p) for p in poses]
    last = dqs[-1] if mode == "paper" else dqs[-1].conjugate()
    return FeaturizedTrajectory(tuple(FeaturizedPose(q * last) for q in dqs[:-1]))


def semantic_similarity(a: FeaturizedPose, b: FeaturizedPose, dual_weight: float = 0.0) -> float:
    """Sign-invariant distance between featurized poses.

    With ``dual_weight = 0`` only the rotational parts are compared:
    ``min(|a_r - b_r|, |a_r + b_r|)``.  A positive weight adds
    ``dual_weight * |a_d -+ b_d|^2`` under each sign branch.
    """
    ar, br = a.delta.real, b.delta.real
    minus = (ar - br).dot(ar - br)
    plus = (ar + br).dot(ar + br)
    if dual_weight:
        ad, bd = a.delta.dual, b.delta.dual
        minus += dual_weight * (ad - bd).dot(ad - bd)
        plus += dual_weight * (ad + bd).dot(ad + bd)
    return math.sqrt(min(minus, plus))


def random_pose(rng: np.random.Generator, scale: float = 1.0) -> Pose:
    """Uniformly random rotation and a Gaussian translation; used by tests and demos."""
    q = rng.normal(size=4)
    q /= np.linalg.norm(q)
    return Pose(tuple(rng.normal(scale=scale, size=3)), Quaternion(*q))
