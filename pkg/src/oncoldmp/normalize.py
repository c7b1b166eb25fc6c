"""Affine map of a reference trajectory into a unit-scale, first-octant frame.

    normalize(x) = R (x - b) / scale
    rescale(y)   = scale * R^T y + b
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .field import EllipsoidObstacle

DIAGONAL = np.ones(3) / np.sqrt(3.0)


class DegenerateTrajectoryError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class NormalizationFrame:
    scale: float
    bias: np.ndarray
    rotation: np.ndarray

    def __post_init__(self):
        if not self.scale > 0:
            raise ValueError(f"scale must be > 0, got {self.scale!r}")
        b = np.array(self.bias, dtype=float).reshape(3)
        R = np.array(self.rotation, dtype=float).reshape(3, 3)
        if not np.allclose(R @ R.T, np.eye(3), atol=1e-9) or abs(np.linalg.det(R) - 1.0) > 1e-9:
            raise ValueError("rotation must be a proper orthonormal matrix")
        b.setflags(write=False)
        R.setflags(write=False)
        object.__setattr__(self, "bias", b)
        object.__setattr__(self, "rotation", R)

    @classmethod
    def identity(cls) -> "NormalizationFrame":
        return cls(1.0, np.zeros(3), np.eye(3))

    @property
    def is_axis_aligned(self) -> bool:
        return bool(np.array_equal(self.rotation, np.eye(3)))

    def to_dict(self) -> dict:
        return {"scale": self.scale, "bias": self.bias.tolist(), "rotation": self.rotation.tolist()}


def rotation_between(u, n) -> np.ndarray:
    """Proper rotation taking unit vector ``u`` onto unit vector ``n``."""
    u = np.asarray(u, float) / np.linalg.norm(u)
    n = np.asarray(n, float) / np.linalg.norm(n)
    c = float(u @ n)
    if c < -1.0 + 1e-12:
        # half turn about any axis perpendicular to u
        axis = np.cross(u, [1.0, 0.0, 0.0])
        if np.linalg.norm(axis) < 1e-6:
            axis = np.cross(u, [0.0, 1.0, 0.0])
        axis /= np.linalg.norm(axis)
        return 2.0 * np.outer(axis, axis) - np.eye(3)
    k = np.cross(u, n)
    K = np.array([[0, -k[2], k[1]], [k[2], 0, -k[0]], [-k[1], k[0], 0]])
    R = np.eye(3) + K + K @ K / (1.0 + c)
    # re-orthonormalize away rounding
    U, _, Vt = np.linalg.svd(R)
    return U @ Vt


def frame_from_trajectory(reference, align: bool = False) -> NormalizationFrame:
    """Bias = min corner, scale = bounding-box diagonal, rotation = I.

    With ``align=True`` the start-to-goal direction is first rotated onto the
    (1, 1, 1) diagonal and the bounding box is taken in the rotated frame.
    """
    X = np.asarray(reference, dtype=float).reshape(-1, 3)
    if X.shape[0] < 2 or np.all(np.abs(X - X[0]) <= 1e-12):
        raise DegenerateTrajectoryError("reference trajectory needs at least two distinct points")
    R = np.eye(3)
    if align:
        span = X[-1] - X[0]
        if np.linalg.norm(span) > 1e-12:
            R = rotation_between(span, DIAGONAL)
    Y = X @ R.T
    lo, hi = Y.min(axis=0), Y.max(axis=0)
    scale = float(np.linalg.norm(hi - lo))
    return NormalizationFrame(scale, R.T @ lo, R)


def normalize_point(frame: NormalizationFrame, x) -> np.ndarray:
    return frame.rotation @ (np.asarray(x, dtype=float) - frame.bias) / frame.scale


def rescale_point(frame: NormalizationFrame, y) -> np.ndarray:
    return frame.scale * frame.rotation.T @ np.asarray(y, dtype=float) + frame.bias


def normalize_points(frame: NormalizationFrame, X) -> np.ndarray:
    return (np.asarray(X, dtype=float) - frame.bias) @ frame.rotation.T / frame.scale


def rescale_points(frame: NormalizationFrame, Y) -> np.ndarray:
    return frame.scale * np.asarray(Y, dtype=float) @ frame.rotation + frame.bias


def normalize_vector(frame: NormalizationFrame, v) -> np.ndarray:
    """Velocities and other free vectors: rotate and scale, no bias."""
    return frame.rotation @ np.asarray(v, dtype=float) / frame.scale


def rescale_vector(frame: NormalizationFrame, v) -> np.ndarray:
    return frame.scale * frame.rotation.T @ np.asarray(v, dtype=float)


def normalize_obstacle(frame: NormalizationFrame, obstacle: EllipsoidObstacle) -> EllipsoidObstacle:
    radii = obstacle.radii / frame.scale
    if not frame.is_axis_aligned and not obstacle.is_sphere:
        # rotated ellipsoid axes are not representable; use the bounding sphere
        radii = np.full(3, radii.max())
    return EllipsoidObstacle(
        normalize_point(frame, obstacle.center), radii, normalize_vector(frame, obstacle.velocity)
    )
