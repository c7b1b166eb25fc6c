"""Synthetic demonstrations: straight lines, minimum-jerk moves, arcs and lift-and-place.

All generators return an ``(n + 1, 3)`` position array sampled every ``dt``
over ``duration``; multi-waypoint paths split the duration in proportion to
segment length.
"""
from __future__ import annotations

import math
from typing import Sequence

import numpy as np

from .dmp import n_ticks
from .dualquat import Pose, Quaternion

KINDS = ("line", "minjerk", "arc", "lift-place")


def minjerk_profile(u) -> np.ndarray:
    """Normalized minimum-jerk progress 10u^3 - 15u^4 + 6u^5 on [0, 1]."""
    u = np.clip(np.asarray(u, dtype=float), 0.0, 1.0)
    return u**3 * (10.0 - 15.0 * u + 6.0 * u**2)


def _waypoints(waypoints) -> np.ndarray:
    W = np.asarray(waypoints, dtype=float)
    if W.ndim == 1:
        W = W[:, None]
    if W.ndim != 2 or W.shape[0] < 2:
        raise ValueError("need at least 2 waypoints")
    if not np.all(np.isfinite(W)):
        raise ValueError("waypoints must be finite")
    return W


def _grid(duration: float, dt: float) -> np.ndarray:
    if not duration > 0 or not dt > 0:
        raise ValueError("duration and dt must be > 0")
    n = n_ticks(duration, dt)
    return np.linspace(0.0, duration, n + 1)


def _segment_times(W: np.ndarray, duration: float) -> np.ndarray:
    lengths = np.linalg.norm(np.diff(W, axis=0), axis=1)
    total = lengths.sum()
    if total <= 0:
        frac = np.arange(len(W)) / (len(W) - 1)
    else:
        frac = np.concatenate([[0.0], np.cumsum(lengths) / total])
    return frac * duration


def _piecewise(W: np.ndarray, t: np.ndarray, duration: float, profile) -> np.ndarray:
    knots = _segment_times(W, duration)
    out = np.empty((len(t), W.shape[1]))
    seg = np.clip(np.searchsorted(knots, t, side="right") - 1, 0, len(W) - 2)
    for k in range(len(W) - 1):
        m = seg == k
        span = knots[k + 1] - knots[k]
        u = (t[m] - knots[k]) / span if span > 0 else np.ones(m.sum())
        out[m] = W[k] + np.outer(profile(u), W[k + 1] - W[k])
    return out


def knot_indices(kind: str, waypoints, duration: float, dt: float = 0.01) -> list[int]:
    """Sample indices where a generated path passes its waypoints (first and last for arcs)."""
    W = _waypoints(waypoints)
    n = n_ticks(duration, dt)
    if kind in ("line", "minjerk"):
        idx = np.rint(_segment_times(W, duration) / duration * n).astype(int)
        return sorted(set(int(i) for i in idx))
    return [0, n]


def line(waypoints, duration: float, dt: float = 0.01) -> np.ndarray:
    """Constant speed along the polyline."""
    W = _waypoints(waypoints)
    return _piecewise(W, _grid(duration, dt), duration, lambda u: np.clip(u, 0.0, 1.0))


def minjerk(waypoints, duration: float, dt: float = 0.01) -> np.ndarray:
    """Minimum-jerk moves between consecutive waypoints, at rest at every waypoint."""
    W = _waypoints(waypoints)
    return _piecewise(W, _grid(duration, dt), duration, minjerk_profile)


def arc(waypoints, duration: float, dt: float = 0.01, bulge: float = 0.25) -> np.ndarray:
    """Circular arc from the first to the last waypoint with a minimum-jerk time law.

    With three or more waypoints the arc passes through the middle one; with
    two, it rises ``bulge`` times the chord length above the midpoint (+z).
    """
    W = _waypoints(waypoints)
    if W.shape[1] != 3:
        raise ValueError("arc needs 3-D waypoints")
    a, b = W[0], W[-1]
    if len(W) >= 3:
        m = W[len(W) // 2]
    else:
        m = 0.5 * (a + b) + np.array([0.0, 0.0, bulge * np.linalg.norm(b - a)])
    # circle through a, m, b
    u, w = m - a, b - a
    n = np.cross(u, w)
    nn = float(n @ n)
    t = _grid(duration, dt)
    if nn < 1e-18:
        return minjerk([a, b], duration, dt)
    center = a + (np.cross(n, u) * (w @ w) + np.cross(w, n) * (u @ u)) / (2.0 * nn)
    e1 = a - center
    radius = np.linalg.norm(e1)
    e1 /= radius
    e2 = np.cross(n / math.sqrt(nn), e1)
    sweep = math.atan2((b - center) @ e2, (b - center) @ e1) % (2 * math.pi)
    phi = minjerk_profile(t / duration) * sweep
    return center + radius * (np.outer(np.cos(phi), e1) + np.outer(np.sin(phi), e2))


def lift_place(waypoints, duration: float, dt: float = 0.01, lift: float = 0.1) -> np.ndarray:
    """Lift by ``lift`` (+z), travel above the path, and lower onto the final waypoint."""
    W = _waypoints(waypoints)
    if W.shape[1] != 3:
        raise ValueError("lift-place needs 3-D waypoints")
    up = np.array([0.0, 0.0, lift])
    path = [W[0]] + [p + up for p in W] + [W[-1]]
    return minjerk(path, duration, dt)


def generate(kind: str, waypoints, duration: float, dt: float = 0.01, **options) -> np.ndarray:
    if kind == "line":
        return line(waypoints, duration, dt)
    if kind == "minjerk":
        return minjerk(waypoints, duration, dt)
    if kind == "arc":
        return arc(waypoints, duration, dt, **options)
    if kind == "lift-place":
        return lift_place(waypoints, duration, dt, **options)
    raise ValueError(f"unknown demo kind {kind!r}; expected one of {', '.join(KINDS)}")


def to_poses(positions, rotation: Sequence[float] = (1.0, 0.0, 0.0, 0.0)) -> list[Pose]:
    """Positions (padded to 3-D) with one fixed orientation."""
    P = np.asarray(positions, dtype=float)
    if P.ndim == 1:
        P = P[:, None]
    if P.shape[1] < 3:
        P = np.hstack([P, np.zeros((len(P), 3 - P.shape[1]))])
    q = Quaternion(*rotation)
    return [Pose(tuple(map(float, p)), q) for p in P]
