"""Discrete dynamic movement primitives with one transformation system per axis.

    tau * dz = alpha_z * (beta_z * (g - x) - z) + f(s) + perturbation
    tau * dx = z
    tau * ds = -alpha_s * s

The forcing term is a normalized RBF mixture gated by the phase,
``f(s) = s * sum(w_i psi_i(s)) / sum(psi_i(s))``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Callable, Optional

import numpy as np

ALPHA_Z = 25.0
BETA_Z = 25.0 / 4.0
ALPHA_S_HAT = 25.0 / 3.0
N_BASIS = 100
PHASE_FLOOR = 1e-12


class IntegrationError(RuntimeError):
    pass


@dataclass(frozen=True)
class DmpGains:
    alpha_z: float = ALPHA_Z
    beta_z: float = BETA_Z
    alpha_s_hat: float = ALPHA_S_HAT
    # None means "use the demonstration duration" when fitting
    tau: Optional[float] = None

    def __post_init__(self):
        for name in ("alpha_z", "beta_z", "alpha_s_hat"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be > 0, got {getattr(self, name)!r}")
        if self.tau is not None and not self.tau > 0:
            raise ValueError(f"tau must be > 0, got {self.tau!r}")


@dataclass(frozen=True, eq=False)
class RbfBasis:
    centers: np.ndarray
    widths: np.ndarray

    def __post_init__(self):
        c = np.array(self.centers, dtype=float).ravel()
        h = np.array(self.widths, dtype=float).ravel()
        if c.size < 1 or c.size != h.size:
            raise ValueError("centers and widths must be non-empty and of equal length")
        if np.any(c <= 0) or np.any(c > 1) or np.any(np.diff(c) >= 0):
            raise ValueError("centers must lie in (0, 1] and strictly decrease")
        if np.any(h <= 0):
            raise ValueError("widths must be positive")
        c.setflags(write=False)
        h.setflags(write=False)
        object.__setattr__(self, "centers", c)
        object.__setattr__(self, "widths", h)

    @property
    def count(self) -> int:
        return self.centers.size

    @classmethod
    def canonical(cls, count: int = N_BASIS, alpha_s_hat: float = ALPHA_S_HAT) -> "RbfBasis":
        """Centers evenly spaced in time and mapped through the phase decay; h_i = C^2 / c_i."""
        if count < 2:
            raise ValueError("canonical basis needs at least 2 functions")
        c = np.exp(-alpha_s_hat * np.arange(count) / count)
        return cls(c, count**2 / c)

    def activations(self, s) -> np.ndarray:
        s = np.asarray(s, dtype=float)
        return np.exp(-self.widths * (s[..., None] - self.centers) ** 2)


@dataclass(frozen=True, eq=False)
class DmpModel:
    gains: DmpGains
    basis: RbfBasis
    weights: np.ndarray  # (3, C)
    start: np.ndarray
    goal: np.ndarray
    degenerate: bool = False

    def __post_init__(self):
        w = np.array(self.weights, dtype=float)
        if w.ndim != 2 or w.shape[1] != self.basis.count:
            raise ValueError(f"weights must have shape (dims, {self.basis.count}), got {w.shape}")
        if not np.all(np.isfinite(w)):
            raise ValueError("weights must be finite")
        if self.gains.tau is None:
            raise ValueError("a model needs a concrete tau")
        for name, v in (("weights", w), ("start", np.array(self.start, float)), ("goal", np.array(self.goal, float))):
            v.setflags(write=False)
            object.__setattr__(self, name, v)

    @property
    def tau(self) -> float:
        return self.gains.tau

    def to_dict(self) -> dict:
        g = self.gains
        return {
            "gains": {"alpha_z": g.alpha_z, "beta_z": g.beta_z, "alpha_s_hat": g.alpha_s_hat, "tau": g.tau},
            "basis": {"centers": self.basis.centers.tolist(), "widths": self.basis.widths.tolist()},
            "weights": self.weights.tolist(),
            "start": self.start.tolist(),
            "goal": self.goal.tolist(),
            "degenerate": self.degenerate,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "DmpModel":
        return cls(
            gains=DmpGains(**d["gains"]),
            basis=RbfBasis(d["basis"]["centers"], d["basis"]["widths"]),
            weights=np.array(d["weights"], dtype=float),
            start=np.array(d["start"], dtype=float),
            goal=np.array(d["goal"], dtype=float),
            degenerate=bool(d.get("degenerate", False)),
        )


@dataclass(frozen=True, eq=False)
class DmpState:
    x: np.ndarray
    z: np.ndarray
    s: float


def forcing(model: DmpModel, s: float) -> np.ndarray:
    psi = model.basis.activations(s)
    total = psi.sum()
    if total < 1e-300:
        return np.zeros(model.weights.shape[0])
    return model.weights @ psi / total * s


def phase_at_samples(n: int, dt: float, tau: float, alpha_s: float) -> np.ndarray:
    """Phase values produced by the explicit update at ``n`` consecutive ticks."""
    return np.maximum((1.0 - dt * alpha_s / tau) ** np.arange(n), PHASE_FLOOR)


def fit_lwr(demonstration, dt: float, gains: Optional[DmpGains] = None,
            basis: Optional[RbfBasis] = None) -> DmpModel:
    """Fit forcing weights to a uniformly sampled demonstration.

    Forcing targets come from inverting the discrete update used by
    :func:`step`, so a perfect basis fit reproduces the samples exactly at
    the same ``dt``.  Each weight is then a phase-weighted local regression
    ``w_i = sum(s psi_i f) / sum(s^2 psi_i)``.
    """
    X = np.asarray(demonstration, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    if X.shape[0] < 3:
        raise ValueError(f"demonstration needs at least 3 samples, got {X.shape[0]}")
    if not dt > 0:
        raise ValueError("dt must be > 0")
    gains = gains or DmpGains()
    n = X.shape[0]
    if gains.tau is None:
        gains = replace(gains, tau=(n - 1) * dt)
    basis = basis or RbfBasis.canonical(alpha_s_hat=gains.alpha_s_hat)
    start, goal = X[0].copy(), X[-1].copy()

    if np.all(np.abs(X - X[0]) <= 1e-12):
        return DmpModel(gains, basis, np.zeros((X.shape[1], basis.count)), start, start.copy(), degenerate=True)

    tau, az, bz = gains.tau, gains.alpha_z, gains.beta_z
    z = np.zeros_like(X)
    z[1:] = tau * np.diff(X, axis=0) / dt
    f = tau * (z[1:] - z[:-1]) / dt - az * (bz * (goal - X[:-1]) - z[:-1])
    s = phase_at_samples(n - 1, dt, tau, gains.alpha_s_hat)
    psi = basis.activations(s)  # (n-1, C)
    num = (psi * s[:, None]).T @ f  # (C, dims)
    den = (psi * (s**2)[:, None]).sum(axis=0)
    w = np.where(den[:, None] > 1e-300, num / np.maximum(den, 1e-300)[:, None], 0.0)
    return DmpModel(gains, basis, w.T, start, goal)


def step(model: DmpModel, state: DmpState, dt: float, perturbation=None,
         alpha_s: Optional[float] = None) -> DmpState:
    """One semi-implicit Euler tick: z is advanced first and x uses the new z."""
    if not dt > 0:
        raise ValueError("dt must be > 0")
    g = model.gains
    a_s = g.alpha_s_hat if alpha_s is None else alpha_s
    x, z, s = state.x, state.z, state.s
    acc = g.alpha_z * (g.beta_z * (model.goal - x) - z) + forcing(model, s)
    if perturbation is not None:
        p = np.asarray(perturbation, dtype=float)
        bad = np.flatnonzero(~np.isfinite(p))
        if bad.size:
            raise IntegrationError(f"non-finite perturbation component {int(bad[0])}: {p[bad[0]]!r}")
        acc = acc + p
    z_new = z + dt * acc / g.tau
    x_new = x + dt * z_new / g.tau
    s_new = max(s - dt * a_s * s / g.tau, PHASE_FLOOR)
    return DmpState(x_new, z_new, s_new)


def initial_state(model: DmpModel) -> DmpState:
    return DmpState(model.start.copy(), np.zeros_like(model.start), 1.0)


def n_ticks(duration: float, dt: float) -> int:
    """ceil(duration / dt), forgiving floating-point noise on exact multiples."""
    r = duration / dt
    k = round(r)
    return int(k) if abs(r - k) < 1e-9 else int(math.ceil(r))


@dataclass
class Rollout:
    t: np.ndarray
    x: np.ndarray
    z: np.ndarray
    s: np.ndarray
    tau: float = 1.0

    @property
    def v(self) -> np.ndarray:
        return self.z / self.tau

    def __len__(self) -> int:
        return self.t.size

    def states(self) -> list[DmpState]:
        return [DmpState(self.x[i], self.z[i], float(self.s[i])) for i in range(len(self))]


PerturbationSource = Callable[[np.ndarray, np.ndarray, float], np.ndarray]
PhaseRateSource = Callable[[np.ndarray, float], float]


def rollout(model: DmpModel, dt: float, duration: float,
            perturbation_source: Optional[PerturbationSource] = None,
            alpha_s_source: Optional[PhaseRateSource] = None) -> Rollout:
    if not dt > 0 or duration < 0:
        raise ValueError("need dt > 0 and duration >= 0")
    n = n_ticks(duration, dt) + 1
    dims = model.start.size
    xs, zs, ss = np.empty((n, dims)), np.empty((n, dims)), np.empty(n)
    state = initial_state(model)
    xs[0], zs[0], ss[0] = state.x, state.z, state.s
    for k in range(1, n):
        pert = None
        if perturbation_source is not None:
            pert = perturbation_source(state.x, state.z / model.tau, state.s)
        a_s = None if alpha_s_source is None else alpha_s_source(state.x, state.s)
        try:
            state = step(model, state, dt, pert, a_s)
        except IntegrationError as exc:
            raise IntegrationError(f"tick {k}: {exc}") from exc
        xs[k], zs[k], ss[k] = state.x, state.z, state.s
    return Rollout(np.arange(n) * dt, xs, zs, ss, model.tau)
