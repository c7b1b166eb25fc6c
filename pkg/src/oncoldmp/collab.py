"""Proximity-dependent phase rate that lets one arm yield to another."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Optional

import numpy as np

from .dmp import ALPHA_S_HAT

UNBOUNDED = math.inf
DEFAULT_EPSILON_S = 0.25


@dataclass(frozen=True)
class PhaseCoupling:
    alpha_hat: float = ALPHA_S_HAT
    epsilon_s: float = DEFAULT_EPSILON_S
    enabled: bool = False
    partner: Optional[str] = None
    # lower value = higher priority; an enabled arm yields to arms ranked above it
    priority: int = 0

    def __post_init__(self):
        if not self.alpha_hat > 0:
            raise ValueError(f"alpha_hat must be > 0, got {self.alpha_hat!r}")
        if not self.epsilon_s > 0:
            raise ValueError(f"epsilon_s must be > 0, got {self.epsilon_s!r}")

    def to_dict(self) -> dict:
        d = {"enabled": self.enabled, "alpha_hat": self.alpha_hat,
             "epsilon_s": self.epsilon_s, "priority": self.priority}
        if self.partner is not None:
            d["partner"] = self.partner
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "PhaseCoupling":
        unknown = set(d) - {"enabled", "alpha_hat", "epsilon_s", "priority", "partner"}
        if unknown:
            raise ValueError(f"unknown coupling fields: {sorted(unknown)}")
        return cls(
            alpha_hat=float(d.get("alpha_hat", ALPHA_S_HAT)),
            epsilon_s=float(d.get("epsilon_s", DEFAULT_EPSILON_S)),
            enabled=bool(d.get("enabled", False)),
            partner=d.get("partner"),
            priority=int(d.get("priority", 0)),
        )


def vicinity(x, x_other, epsilon_s: float) -> float:
    """Distance between the two points if within ``epsilon_s``, else ``UNBOUNDED``."""
    d = float(np.linalg.norm(np.asarray(x, dtype=float) - np.asarray(x_other, dtype=float)))
    return d if d <= epsilon_s else UNBOUNDED


def rate_from_vicinity(alpha_hat: float, d: float) -> float:
    if d == UNBOUNDED:
        return alpha_hat
    return alpha_hat * (1.0 - math.exp(-d))


def phase_rate(coupling: PhaseCoupling, x, x_other) -> float:
    if not coupling.enabled:
        return coupling.alpha_hat
    return rate_from_vicinity(coupling.alpha_hat, vicinity(x, x_other, coupling.epsilon_s))


def phase_rate_nearest(coupling: PhaseCoupling, x, others: Iterable) -> float:
    """Rate against the nearest of several arms this one yields to."""
    if not coupling.enabled:
        return coupling.alpha_hat
    d = min((vicinity(x, o, coupling.epsilon_s) for o in others), default=UNBOUNDED)
    return rate_from_vicinity(coupling.alpha_hat, d)
