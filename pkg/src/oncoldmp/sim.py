"""Tick-synchronous kinematic simulation of several DMP-driven end-effectors.

Every tick reads one snapshot of all arms, computes each arm's field
perturbation (static obstacles plus the other end-effectors as moving
spheres, evaluated in the arm's normalized frame) and its phase rate, and
only then advances every arm.  Update order therefore cannot matter.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .collab import PhaseCoupling, phase_rate_nearest
from .dmp import DmpGains, DmpModel, DmpState, IntegrationError, fit_lwr, initial_state, n_ticks, rollout, step
from .field import EllipsoidObstacle, FieldParams, isopotential, total_field_force
from .normalize import (
    NormalizationFrame,
    frame_from_trajectory,
    normalize_obstacle,
    normalize_point,
    normalize_vector,
    rescale_vector,
)
from .planner import PlannedTrajectory

DEFAULT_EE_RADIUS = 0.1
EVENT_KINDS = ("goal_reached", "constraint_violation", "deadlock", "divergence")


@dataclass(frozen=True, eq=False)
class ArmConfig:
    id: str
    model: DmpModel
    frame: NormalizationFrame
    field_params: FieldParams = FieldParams()
    coupling: PhaseCoupling = PhaseCoupling()
    ee_radius: float = DEFAULT_EE_RADIUS
    planned: Optional[PlannedTrajectory] = None
    reference: Optional[np.ndarray] = None  # planned positions resampled at the simulation dt

    def __post_init__(self):
        if not self.ee_radius > 0:
            raise ValueError(f"arm {self.id!r}: ee_radius must be > 0")


def resample(times, positions, dt: float) -> np.ndarray:
    """Linear interpolation of a timed position list onto a uniform ``dt`` grid."""
    times = np.asarray(times, dtype=float)
    P = np.asarray(positions, dtype=float)
    grid = np.arange(n_ticks(times[-1] - times[0], dt) + 1) * dt + times[0]
    grid[-1] = min(grid[-1], times[-1])
    return np.column_stack([np.interp(grid, times, P[:, k]) for k in range(P.shape[1])])


def arm_from_reference(arm_id: str, reference, dt: float, *, gains: Optional[DmpGains] = None,
                       field_params: FieldParams = FieldParams(), coupling: PhaseCoupling = PhaseCoupling(),
                       ee_radius: float = DEFAULT_EE_RADIUS, planned: Optional[PlannedTrajectory] = None,
                       align: bool = False) -> ArmConfig:
    X = np.asarray(reference, dtype=float)
    model = fit_lwr(X, dt, gains)
    return ArmConfig(arm_id, model, frame_from_trajectory(X, align), field_params, coupling,
                     ee_radius, planned, X)


def arm_from_plan(arm_id: str, planned: PlannedTrajectory, dt: float, **kwargs) -> ArmConfig:
    X = resample(planned.times, planned.positions(), dt)
    return arm_from_reference(arm_id, X, dt, planned=planned, **kwargs)


@dataclass
class Scenario:
    arms: list
    static_obstacles: list = field(default_factory=list)
    dt: float = 0.01
    max_duration: float = 10.0
    seed: int = 0
    goal_tolerance: float = 1e-3
    phase_tolerance: float = 0.01
    deadlock_window: float = 2.0
    deadlock_rate: float = 1e-3
    name: str = "scenario"

    def validate(self):
        if not self.arms:
            raise ValueError("scenario has no arms")
        if not self.dt > 0:
            raise ValueError("dt must be > 0")
        if not self.max_duration > 0:
            raise ValueError("max_duration must be > 0")
        ids = [a.id for a in self.arms]
        if len(set(ids)) != len(ids):
            raise ValueError(f"duplicate arm ids: {ids}")


@dataclass
class Event:
    time: float
    kind: str
    arm: Optional[str]
    detail: str

    def to_dict(self) -> dict:
        return {"time": self.time, "kind": self.kind, "arm": self.arm, "detail": self.detail}


@dataclass
class ArmSeries:
    x: np.ndarray
    v: np.ndarray
    s: np.ndarray
    alpha_s: np.ndarray
    c: np.ndarray  # (ticks, obstacles) isopotential values
    force: np.ndarray
    obstacle_names: list
    nominal_x: np.ndarray  # unperturbed rollout, the phase-indexed reference
    nominal_s: np.ndarray
    ee_radius: float

    @property
    def min_c(self) -> np.ndarray:
        if self.c.shape[1] == 0:
            return np.full(self.c.shape[0], math.inf)
        return self.c.min(axis=1)


@dataclass
class RunLog:
    dt: float
    t: np.ndarray
    arms: dict
    events: list
    name: str = "scenario"

    @property
    def arm_ids(self) -> list:
        return list(self.arms)

    def events_of(self, kind: str, arm: Optional[str] = None) -> list:
        return [e for e in self.events if e.kind == kind and (arm is None or e.arm == arm)]

    def completion_time(self, arm_id: str) -> Optional[float]:
        ev = self.events_of("goal_reached", arm_id)
        return ev[0].time if ev else None

    def metrics(self) -> dict:
        out = {}
        for a in self.arms:
            out[a] = {
                "max_deviation": max_deviation(self, a),
                "max_deviation_time_indexed": max_deviation_time_indexed(self, a),
                "completion_time": self.completion_time(a),
                "min_C": float(self.arms[a].min_c.min()) if self.arms[a].c.size else None,
            }
        if len(self.arms) >= 2:
            out["minimum_clearance"] = minimum_clearance(self)
        return out


def phase_reference(series: ArmSeries, s) -> np.ndarray:
    """Nominal position at phase ``s`` (linear in -log s between nominal ticks)."""
    key = -np.log(series.nominal_s)
    q = -np.log(np.atleast_1d(np.asarray(s, dtype=float)))
    return np.column_stack([np.interp(q, key, series.nominal_x[:, k]) for k in range(series.nominal_x.shape[1])])


def max_deviation(log: RunLog, arm_id: str) -> float:
    """Largest distance from the nominal trajectory at the same phase.

    Slowing down (a delayed phase) is not counted as deviation.
    """
    ser = log.arms[arm_id]
    ref = phase_reference(ser, ser.s)
    return float(np.max(np.linalg.norm(ser.x - ref, axis=1)))


def max_deviation_time_indexed(log: RunLog, arm_id: str) -> float:
    ser = log.arms[arm_id]
    n = min(len(ser.x), len(ser.nominal_x))
    return float(np.max(np.linalg.norm(ser.x[:n] - ser.nominal_x[:n], axis=1)))


def minimum_clearance(log: RunLog) -> float:
    ids = log.arm_ids
    if len(ids) < 2:
        raise ValueError("minimum clearance needs at least two arms")
    best = math.inf
    for i in range(len(ids)):
        for j in range(i + 1, len(ids)):
            d = np.linalg.norm(log.arms[ids[i]].x - log.arms[ids[j]].x, axis=1)
            best = min(best, float(d.min()))
    return best


def _yield_targets(arm: ArmConfig, arms: Sequence[ArmConfig]) -> list[int]:
    """Indices of the arms this arm slows down for."""
    c = arm.coupling
    if not c.enabled:
        return []
    if c.partner is not None:
        return [k for k, a in enumerate(arms) if a.id == c.partner]
    return [k for k, a in enumerate(arms) if a.id != arm.id and a.coupling.priority < c.priority]


def run(scenario: Scenario, order: Optional[Sequence[int]] = None) -> RunLog:
    scenario.validate()
    arms = list(scenario.arms)
    n_arms = len(arms)
    order = list(range(n_arms)) if order is None else list(order)
    if sorted(order) != list(range(n_arms)):
        raise ValueError("order must be a permutation of the arm indices")
    dt = scenario.dt
    max_ticks = n_ticks(scenario.max_duration, dt)

    frames = [a.frame for a in arms]
    static_norm = [[normalize_obstacle(f, ob) for ob in scenario.static_obstacles] for f in frames]
    targets = [_yield_targets(a, arms) for a in arms]
    obstacle_names = [
        [f"static-{k}" for k in range(len(scenario.static_obstacles))] + [b.id for b in arms if b.id != a.id]
        for a in arms
    ]

    states: list[DmpState] = [initial_state(a.model) for a in arms]
    rows = [dict(x=[], v=[], s=[], alpha_s=[], c=[], force=[]) for _ in arms]
    events: list[Event] = []
    reached = [False] * n_arms
    violating = [False] * n_arms
    stalled_ticks = 0
    deadlock_ticks = n_ticks(scenario.deadlock_window, dt)
    coupled = [i for i in range(n_arms) if arms[i].coupling.enabled]
    tick = 0
    while True:
        time = tick * dt
        xs = [st.x for st in states]
        vs = [st.z / a.model.tau for st, a in zip(states, arms)]
        forces: list = [None] * n_arms
        rates: list = [None] * n_arms
        cvals: list = [None] * n_arms
        for i in order:
            arm = arms[i]
            fr = frames[i]
            obs = list(static_norm[i])
            for j in range(n_arms):
                if j != i:
                    r = arm.ee_radius + arms[j].ee_radius
                    obs.append(normalize_obstacle(fr, EllipsoidObstacle.sphere(xs[j], r, vs[j])))
            xn = normalize_point(fr, xs[i])
            cvals[i] = [isopotential(ob, xn) for ob in obs]
            fn = total_field_force(arm.field_params, obs, xn, normalize_vector(fr, vs[i]))
            forces[i] = rescale_vector(fr, fn)
            if targets[i]:
                rates[i] = phase_rate_nearest(arm.coupling, xs[i], [xs[j] for j in targets[i]])
            else:
                rates[i] = arm.model.gains.alpha_s_hat

        for i in range(n_arms):
            rw = rows[i]
            rw["x"].append(xs[i])
            rw["v"].append(vs[i])
            rw["s"].append(states[i].s)
            rw["alpha_s"].append(rates[i])
            rw["c"].append(cvals[i])
            rw["force"].append(forces[i])
            bad = bool(cvals[i]) and min(cvals[i]) <= 1.0
            if bad and not violating[i]:
                k = int(np.argmin(cvals[i]))
                events.append(Event(time, "constraint_violation", arms[i].id,
                                    f"C={cvals[i][k]:.6g} against {obstacle_names[i][k]}"))
            violating[i] = bad
            if not reached[i]:
                err = float(np.linalg.norm(xs[i] - arms[i].model.goal))
                if err < scenario.goal_tolerance and states[i].s < scenario.phase_tolerance:
                    reached[i] = True
                    events.append(Event(time, "goal_reached", arms[i].id, f"goal error {err:.3g} m"))

        if all(reached) or tick >= max_ticks:
            break
        active = [i for i in coupled if not reached[i]]
        if active and all(rates[i] < scenario.deadlock_rate for i in active):
            stalled_ticks += 1
            if stalled_ticks > deadlock_ticks:
                events.append(Event(time, "deadlock", None,
                                    "coupled arms stalled: " + ", ".join(arms[i].id for i in active)))
                break
        else:
            stalled_ticks = 0

        new_states = list(states)
        diverged = None
        for i in order:
            try:
                nxt = step(arms[i].model, states[i], dt, forces[i], rates[i])
            except IntegrationError:
                diverged = i
                break
            if not (np.all(np.isfinite(nxt.x)) and np.all(np.isfinite(nxt.z))):
                diverged = i
                break
            new_states[i] = nxt
        if diverged is not None:
            events.append(Event(time + dt, "divergence", arms[diverged].id, "non-finite state"))
            break
        states = new_states
        tick += 1

    n = tick + 1
    series = {}
    for i, arm in enumerate(arms):
        nominal = rollout(arm.model, dt, max(n - 1, 1) * dt)
        rw = rows[i]
        series[arm.id] = ArmSeries(
            x=np.array(rw["x"]), v=np.array(rw["v"]), s=np.array(rw["s"]),
            alpha_s=np.array(rw["alpha_s"]),
            c=np.array(rw["c"], dtype=float).reshape(n, len(obstacle_names[i])),
            force=np.array(rw["force"]), obstacle_names=obstacle_names[i],
            nominal_x=nominal.x, nominal_s=nominal.s, ee_radius=arm.ee_radius,
        )
    return RunLog(dt, np.arange(n) * dt, series, events, scenario.name)
