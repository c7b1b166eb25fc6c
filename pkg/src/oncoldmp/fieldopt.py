"""Choose field gains (lambda, beta, eta) by simulating the perturbed DMP.

The cost adds the squared deviation from the reference to the total
variation of the squared speed; sample times where the rollout touches or
enters an obstacle (``C(x) <= 1``) are constraint violations.  The search
runs in the normalized frame of the reference, with a quadratic exterior
penalty, and the winner is re-simulated without penalty to confirm
feasibility.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy.optimize import minimize

from .dmp import DmpModel, IntegrationError, Rollout, rollout
from .field import EllipsoidObstacle, FieldParams, isopotential, total_field_force
from .normalize import (
    NormalizationFrame,
    frame_from_trajectory,
    normalize_obstacle,
    normalize_points,
    normalize_point,
)

SNAP_QUANTUM = 2.0**-36
DEFAULT_BOUNDS = {"lambda": (1e-2, 1e3), "beta": (1.1, 16.0), "eta": (0.1, 8.0)}


@dataclass(frozen=True)
class OptimizerConfig:
    lambda_p: float = 0.1
    mass: float = 1.0
    dt: float = 0.01
    penalty_weight: float = 1e3
    max_evals: int = 500
    initial_params: FieldParams = FieldParams()
    bounds: dict = field(default_factory=lambda: dict(DEFAULT_BOUNDS))
    initial_step: float = 1.0  # simplex edge in log-parameter space
    seed: int = 0

    def __post_init__(self):
        if self.lambda_p < 0 or not self.mass > 0 or not self.penalty_weight > 0:
            raise ValueError("need lambda_p >= 0, mass > 0, penalty_weight > 0")
        if self.max_evals < 1:
            raise ValueError("max_evals must be >= 1")
        for name in ("lambda", "beta", "eta"):
            lo, hi = self.bounds[name]
            if not 0 < lo <= hi:
                raise ValueError(f"bounds for {name} must satisfy 0 < lo <= hi, got {(lo, hi)}")
        if not self.bounds["beta"][0] > 1:
            raise ValueError("beta lower bound must exceed 1")

    def log_bounds(self) -> np.ndarray:
        return np.log(np.array([self.bounds[k] for k in ("lambda", "beta", "eta")], dtype=float))


@dataclass
class Evaluation:
    cost: float
    violations: int
    penalty: float
    rollout: Optional[Rollout]
    min_c: float


@dataclass
class OptimizationResult:
    params: FieldParams
    objective: float
    constraint_violations: int
    evaluations: int
    converged: bool
    frame: Optional[NormalizationFrame] = None
    history: list = field(default_factory=list)  # best feasible objective after each evaluation
    verification: Optional[Rollout] = None  # in the normalized frame
    min_c: float = math.inf

    def to_dict(self) -> dict:
        return {
            "params": self.params.to_dict(),
            "objective": self.objective,
            "constraint_violations": self.constraint_violations,
            "evaluations": self.evaluations,
            "converged": self.converged,
            "min_C": self.min_c,
        }


def evaluate(params: FieldParams, reference, model: DmpModel,
             obstacles: Sequence[EllipsoidObstacle], config: OptimizerConfig) -> Evaluation:
    X_r = np.asarray(reference, dtype=float)
    n = X_r.shape[0]
    if n < 2:
        raise ValueError("reference needs at least 2 samples")
    dt = config.dt
    obstacles = list(obstacles)

    def perturb(x, v, s):
        return total_field_force(params, obstacles, x, v)

    try:
        with np.errstate(over="ignore", invalid="ignore"):
            ro = rollout(model, dt, (n - 1) * dt, perturb if obstacles else None)
    except (IntegrationError, FloatingPointError, OverflowError):
        return Evaluation(math.inf, n, math.inf, None, -math.inf)
    if not (np.all(np.isfinite(ro.x)) and np.all(np.isfinite(ro.z))):
        return Evaluation(math.inf, n, math.inf, ro, -math.inf)

    deviation = float(np.sum((ro.x - X_r) ** 2) * dt)
    speed2 = np.sum(ro.v**2, axis=1)
    energy = 0.5 * config.lambda_p * config.mass * float(np.sum(np.abs(np.diff(speed2))) * dt)
    violations, penalty, min_c = 0, 0.0, math.inf
    if obstacles:
        cs = np.array([[isopotential(ob, x) for ob in obstacles] for x in ro.x])
        f_cc = 1.0 - cs
        violations = int(np.count_nonzero(np.any(f_cc >= 0.0, axis=1)))
        penalty = float(np.sum(np.maximum(0.0, f_cc) ** 2))
        min_c = float(cs.min())
    return Evaluation(deviation + energy, violations, penalty, ro, min_c)


def objective(params: FieldParams, reference, model: DmpModel,
              obstacles: Sequence[EllipsoidObstacle], config: OptimizerConfig) -> tuple[float, int]:
    ev = evaluate(params, reference, model, obstacles, config)
    return ev.cost, ev.violations


def normalize_model(frame: NormalizationFrame, model: DmpModel) -> DmpModel:
    """The same DMP expressed in the normalized frame; exact because the system is linear."""
    return DmpModel(
        model.gains,
        model.basis,
        frame.rotation @ model.weights / frame.scale,
        normalize_point(frame, model.start),
        normalize_point(frame, model.goal),
        model.degenerate,
    )


def _snap(a, quantum: float = SNAP_QUANTUM) -> np.ndarray:
    a = np.asarray(a, dtype=float)
    # quantum relative to the array's magnitude (power of two, so scaling is exact)
    peak = float(np.max(np.abs(a))) if a.size else 0.0
    if peak > 1.0:
        quantum *= 2.0 ** math.ceil(math.log2(peak))
    return np.round(a / quantum) * quantum


def snap_problem(reference, model: DmpModel, obstacles: Sequence[EllipsoidObstacle]):
    """Round normalized inputs onto a fixed grid.

    Nelder-Mead amplifies last-bit differences, so the same geometry at two
    scales would otherwise drift apart; after snapping both are bit-identical.
    """
    m = DmpModel(model.gains, model.basis, _snap(model.weights), _snap(model.start), _snap(model.goal),
                 model.degenerate)
    obs = [EllipsoidObstacle(_snap(o.center), _snap(o.radii), _snap(o.velocity)) for o in obstacles]
    return _snap(reference), m, obs


def _clip_params(u: np.ndarray, log_bounds: np.ndarray) -> FieldParams:
    u = np.clip(u, log_bounds[:, 0], log_bounds[:, 1])
    lam, beta, eta = np.exp(u)
    return FieldParams(float(lam), float(max(beta, 1.0 + 1e-12)), float(eta))


def _search(reference, model, obstacles, config: OptimizerConfig):
    lb = config.log_bounds()
    evaluations = 0
    best_feasible: Optional[tuple[float, FieldParams]] = None
    best_any: Optional[tuple[float, FieldParams]] = None
    history: list = []

    class _Budget(Exception):
        pass

    def f(u):
        nonlocal evaluations, best_feasible, best_any
        if evaluations >= config.max_evals:
            raise _Budget
        p = _clip_params(np.asarray(u, float), lb)
        ev = evaluate(p, reference, model, obstacles, config)
        evaluations += 1
        penalized = ev.cost + config.penalty_weight * ev.penalty
        if not math.isfinite(penalized):
            penalized = 1e300
        if ev.violations == 0 and math.isfinite(ev.cost):
            if best_feasible is None or ev.cost < best_feasible[0]:
                best_feasible = (ev.cost, p)
        if best_any is None or penalized < best_any[0]:
            best_any = (penalized, p)
        history.append(best_feasible[0] if best_feasible else math.inf)
        return penalized

    u0 = np.clip(np.log(config.initial_params.as_array()), lb[:, 0], lb[:, 1])
    simplex = [u0]
    for k in range(3):
        u = u0.copy()
        # step inwards when the start sits on the upper bound
        u[k] = u[k] + config.initial_step if u[k] + config.initial_step <= lb[k, 1] else u[k] - config.initial_step
        simplex.append(np.clip(u, lb[:, 0], lb[:, 1]))
    try:
        minimize(
            f, u0, method="Nelder-Mead", bounds=list(map(tuple, lb)),
            options={"initial_simplex": np.array(simplex), "maxfev": config.max_evals,
                     "xatol": 1e-3, "fatol": 1e-9, "adaptive": False},
        )
    except _Budget:
        pass
    return best_feasible, best_any, evaluations, history


def optimize(reference, model: DmpModel, obstacles: Sequence[EllipsoidObstacle],
             config: OptimizerConfig = OptimizerConfig(), normalized: bool = False) -> OptimizationResult:
    """Optimize field gains for one reference trajectory and obstacle set.

    ``reference`` must be sampled at ``config.dt`` and ``model`` fitted to it.
    Unless ``normalized`` is set, both are mapped into the reference's
    normalized frame first (the obstacles too) and the returned gains apply
    in that frame.
    """
    X = np.asarray(reference, dtype=float)
    frame = None
    obstacles = list(obstacles)
    if not normalized:
        frame = frame_from_trajectory(X)
        X = normalize_points(frame, X)
        model = normalize_model(frame, model)
        obstacles = [normalize_obstacle(frame, ob) for ob in obstacles]
        X, model, obstacles = snap_problem(X, model, obstacles)

    best_feasible, best_any, evaluations, history = _search(X, model, obstacles, config)
    chosen = best_feasible[1] if best_feasible is not None else best_any[1]
    check = evaluate(chosen, X, model, obstacles, config)
    return OptimizationResult(
        params=chosen,
        objective=check.cost,
        constraint_violations=check.violations,
        evaluations=evaluations,
        converged=check.violations == 0 and math.isfinite(check.cost),
        frame=frame,
        history=history,
        verification=check.rollout,
        min_c=check.min_c,
    )
