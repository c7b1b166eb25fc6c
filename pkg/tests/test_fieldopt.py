import math

import numpy as np
import pytest

from oncoldmp.demos import minjerk
from oncoldmp.dmp import fit_lwr, rollout
from oncoldmp.field import EllipsoidObstacle, FieldParams
from oncoldmp.fieldopt import (
    OptimizerConfig,
    evaluate,
    normalize_model,
    objective,
    optimize,
    snap_problem,
)
from oncoldmp.normalize import frame_from_trajectory, normalize_obstacle, normalize_points

DT = 0.01


def _problem(scale=1.0):
    X = scale * minjerk([[0, 0, 0], [1, 0, 0]], 1.0, DT)
    return X, fit_lwr(X, DT)


def _oracle(ro_x, ro_v, X_r, obstacles, lambda_p, mass, dt):
    dev = 0.0
    for x, r in zip(ro_x, X_r):
        dev += float(np.dot(x - r, x - r)) * dt
    sp = [float(np.dot(v, v)) for v in ro_v]
    energy = 0.0
    for a, b in zip(sp[:-1], sp[1:]):
        energy += abs(b - a) * dt
    energy *= lambda_p * mass / 2
    bad = 0
    for x in ro_x:
        if any(sum(((x[k] - o.center[k]) / o.radii[k]) ** 2 for k in range(3)) <= 1 for o in obstacles):
            bad += 1
    return dev + energy, bad


def test_objective_matches_log_recomputation():
    X, m = _problem()
    obs = [EllipsoidObstacle([0.5, 0.0, 0.0], [0.1] * 3)]
    cfg = OptimizerConfig(lambda_p=0.3, mass=2.0)
    for p in (FieldParams(), FieldParams(0.05, 1.5, 0.5)):
        ev = evaluate(p, X, m, obs, cfg)
        cost, bad = _oracle(ev.rollout.x, ev.rollout.v, X, obs, 0.3, 2.0, DT)
        assert ev.cost == pytest.approx(cost, rel=1e-12)
        assert ev.violations == bad
    # weak field: the path runs straight through the sphere
    assert evaluate(FieldParams(0.05, 1.5, 0.5), X, m, obs, cfg).violations > 0


def test_inactive_field_has_no_deviation():
    X, m = _problem()
    behind = [EllipsoidObstacle([-0.5, 0.0, 0.0], [0.1] * 3)]
    cost, bad = objective(FieldParams(), X, m, behind, OptimizerConfig(lambda_p=0.0))
    assert bad == 0
    assert cost < 1e-6


def test_lambda_p_zero_is_pure_deviation():
    X, m = _problem()
    obs = [EllipsoidObstacle([0.5, 0.0, 0.0], [0.1] * 3)]
    ev = evaluate(FieldParams(), X, m, obs, OptimizerConfig(lambda_p=0.0))
    assert ev.cost == pytest.approx(float(np.sum((ev.rollout.x - X) ** 2) * DT), rel=1e-12)


def test_divergent_rollout_is_infeasible():
    X, m = _problem()
    obs = [EllipsoidObstacle([0.5, 0.0, 0.0], [0.1] * 3)]
    cost, bad = objective(FieldParams(1e300, 2.0, 8.0), X, m, obs, OptimizerConfig())
    assert cost == math.inf and bad > 0


def test_normalize_model_is_exact():
    X, m = _problem(3.0)
    X = X + [2.0, -1.0, 0.5]
    m = fit_lwr(X, DT)
    for align in (False, True):
        frame = frame_from_trajectory(X, align=align)
        world = rollout(m, DT, 1.0).x
        norm = rollout(normalize_model(frame, m), DT, 1.0).x
        np.testing.assert_allclose(norm, normalize_points(frame, world), atol=1e-12)


def test_snapping_makes_scaled_problems_identical():
    out = []
    for k in (1.0, 10.0):
        X, m = _problem(k)
        obs = [EllipsoidObstacle([0.5 * k, 0.0, 0.0], [0.1 * k] * 3)]
        frame = frame_from_trajectory(X)
        out.append(snap_problem(normalize_points(frame, X), normalize_model(frame, m),
                                [normalize_obstacle(frame, o) for o in obs]))
    (Xa, ma, oa), (Xb, mb, ob) = out
    assert np.array_equal(Xa, Xb)
    assert np.array_equal(ma.weights, mb.weights)
    assert np.array_equal(ma.start, mb.start) and np.array_equal(ma.goal, mb.goal)
    assert np.array_equal(oa[0].center, ob[0].center) and np.array_equal(oa[0].radii, ob[0].radii)


def test_far_obstacle_converges_near_free_objective():
    X, m = _problem()
    far = [EllipsoidObstacle([0.5, 50.0, 0.0], [0.1] * 3)]
    cfg = OptimizerConfig(max_evals=60)
    res = optimize(X, m, far, cfg)
    frame = frame_from_trajectory(X)
    free, _ = objective(res.params, normalize_points(frame, X), normalize_model(frame, m), [], cfg)
    assert res.converged and res.constraint_violations == 0
    assert res.evaluations <= 60
    # the distant field can only shave the speed-variation term slightly
    assert res.objective <= free + 1e-9
    assert res.objective == pytest.approx(free, rel=0.05)


def test_blocking_sphere_is_avoided_and_verified():
    X, m = _problem()
    obs = [EllipsoidObstacle([0.5, 0.0, 0.0], [0.1] * 3)]
    cfg = OptimizerConfig(max_evals=120)
    res = optimize(X, m, obs, cfg)
    assert res.converged
    # independent re-check of the verification rollout against the normalized obstacle
    o = normalize_obstacle(res.frame, obs[0])
    c = (((res.verification.x - o.center) / o.radii) ** 2).sum(axis=1)
    assert c.min() > 1.0
    assert res.min_c == pytest.approx(c.min(), rel=1e-8)  # optimizer sees the snapped obstacle
    lo = {k: v[0] for k, v in cfg.bounds.items()}
    hi = {k: v[1] for k, v in cfg.bounds.items()}
    for name, val in res.params.to_dict().items():
        assert lo[name] * (1 - 1e-12) <= val <= hi[name] * (1 + 1e-12)


def test_best_feasible_history_is_monotone_and_not_worse_than_start():
    X, m = _problem()
    obs = [EllipsoidObstacle([0.5, 0.0, 0.0], [0.1] * 3)]
    cfg = OptimizerConfig(max_evals=80)
    res = optimize(X, m, obs, cfg)
    h = np.array(res.history)
    assert len(h) == res.evaluations
    assert np.all(np.diff(h[np.isfinite(h)]) <= 0)
    frame = frame_from_trajectory(X)
    Xn, mn, on = snap_problem(normalize_points(frame, X), normalize_model(frame, m),
                              [normalize_obstacle(frame, o) for o in obs])
    start, bad = objective(cfg.initial_params, Xn, mn, on, cfg)
    if bad == 0:
        assert res.objective <= start


def test_budget_of_one_returns_initial_params():
    X, m = _problem()
    obs = [EllipsoidObstacle([0.5, 0.0, 0.0], [0.1] * 3)]
    init = FieldParams(10.0, 4.0, 1.0)
    res = optimize(X, m, obs, OptimizerConfig(max_evals=1, initial_params=init))
    assert res.evaluations == 1
    assert res.params.to_dict() == pytest.approx(init.to_dict(), rel=1e-12)
    assert res.converged == (res.constraint_violations == 0)


def test_start_inside_obstacle_reports_failure():
    X, m = _problem()
    on_start = [EllipsoidObstacle([0.0, 0.0, 0.0], [0.2] * 3)]
    res = optimize(X, m, on_start, OptimizerConfig(max_evals=40))
    assert not res.converged
    assert res.constraint_violations > 0


def test_optimize_is_deterministic():
    X, m = _problem()
    obs = [EllipsoidObstacle([0.5, 0.02, 0.0], [0.1] * 3)]
    a = optimize(X, m, obs, OptimizerConfig(max_evals=50))
    b = optimize(X, m, obs, OptimizerConfig(max_evals=50))
    assert a.to_dict() == b.to_dict()


def test_result_document_fields():
    X, m = _problem()
    res = optimize(X, m, [], OptimizerConfig(max_evals=5))
    assert set(res.to_dict()) == {"params", "objective", "constraint_violations", "evaluations",
                                  "converged", "min_C"}


@pytest.mark.parametrize("kw", [
    dict(lambda_p=-1.0),
    dict(mass=0.0),
    dict(penalty_weight=0.0),
    dict(max_evals=0),
    dict(bounds={"lambda": (1e-2, 1e3), "beta": (1.0, 16.0), "eta": (0.1, 8.0)}),
    dict(bounds={"lambda": (0.0, 1e3), "beta": (1.1, 16.0), "eta": (0.1, 8.0)}),
])
def test_config_validation(kw):
    with pytest.raises(ValueError):
        OptimizerConfig(**kw)


def test_reference_too_short():
    _, m = _problem()
    with pytest.raises(ValueError):
        evaluate(FieldParams(), np.zeros((1, 3)), m, [], OptimizerConfig())
