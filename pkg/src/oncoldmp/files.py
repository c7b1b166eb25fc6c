"""Reading and writing the on-disk documents (all JSON).

Trajectory:  ``{"name": str, "poses": [{"t": [x, y, z], "r": [w, x, y, z]}, ...]}``
Library:     a directory of trajectory files plus ``index.json`` listing
             ``{"id", "file", "duration", "critical"?}`` per demonstration.
Scenario:    arms, static obstacles, dt, max_duration, seed.
Run:         one CSV per arm, one nominal-reference CSV per arm, ``summary.json``.
"""
from __future__ import annotations

import csv
import json
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .collab import PhaseCoupling
from .demos import generate, to_poses
from .dmp import DmpGains, DmpModel
from .dualquat import Pose
from .field import EllipsoidObstacle, FieldParams
from .planner import Demonstration, PlannedTrajectory, QAgent, TaskSpec
from .sim import DEFAULT_EE_RADIUS, ArmConfig, RunLog, Scenario, arm_from_plan

CSV_HEADER = ["tick", "time", "x", "y", "z", "vx", "vy", "vz", "s", "alpha_s", "min_C", "fx", "fy", "fz"]
NOMINAL_HEADER = ["tick", "time", "x", "y", "z", "s"]
INDEX_NAME = "index.json"


class FileFormatError(ValueError):
    """A document is missing, malformed or has unexpected fields; the message names the file."""


def _load(path) -> object:
    path = Path(path)
    try:
        with open(path) as fh:
            return json.load(fh)
    except FileNotFoundError as exc:
        raise FileFormatError(f"{path}: no such file") from exc
    except json.JSONDecodeError as exc:
        raise FileFormatError(f"{path}: invalid JSON ({exc})") from exc


def dumps(doc) -> str:
    return json.dumps(doc, indent=1, sort_keys=False, allow_nan=True) + "\n"


def _save(path, doc) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(dumps(doc))
    return path


def _check_fields(doc, allowed: set, required: set, where: str):
    if not isinstance(doc, dict):
        raise FileFormatError(f"{where}: expected an object")
    unknown = set(doc) - allowed
    if unknown:
        raise FileFormatError(f"{where}: unknown fields {sorted(unknown)}")
    missing = required - set(doc)
    if missing:
        raise FileFormatError(f"{where}: missing fields {sorted(missing)}")


# trajectories ------------------------------------------------------------

def trajectory_to_dict(name: str, poses: Sequence[Pose]) -> dict:
    return {"name": name, "poses": [p.to_dict() for p in poses]}


def trajectory_from_dict(doc, where: str = "trajectory") -> tuple[str, list[Pose]]:
    _check_fields(doc, {"name", "poses"}, {"name", "poses"}, where)
    try:
        poses = [Pose.from_dict(p) for p in doc["poses"]]
    except (ValueError, TypeError) as exc:
        raise FileFormatError(f"{where}: bad pose ({exc})") from exc
    return str(doc["name"]), poses


def write_trajectory(path, name: str, poses: Sequence[Pose]) -> Path:
    return _save(path, trajectory_to_dict(name, poses))


def read_trajectory(path) -> tuple[str, list[Pose]]:
    return trajectory_from_dict(_load(path), str(path))


# demonstration library ---------------------------------------------------

def read_index(directory) -> list[dict]:
    path = Path(directory) / INDEX_NAME
    doc = _load(path)
    _check_fields(doc, {"demos"}, {"demos"}, str(path))
    entries = doc["demos"]
    for e in entries:
        _check_fields(e, {"id", "file", "duration", "critical"}, {"id", "file", "duration"}, f"{path} entry")
    return entries


def add_to_index(directory, demo_id: str, file: str, duration: float, critical=None) -> Path:
    """Insert or replace an index entry, keeping entries sorted by id."""
    path = Path(directory) / INDEX_NAME
    entries = read_index(directory) if path.exists() else []
    entries = [e for e in entries if e["id"] != demo_id]
    e = {"id": demo_id, "file": file, "duration": duration}
    if critical is not None:
        e["critical"] = [int(i) for i in critical]
    entries.append(e)
    entries.sort(key=lambda e: e["id"])
    return _save(path, {"demos": entries})


def load_library(directory, featurize_mode: str = "paper") -> list[Demonstration]:
    directory = Path(directory)
    if not directory.is_dir():
        raise FileFormatError(f"{directory}: library directory not found")
    demos = []
    for e in read_index(directory):
        _, poses = read_trajectory(directory / e["file"])
        try:
            demos.append(Demonstration(str(e["id"]), tuple(poses), float(e["duration"]),
                                       e.get("critical"), featurize_mode))
        except ValueError as exc:
            raise FileFormatError(f"{directory / e['file']}: {exc}") from exc
    if not demos:
        raise FileFormatError(f"{directory}: library is empty")
    return demos


# tasks, agents, plans ----------------------------------------------------

def read_tasks(path, featurize_mode: str = "paper") -> list[TaskSpec]:
    doc = _load(path)
    items = doc["tasks"] if isinstance(doc, dict) and "tasks" in doc else [doc]
    try:
        return [TaskSpec.from_dict(d, featurize_mode) for d in items]
    except (KeyError, TypeError, ValueError) as exc:
        raise FileFormatError(f"{path}: bad task spec ({exc})") from exc


def write_tasks(path, tasks: Sequence[TaskSpec]) -> Path:
    return _save(path, {"tasks": [t.to_dict() for t in tasks]})


def write_agent(path, agent: QAgent) -> Path:
    return _save(path, agent.to_dict())


def read_agent(path) -> QAgent:
    doc = _load(path)
    try:
        return QAgent.from_dict(doc)
    except (KeyError, TypeError, ValueError) as exc:
        raise FileFormatError(f"{path}: bad agent document ({exc})") from exc


def write_plans(path, plans: dict) -> Path:
    """A single plan is written as a bare PlannedTrajectory document."""
    if len(plans) == 1:
        return _save(path, next(iter(plans.values())).to_dict())
    return _save(path, {"plans": [p.to_dict() for p in plans.values()]})


def read_plans(path) -> dict:
    doc = _load(path)
    items = doc["plans"] if isinstance(doc, dict) and "plans" in doc else [doc]
    try:
        plans = [PlannedTrajectory.from_dict(d) for d in items]
    except (KeyError, TypeError, ValueError) as exc:
        raise FileFormatError(f"{path}: bad plan document ({exc})") from exc
    return {p.robot_id: p for p in plans}


# DMP models --------------------------------------------------------------

def model_to_text(model: DmpModel) -> str:
    return dumps(model.to_dict())


def model_from_text(text: str) -> DmpModel:
    return DmpModel.from_dict(json.loads(text))


# scenarios ---------------------------------------------------------------

SCENARIO_FIELDS = {"name", "arms", "static_obstacles", "dt", "max_duration", "seed",
                   "goal_tolerance", "phase_tolerance", "deadlock_window", "deadlock_rate"}
ARM_FIELDS = {"id", "planned", "model", "field_params", "frame", "coupling", "ee_radius"}


def _planned(spec, arm_id: str, base: Path, dt: float) -> PlannedTrajectory:
    """``planned`` may be a plan-file path, a PlannedTrajectory document, or a generator spec."""
    if isinstance(spec, str):
        plans = read_plans(base / spec)
        if arm_id in plans:
            return plans[arm_id]
        if len(plans) == 1:
            return next(iter(plans.values()))
        raise FileFormatError(f"{base / spec}: no plan for arm {arm_id!r}")
    if isinstance(spec, dict) and "generate" in spec:
        g = dict(spec["generate"])
        _check_fields(g, {"kind", "waypoints", "duration", "options"}, {"kind", "waypoints", "duration"},
                      f"arm {arm_id!r} planned.generate")
        X = generate(g["kind"], g["waypoints"], float(g["duration"]), dt, **g.get("options", {}))
        poses = to_poses(X)
        times = np.arange(len(X)) * (float(g["duration"]) / (len(X) - 1))
        return PlannedTrajectory(arm_id, [("generated", (0, len(X) - 1))], tuple(poses), times)
    try:
        return PlannedTrajectory.from_dict(spec)
    except (KeyError, TypeError, ValueError) as exc:
        raise FileFormatError(f"arm {arm_id!r}: bad planned trajectory ({exc})") from exc


def arm_from_dict(doc: dict, base: Path, dt: float, plan_override: Optional[PlannedTrajectory] = None,
                  params_override: Optional[FieldParams] = None, coupling_enabled: Optional[bool] = None) -> ArmConfig:
    _check_fields(doc, ARM_FIELDS, {"id"}, f"arm {doc.get('id', '?')!r}")
    arm_id = str(doc["id"])
    if "frame" in doc and doc["frame"] not in ("bbox", "aligned"):
        raise FileFormatError(f"arm {arm_id!r}: frame must be 'bbox' or 'aligned'")
    coupling = PhaseCoupling.from_dict(doc.get("coupling", {}))
    if coupling_enabled is not None:
        coupling = PhaseCoupling(coupling.alpha_hat, coupling.epsilon_s, coupling_enabled,
                                 coupling.partner, coupling.priority)
    fp = params_override or FieldParams.from_dict(doc.get("field_params", FieldParams().to_dict()))
    planned = plan_override
    if planned is None:
        if "planned" not in doc:
            raise FileFormatError(f"arm {arm_id!r}: needs a 'planned' trajectory")
        planned = _planned(doc["planned"], arm_id, base, dt)
    gains = None
    if "model" in doc:
        g = doc["model"].get("gains", {}) if isinstance(doc["model"], dict) else {}
        gains = DmpGains(**g)
    return arm_from_plan(arm_id, planned, dt, gains=gains, field_params=fp, coupling=coupling,
                         ee_radius=float(doc.get("ee_radius", DEFAULT_EE_RADIUS)),
                         align=doc.get("frame", "bbox") == "aligned")


def scenario_from_dict(doc: dict, base=".", plans: Optional[dict] = None, params: Optional[dict] = None,
                       coupling_enabled: Optional[bool] = None, where: str = "scenario") -> Scenario:
    """Build a runnable Scenario; ``plans``/``params`` map arm ids to overrides."""
    _check_fields(doc, SCENARIO_FIELDS, {"arms"}, where)
    base = Path(base)
    dt = float(doc.get("dt", 0.01))
    plans, params = plans or {}, params or {}
    try:
        arms = [arm_from_dict(a, base, dt, plans.get(a.get("id")), params.get(a.get("id")), coupling_enabled)
                for a in doc["arms"]]
        obstacles = [EllipsoidObstacle.from_dict(o) for o in doc.get("static_obstacles", [])]
        sc = Scenario(arms=arms, static_obstacles=obstacles, dt=dt,
                      max_duration=float(doc.get("max_duration", 10.0)), seed=int(doc.get("seed", 0)),
                      name=str(doc.get("name", "scenario")))
    except FileFormatError:
        raise
    except (KeyError, TypeError, ValueError) as exc:
        raise FileFormatError(f"{where}: {exc}") from exc
    for k in ("goal_tolerance", "phase_tolerance", "deadlock_window", "deadlock_rate"):
        if k in doc:
            setattr(sc, k, float(doc[k]))
    try:
        sc.validate()
    except ValueError as exc:
        raise FileFormatError(f"{where}: {exc}") from exc
    return sc


def read_scenario_doc(path) -> dict:
    doc = _load(path)
    _check_fields(doc, SCENARIO_FIELDS, {"arms"}, str(path))
    return doc


def load_scenario(path, **overrides) -> Scenario:
    path = Path(path)
    return scenario_from_dict(read_scenario_doc(path), path.parent, where=str(path), **overrides)


# run logs ----------------------------------------------------------------

def _fmt(v: float) -> str:
    return repr(float(v))


def write_run(directory, log: RunLog, extra: Optional[dict] = None) -> Path:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    for arm_id, ser in log.arms.items():
        min_c = ser.min_c
        with open(directory / f"{arm_id}.csv", "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(CSV_HEADER)
            for k in range(len(ser.x)):
                w.writerow([k, _fmt(log.t[k]), *map(_fmt, ser.x[k]), *map(_fmt, ser.v[k]), _fmt(ser.s[k]),
                            _fmt(ser.alpha_s[k]), _fmt(min_c[k]), *map(_fmt, ser.force[k])])
        with open(directory / f"{arm_id}.nominal.csv", "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(NOMINAL_HEADER)
            for k in range(len(ser.nominal_x)):
                w.writerow([k, _fmt(k * log.dt), *map(_fmt, ser.nominal_x[k]), _fmt(ser.nominal_s[k])])
    summary = {
        "scenario": log.name,
        "dt": log.dt,
        "ticks": len(log.t),
        "arms": {a: {"ee_radius": s.ee_radius, "obstacles": s.obstacle_names} for a, s in log.arms.items()},
        "events": [e.to_dict() for e in log.events],
        "metrics": log.metrics(),
    }
    if extra:
        summary.update(extra)
    _save(directory / "summary.json", summary)
    return directory


def read_run_csv(path) -> dict:
    """Columns of a per-arm CSV as float arrays keyed by header name."""
    path = Path(path)
    if not path.exists():
        raise FileFormatError(f"{path}: no such file")
    with open(path, newline="") as fh:
        r = csv.reader(fh)
        header = next(r)
        rows = [[float(v) for v in row] for row in r]
    data = np.array(rows, dtype=float).reshape(len(rows), len(header))
    return {h: data[:, k] for k, h in enumerate(header)}


def read_summary(directory) -> dict:
    doc = _load(Path(directory) / "summary.json")
    if not isinstance(doc, dict) or "metrics" not in doc:
        raise FileFormatError(f"{directory}/summary.json: missing metrics")
    return doc
