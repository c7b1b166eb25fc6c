import json

import numpy as np
import pytest

from oncoldmp import files
from oncoldmp.cli import bundled_scenario
from oncoldmp.config import Config, load_config
from oncoldmp.demos import minjerk, to_poses
from oncoldmp.dualquat import Pose
from oncoldmp.files import FileFormatError
from oncoldmp.planner import PlannedTrajectory, TaskSpec


def _arm(id="a", **extra):
    doc = {"id": id, "planned": {"generate": {"kind": "line", "waypoints": [[0, 0, 0], [0.5, 0, 0]],
                                              "duration": 1.0}}}
    doc.update(extra)
    return doc


def _write(path, doc):
    path.write_text(json.dumps(doc))
    return path


@pytest.mark.parametrize("name", ["crossing", "stacking", "three-arm-stacking"])
def test_bundled_scenarios_load(name):
    sc = files.load_scenario(bundled_scenario(name))
    assert sc.name == name and len(sc.arms) >= 2
    assert sum(a.coupling.enabled for a in sc.arms) == len(sc.arms) - 1


def test_scenario_validation_errors(tmp_path):
    with pytest.raises(FileFormatError, match="no arms"):
        files.load_scenario(_write(tmp_path / "e.scenario", {"arms": []}))
    with pytest.raises(FileFormatError, match="unknown fields"):
        files.load_scenario(_write(tmp_path / "u.scenario", {"arms": [_arm()], "speed": 2}))
    with pytest.raises(FileFormatError, match="unknown fields"):
        files.load_scenario(_write(tmp_path / "ua.scenario", {"arms": [_arm(colour="red")]}))
    with pytest.raises(FileFormatError, match="planned"):
        files.load_scenario(_write(tmp_path / "p.scenario", {"arms": [{"id": "a"}]}))
    with pytest.raises(FileFormatError, match="duplicate"):
        files.load_scenario(_write(tmp_path / "d.scenario", {"arms": [_arm(), _arm()]}))
    with pytest.raises(FileFormatError, match="no such file"):
        files.load_scenario(tmp_path / "missing.scenario")
    with pytest.raises(FileFormatError, match="frame"):
        files.load_scenario(_write(tmp_path / "f.scenario", {"arms": [_arm(frame="polar")]}))


def test_planned_forms_agree(tmp_path):
    X = minjerk([[0, 0, 0], [0.5, 0.1, 0]], 1.0, 0.01)
    p = PlannedTrajectory("a", [("x", (0, 100))], tuple(to_poses(X)), np.linspace(0, 1, 101))
    files.write_plans(tmp_path / "plan.json", {"a": p})
    gen = {"generate": {"kind": "minjerk", "waypoints": [[0, 0, 0], [0.5, 0.1, 0]], "duration": 1.0}}
    refs = []
    for planned in ("plan.json", p.to_dict(), gen):
        sc = files.scenario_from_dict({"arms": [{"id": "a", "planned": planned}]}, tmp_path)
        refs.append(sc.arms[0].reference)
    for r in refs[1:]:
        np.testing.assert_allclose(r, refs[0], atol=1e-12)


def test_trajectory_round_trip_and_index(tmp_path):
    poses = to_poses(minjerk([[0, 0, 0], [1, 0, 0]], 1.0, 0.1))
    files.write_trajectory(tmp_path / "m.json", "m", poses)
    files.add_to_index(tmp_path, "m", "m.json", 1.0, [0, 10])
    files.add_to_index(tmp_path, "m", "m.json", 1.0, [0, 5, 10])  # replaces
    assert files.read_index(tmp_path) == [{"id": "m", "file": "m.json", "duration": 1.0, "critical": [0, 5, 10]}]
    lib = files.load_library(tmp_path)
    assert lib[0].n_configs == 2
    name, back = files.read_trajectory(tmp_path / "m.json")
    assert name == "m" and [p.to_dict() for p in back] == [p.to_dict() for p in poses]


def test_empty_library_is_an_error(tmp_path):
    _write(tmp_path / "index.json", {"demos": []})
    with pytest.raises(FileFormatError, match="empty"):
        files.load_library(tmp_path)
    with pytest.raises(FileFormatError, match="not found"):
        files.load_library(tmp_path / "nope")


def test_tasks_and_plans_round_trip(tmp_path):
    tasks = [TaskSpec("a", (Pose((0, 0, 0)), Pose((1, 0, 0)))), TaskSpec("b", (Pose((0, 1, 0)), Pose((1, 1, 0))))]
    files.write_tasks(tmp_path / "t.json", tasks)
    back = files.read_tasks(tmp_path / "t.json")
    assert [t.to_dict() for t in back] == [t.to_dict() for t in tasks]
    _write(tmp_path / "bad.json", {"tasks": [{"robot_id": "a"}]})
    with pytest.raises(FileFormatError, match="bad.json"):
        files.read_tasks(tmp_path / "bad.json")


def test_run_csv_layout(tmp_path):
    from oncoldmp.sim import run
    log = run(files.load_scenario(bundled_scenario("crossing")))
    out = files.write_run(tmp_path, log, {"mode": "ONCol-DMP"})
    data = files.read_run_csv(out / "arm-2.csv")
    assert list(data) == files.CSV_HEADER
    assert len(data["tick"]) == len(log.t)
    assert np.array_equal(data["x"], log.arms["arm-2"].x[:, 0])
    s = files.read_summary(out)
    assert s["mode"] == "ONCol-DMP" and s["ticks"] == len(log.t)
    assert s["metrics"]["arm-1"]["max_deviation"] == log.metrics()["arm-1"]["max_deviation"]


def test_config_loading(tmp_path):
    assert load_config(None) == Config()
    cfg = load_config(_write(tmp_path / "c.json", {"episodes": 10, "dual_weight": 1}))
    assert cfg.episodes == 10 and cfg.dual_weight == 1.0
    with pytest.raises(ValueError, match="unknown config keys"):
        load_config(_write(tmp_path / "x.json", {"episode": 10}))
    with pytest.raises(ValueError, match="no such"):
        load_config(tmp_path / "none.json")
