import hashlib
import json
import time
from pathlib import Path

import numpy as np
import pytest

from oncoldmp import files
from oncoldmp.cli import bundled_scenario, main
from oncoldmp.dualquat import Pose
from oncoldmp.planner import TaskSpec

LANE_A = "-0.4,-0.09,0.3;0.4,0.09,0.3"
LANE_B = "-0.4,0.09,0.3;0.4,-0.09,0.3"


def _digest(root: Path) -> dict:
    return {str(p.relative_to(root)): hashlib.sha1(p.read_bytes()).hexdigest()
            for p in sorted(root.rglob("*")) if p.is_file()}


def test_demo_gen_line(tmp_path, capsys):
    out = tmp_path / "demos" / "l.json"
    rc = main(["demo-gen", "line", "--waypoints=0,0,0;1,0,0", "--duration", "1", "--samples", "100",
               "--out", str(out)])
    assert rc == 0
    name, poses = files.read_trajectory(out)
    X = np.array([p.translation for p in poses])
    assert name == "l" and len(X) == 101
    np.testing.assert_allclose(np.diff(X[:, 0]), 0.01, atol=1e-12)
    assert files.read_index(out.parent)[0]["critical"] == [0, 100]


def test_demo_gen_minjerk_1d(tmp_path):
    out = tmp_path / "mj.json"
    assert main(["demo-gen", "minjerk", "--waypoints=[0, 1]", "--duration", "1", "--samples", "1000",
                 "--no-index", "--out", str(out)]) == 0
    X = np.array([p.translation[0] for p in files.read_trajectory(out)[1]])
    assert X[500] == pytest.approx(0.5, abs=1e-12)
    assert np.gradient(X, 1e-3).max() == pytest.approx(1.875, rel=1e-5)
    assert not (tmp_path / "index.json").exists()


def test_demo_gen_single_waypoint_is_usage_error(tmp_path):
    with pytest.raises(SystemExit) as exc:
        main(["demo-gen", "line", "--waypoints=0,0,0", "--root", str(tmp_path)])
    assert exc.value.code == 2


def test_run_empty_scenario_fails(tmp_path, capsys):
    bad = tmp_path / "empty.scenario"
    bad.write_text(json.dumps({"name": "empty", "arms": []}))
    assert main(["run", str(bad), "--root", str(tmp_path)]) == 1
    err = capsys.readouterr().err
    assert "empty.scenario" in err and "no arms" in err


def test_missing_files_are_named(tmp_path, capsys):
    assert main(["run", str(tmp_path / "ghost.scenario")]) == 1
    assert "ghost.scenario" in capsys.readouterr().err
    assert main(["train", str(tmp_path / "lib"), str(tmp_path / "tasks.json")]) == 1
    assert "lib" in capsys.readouterr().err
    assert main(["report", str(tmp_path / "norun")]) == 1
    assert "summary.json" in capsys.readouterr().err


def test_train_empty_library_fails(tmp_path, capsys):
    (tmp_path / "lib").mkdir()
    (tmp_path / "lib" / "index.json").write_text('{"demos": []}')
    files.write_tasks(tmp_path / "t.json", [TaskSpec("a", (Pose((0, 0, 0)), Pose((1, 0, 0))))])
    assert main(["train", str(tmp_path / "lib"), str(tmp_path / "t.json")]) == 1
    assert "empty" in capsys.readouterr().err


def test_bundled_runs_are_never_overwritten(tmp_path):
    for _ in range(2):
        assert main(["run", "crossing", "--root", str(tmp_path)]) == 0
    runs = sorted((tmp_path / "runs").iterdir())
    assert len(runs) == 2 and all("-crossing-ONCol-DMP" in r.name for r in runs)
    out = runs[0]
    assert main(["run", "crossing", "--out", str(out)]) == 1


def test_report_puts_plain_dmp_first(tmp_path, capsys):
    assert main(["run", "crossing", "--out", str(tmp_path / "oncol")]) == 0
    assert main(["run", "crossing", "--no-coupling", "--out", str(tmp_path / "plain")]) == 0
    capsys.readouterr()
    assert main(["report", str(tmp_path / "oncol"), str(tmp_path / "plain")]) == 0
    lines = capsys.readouterr().out.strip().splitlines()
    assert lines[1].split() == ["mode", "arm-1", "arm-2"]
    assert lines[2].startswith("DMP") and lines[3].startswith("ONCol-DMP")
    plain, oncol = float(lines[2].split()[1]), float(lines[3].split()[1])
    assert oncol < plain
    assert main(["report", str(tmp_path / "oncol")]) == 0
    assert "minimum clearance" in capsys.readouterr().out


def test_full_pipeline(tmp_path, capsys):
    t0 = time.perf_counter()
    root = str(tmp_path)
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"dual_weight": 1.0, "reward_mode": "aligned", "featurize_mode": "conjugate",
                               "max_evals": 150, "episodes": 500}))
    common = ["--root", root, "--config", str(cfg), "--seed", "3"]
    for name, kind, wp, dur in (("lane-a", "minjerk", LANE_A, "2"), ("lane-b", "minjerk", LANE_B, "2"),
                                ("arc", "arc", "0,0,0.3;0.4,0,0.3", "2"), ("line", "line", "0,0,0;0.3,0.3,0", "1")):
        assert main(["demo-gen", kind, f"--waypoints={wp}", "--duration", dur, "--name", name, *common]) == 0
    tasks = [TaskSpec("arm-1", (Pose((-0.4, -0.09, 0.3)), Pose((0.4, 0.09, 0.3)))),
             TaskSpec("arm-2", (Pose((-0.4, 0.09, 0.3)), Pose((0.4, -0.09, 0.3))))]
    files.write_tasks(tmp_path / "tasks.json", tasks)
    before = _digest(tmp_path / "demos")

    lib, agent, plan = tmp_path / "demos", tmp_path / "agents" / "agent.json", tmp_path / "agents" / "plan.json"
    assert main(["train", str(lib), str(tmp_path / "tasks.json"), *common]) == 0
    first = agent.read_bytes()
    assert main(["train", str(lib), str(tmp_path / "tasks.json"), *common]) == 0
    assert agent.read_bytes() == first  # deterministic given the seed

    assert main(["plan", str(agent), str(lib), str(tmp_path / "tasks.json"), *common]) == 0
    plans = files.read_plans(plan)
    assert [s[0] for s in plans["arm-1"].segments] == ["lane-a"]
    assert [s[0] for s in plans["arm-2"].segments] == ["lane-b"]

    assert main(["optimize-field", "crossing", str(plan), *common]) == 0
    params = [str(tmp_path / "scenarios" / f"{a}.params.json") for a in ("arm-1", "arm-2")]
    for p in params:
        doc = json.loads(Path(p).read_text())
        assert set(doc) >= {"arm", "params", "objective", "evaluations", "converged"}
    assert (tmp_path / "scenarios" / "arm-1.verification.csv").exists()

    runs = tmp_path / "runs"
    # planned references with the scenario's own gains: coupling must cut arm-1's deviation
    for label, extra in (("plain", ["--no-coupling"]), ("oncol", [])):
        assert main(["run", "crossing", "--plan", str(plan), *extra, "--out", str(runs / label), *common]) == 0
    capsys.readouterr()
    assert main(["report", str(runs / "plain"), str(runs / "oncol")]) == 0
    rows = capsys.readouterr().out.strip().splitlines()
    plain, oncol = float(rows[2].split()[1]), float(rows[3].split()[1])
    assert oncol < plain

    # optimized gains: the coupled run must still stay collision-free
    opt = ["--plan", str(plan), "--params", params[0], "--params", params[1]]
    assert main(["run", "crossing", *opt, "--out", str(runs / "tuned"), *common]) == 0
    summary = files.read_summary(runs / "tuned")
    assert summary["field_params"]["arm-1"] == json.loads(Path(params[0]).read_text())["params"]
    assert not [e for e in summary["events"] if e["kind"] == "constraint_violation"]
    assert _digest(tmp_path / "demos") == before  # inputs untouched
    assert time.perf_counter() - t0 < 300


def test_bundled_scenario_lookup():
    assert bundled_scenario("crossing").exists()
    assert bundled_scenario("stacking.scenario").exists()
