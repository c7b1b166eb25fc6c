"""Command-line pipeline: demo-gen -> train -> plan -> optimize-field -> run -> report.

Outputs default into a project root with ``demos/``, ``agents/``,
``scenarios/`` and ``runs/`` subdirectories, created on demand.  Run
directories are timestamped and never overwritten.
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
import time
from importlib import resources
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from . import files
from .config import Config, load_config
from .demos import KINDS, generate, knot_indices, to_poses
from .field import EllipsoidObstacle, FieldParams, isopotential
from .fieldopt import OptimizerConfig, optimize
from .normalize import rescale_points
from .planner import QAgent, greedy_actions, plan_all, sequence_return, train
from .sim import run

log = logging.getLogger("oncoldmp")

BUNDLED = ("crossing", "stacking", "three-arm-stacking")


class CliError(Exception):
    pass


def _layout(root) -> Path:
    root = Path(root)
    for sub in ("demos", "agents", "scenarios", "runs"):
        (root / sub).mkdir(parents=True, exist_ok=True)
    return root


def bundled_scenario(name: str) -> Path:
    if name.endswith(".scenario"):
        name = name[: -len(".scenario")]
    ref = resources.files("oncoldmp") / "data" / "scenarios" / f"{name}.scenario"
    return Path(str(ref))


def resolve_scenario(arg: str) -> Path:
    p = Path(arg)
    if p.exists():
        return p
    b = bundled_scenario(arg)
    if b.exists():
        return b
    raise CliError(f"{arg}: no such scenario file (bundled: {', '.join(BUNDLED)})")


def parse_waypoints(text: str) -> np.ndarray:
    """JSON (``[[0,0,0],[1,0,0]]`` or ``[0,1]``) or ``x,y,z;x,y,z``."""
    text = text.strip()
    try:
        if text.startswith("["):
            W = np.array(json.loads(text), dtype=float)
        else:
            W = np.array([[float(v) for v in row.split(",")] for row in text.split(";") if row.strip()])
    except (ValueError, json.JSONDecodeError) as exc:
        raise ValueError(f"cannot parse waypoints {text!r}") from exc
    if W.ndim == 1:
        W = W[:, None]
    if W.ndim != 2 or W.shape[0] < 2 or W.shape[1] > 3:
        raise ValueError("need at least 2 waypoints of dimension 1 to 3")
    return W


def run_dir(root: Path, name: str) -> Path:
    stamp = time.strftime("%Y%m%d-%H%M%S")
    base = root / "runs" / f"{stamp}-{name}"
    out, k = base, 1
    while out.exists():
        out = base.with_name(f"{base.name}-{k}")
        k += 1
    return out


# commands ----------------------------------------------------------------

def cmd_demo_gen(args, cfg: Config, parser) -> int:
    try:
        W = parse_waypoints(args.waypoints)
    except ValueError as exc:
        parser.error(str(exc))
    if not args.duration > 0:
        parser.error("duration must be > 0")
    dt = args.duration / args.samples if args.samples else cfg.dt
    options = {}
    if args.lift is not None:
        options["lift"] = args.lift
    try:
        X = generate(args.kind, W, args.duration, dt, **options)
    except ValueError as exc:
        parser.error(str(exc))
    name = args.name or Path(args.out).stem if args.out else args.name or args.kind
    out = Path(args.out) if args.out else _layout(args.root) / "demos" / f"{name}.json"
    files.write_trajectory(out, name, to_poses(X))
    critical = knot_indices(args.kind, W, args.duration, dt)
    if args.critical:
        critical = [int(v) for v in args.critical.split(",")]
        if any(not 0 <= c < len(X) for c in critical):
            parser.error(f"critical indices must lie in [0, {len(X) - 1}]")
    if not args.no_index:
        files.add_to_index(out.parent, name, out.name, float(args.duration), critical)
    print(f"wrote {out} ({len(X)} poses)")
    return 0


def _agent_from_config(cfg: Config) -> QAgent:
    return QAgent(epsilon=cfg.epsilon_start, learning_rate=cfg.learning_rate, discount=cfg.discount,
                  epsilon_start=cfg.epsilon_start, epsilon_end=cfg.epsilon_end, reward_mode=cfg.reward_mode,
                  state_key=cfg.state_key, dual_weight=cfg.dual_weight)


def cmd_train(args, cfg: Config, parser) -> int:
    library = files.load_library(args.library, cfg.featurize_mode)
    tasks = files.read_tasks(args.tasks, cfg.featurize_mode)
    episodes = cfg.episodes if args.episodes is None else args.episodes
    agent = train(_agent_from_config(cfg), library, tasks, episodes, args.seed)
    out = Path(args.out) if args.out else _layout(args.root) / "agents" / "agent.json"
    files.write_agent(out, agent)
    for task in tasks:
        acts = greedy_actions(agent, library, task)
        ret = sequence_return(library, task, acts, agent.reward_mode, agent.dual_weight)
        print(f"{task.robot_id}: greedy reward {ret:.6g} via {[library[a].id for a in acts]}")
    print(f"wrote {out}")
    return 0


def cmd_plan(args, cfg: Config, parser) -> int:
    agent = files.read_agent(args.agent)
    library = files.load_library(args.library, cfg.featurize_mode)
    tasks = files.read_tasks(args.tasks, cfg.featurize_mode)
    plans = plan_all(agent, library, tasks)
    out = Path(args.out) if args.out else _layout(args.root) / "agents" / "plan.json"
    files.write_plans(out, plans)
    for rid, p in plans.items():
        print(f"{rid}: {[s[0] for s in p.segments]} duration {p.duration:.3g} s, goal error {p.goal_error:.3g} m")
    print(f"wrote {out}")
    return 0


def _closest_point_obstacles(scenario, arm_index: int) -> list:
    """Other arms as static spheres where their reference passes closest to this arm's reference."""
    me = scenario.arms[arm_index]
    out = []
    for j, other in enumerate(scenario.arms):
        if j == arm_index:
            continue
        D = np.linalg.norm(me.reference[:, None, :] - other.reference[None, :, :], axis=2)
        _, b = np.unravel_index(np.argmin(D), D.shape)
        out.append(EllipsoidObstacle.sphere(other.reference[b], me.ee_radius + other.ee_radius))
    return out


def cmd_optimize_field(args, cfg: Config, parser) -> int:
    path = resolve_scenario(args.scenario)
    plans = files.read_plans(args.plan) if args.plan else {}
    sc = files.load_scenario(path, plans=plans)
    ids = [a.id for a in sc.arms]
    arm_ids = args.arm or [a for a in ids if a in plans] or ids
    out_dir = Path(args.out) if args.out else _layout(args.root) / "scenarios"
    out_dir.mkdir(parents=True, exist_ok=True)
    for arm_id in arm_ids:
        if arm_id not in ids:
            raise CliError(f"{path}: no arm {arm_id!r}")
        k = ids.index(arm_id)
        arm = sc.arms[k]
        obstacles = list(sc.static_obstacles) + _closest_point_obstacles(sc, k)
        oc = OptimizerConfig(lambda_p=cfg.lambda_p, mass=cfg.mass, dt=sc.dt, penalty_weight=cfg.penalty_weight,
                             max_evals=cfg.max_evals, initial_params=arm.field_params, seed=args.seed)
        res = optimize(arm.reference, arm.model, obstacles, oc)
        doc = {"arm": arm_id, **res.to_dict()}
        target = out_dir / f"{arm_id}.params.json"
        files._save(target, doc)
        X = rescale_points(res.frame, res.verification.x) if res.verification is not None else np.zeros((0, 3))
        with open(out_dir / f"{arm_id}.verification.csv", "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["tick", "time", "x", "y", "z", "s", "min_C"])
            for i, x in enumerate(X):
                c = min((isopotential(ob, x) for ob in obstacles), default=float("inf"))
                w.writerow([i, repr(i * sc.dt), *map(repr, map(float, x)), repr(float(res.verification.s[i])), repr(c)])
        p = res.params
        print(f"{arm_id}: lambda={p.lam:.4g} beta={p.beta:.4g} eta={p.eta:.4g} objective={res.objective:.4g} "
              f"violations={res.constraint_violations} evaluations={res.evaluations} converged={res.converged}")
        print(f"wrote {target}")
    return 0


def _read_params(paths: Sequence[str]) -> dict:
    out = {}
    for p in paths or []:
        doc = files._load(p)
        if not isinstance(doc, dict) or "arm" not in doc or "params" not in doc:
            raise CliError(f"{p}: params document needs 'arm' and 'params'")
        try:
            out[str(doc["arm"])] = FieldParams.from_dict(doc["params"])
        except (KeyError, TypeError, ValueError) as exc:
            raise CliError(f"{p}: bad params ({exc})") from exc
    return out


def cmd_run(args, cfg: Config, parser) -> int:
    path = resolve_scenario(args.scenario)
    plans = {}
    for p in args.plan or []:
        plans.update(files.read_plans(p))
    params = _read_params(args.params)
    coupling = False if args.no_coupling else None
    sc = files.load_scenario(path, plans=plans, params=params, coupling_enabled=coupling)
    t0 = time.perf_counter()
    result = run(sc)
    elapsed = time.perf_counter() - t0
    label = "ONCol-DMP" if any(a.coupling.enabled for a in sc.arms) else "DMP"
    out = Path(args.out) if args.out else run_dir(_layout(args.root), f"{sc.name}-{label}")
    if out.exists() and any(out.iterdir()):
        raise CliError(f"{out}: run directory exists and is not empty")
    files.write_run(out, result, {
        "mode": label,
        "coupling": {a.id: a.coupling.to_dict() for a in sc.arms},
        "field_params": {a.id: a.field_params.to_dict() for a in sc.arms},
        "scenario_file": str(path),
    })
    _print_run(result.metrics(), result.events)
    log.info("simulated %d ticks in %.2f s", len(result.t), elapsed)
    print(f"wrote {out}")
    return 0


def _print_run(metrics: dict, events) -> None:
    for arm_id, m in metrics.items():
        if arm_id == "minimum_clearance":
            continue
        ct = m["completion_time"]
        print(f"{arm_id}: max deviation {m['max_deviation']:.4f} m, "
              f"completion {'-' if ct is None else f'{ct:.2f} s'}, min C {m['min_C']}")
    if "minimum_clearance" in metrics:
        print(f"minimum clearance {metrics['minimum_clearance']:.4f} m")
    for e in events:
        e = e if isinstance(e, dict) else e.to_dict()
        print(f"  t={e['time']:.2f} {e['kind']} {e['arm'] or ''} {e['detail']}")


def deviation_table(summaries: Sequence[dict]) -> str:
    arms = sorted({a for s in summaries for a in s["metrics"] if a != "minimum_clearance"})
    head = "mode".ljust(12) + "".join(a.rjust(10) for a in arms)
    lines = ["Max. deviation of arms (m)", head]
    for s in summaries:
        row = s.get("mode", "?").ljust(12)
        for a in arms:
            m = s["metrics"].get(a)
            row += (f"{m['max_deviation']:.4f}" if m else "-").rjust(10)
        lines.append(row)
    return "\n".join(lines)


def cmd_report(args, cfg: Config, parser) -> int:
    summaries = [files.read_summary(d) for d in args.runs]
    if len(summaries) == 1:
        s = summaries[0]
        print(f"scenario {s['scenario']} ({s.get('mode', '?')}), {s['ticks']} ticks")
        _print_run(s["metrics"], s["events"])
    else:
        # plain DMP row first
        summaries.sort(key=lambda s: s.get("mode") != "DMP")
        print(deviation_table(summaries))
    return 0


# parser ------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=argparse.SUPPRESS, help="random seed (default 0)")
    common.add_argument("--config", default=argparse.SUPPRESS, help="JSON file of tunables")
    common.add_argument("--root", default=argparse.SUPPRESS, help="project root (default: current directory)")
    common.add_argument("-v", "--verbose", action="store_true", default=argparse.SUPPRESS)

    p = argparse.ArgumentParser(prog="oncoldmp", description=__doc__.splitlines()[0], parents=[common])
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("demo-gen", parents=[common], help="synthesize a demonstration trajectory")
    g.add_argument("kind", choices=KINDS)
    g.add_argument("--waypoints", required=True, help="'x,y,z;x,y,z' or JSON list")
    g.add_argument("--duration", type=float, default=1.0)
    g.add_argument("--samples", type=int, help="number of intervals (default: duration / dt)")
    g.add_argument("--lift", type=float, help="lift height for lift-place")
    g.add_argument("--critical", help="comma-separated critical pose indices (default: the waypoint samples)")
    g.add_argument("--name")
    g.add_argument("--no-index", action="store_true", help="do not register in the directory's index.json")
    g.add_argument("--out", help="trajectory file (default: <root>/demos/<name>.json)")
    g.set_defaults(func=cmd_demo_gen)

    t = sub.add_parser("train", parents=[common], help="train the skill-sequencing agent")
    t.add_argument("library")
    t.add_argument("tasks")
    t.add_argument("--episodes", type=int)
    t.add_argument("--out")
    t.set_defaults(func=cmd_train)

    pl = sub.add_parser("plan", parents=[common], help="plan reference trajectories for tasks")
    pl.add_argument("agent")
    pl.add_argument("library")
    pl.add_argument("tasks")
    pl.add_argument("--out")
    pl.set_defaults(func=cmd_plan)

    o = sub.add_parser("optimize-field", parents=[common], help="optimize field gains per arm")
    o.add_argument("scenario", help="scenario file or bundled name")
    o.add_argument("plan", nargs="?", help="plan file overriding the scenario's references")
    o.add_argument("--arm", action="append", help="arm id (repeatable; default: planned arms)")
    o.add_argument("--out", help="output directory (default: <root>/scenarios)")
    o.set_defaults(func=cmd_optimize_field)

    r = sub.add_parser("run", parents=[common], help="simulate a scenario")
    r.add_argument("scenario", help="scenario file or bundled name")
    r.add_argument("--plan", action="append", help="plan file overriding arm references (repeatable)")
    r.add_argument("--params", action="append", help="optimized params document (repeatable)")
    r.add_argument("--no-coupling", action="store_true", help="disable phase coupling on every arm")
    r.add_argument("--out", help="run directory (default: <root>/runs/<timestamp>-<name>)")
    r.set_defaults(func=cmd_run)

    rep = sub.add_parser("report", parents=[common], help="summarize one run or compare several")
    rep.add_argument("runs", nargs="+")
    rep.set_defaults(func=cmd_report)
    return p


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    for k, v in (("seed", 0), ("config", None), ("root", "."), ("verbose", False)):
        if not hasattr(args, k):
            setattr(args, k, v)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load_config(args.config)
        return args.func(args, cfg, parser)
    except (CliError, files.FileFormatError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
