"""Demonstration library, the segment-matching MDP and a tabular Q-learner.

A task is a sequence of critical configurations ``x_0 .. x_K``.  The MDP
state is a cursor into that sequence; an action picks a demonstration,
which consumes ``min(N_id, K - cursor)`` configurations, where ``N_id`` is
the number of featurized critical configurations in the demonstration.
Rewards are negated semantic-similarity sums, so 0 is the best possible.
"""
from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .dualquat import FeaturizedTrajectory, Pose, featurize, semantic_similarity

REWARD_MODES = ("paper", "aligned")
STATE_KEYS = ("task", "feature")


class PlanningError(RuntimeError):
    pass


@dataclass(frozen=True, eq=False)
class Demonstration:
    """A demonstrated skill: dense poses plus the indices of its critical configurations.

    ``critical`` defaults to every pose.  The featurization (and therefore
    N_id) is computed from the critical poses only.
    """

    id: str
    poses: tuple
    duration: float
    critical: Optional[tuple] = None
    featurize_mode: str = "paper"
    featurized: FeaturizedTrajectory = field(init=False, repr=False)

    def __post_init__(self):
        poses = tuple(self.poses)
        if len(poses) < 2:
            raise ValueError(f"demonstration {self.id!r} needs at least 2 poses")
        if not self.duration > 0:
            raise ValueError(f"demonstration {self.id!r} needs a positive duration")
        crit = tuple(range(len(poses))) if self.critical is None else tuple(int(i) for i in self.critical)
        if len(crit) < 2 or list(crit) != sorted(set(crit)) or crit[0] < 0 or crit[-1] >= len(poses):
            raise ValueError(f"demonstration {self.id!r}: critical indices must be >= 2 increasing valid indices")
        object.__setattr__(self, "poses", poses)
        object.__setattr__(self, "critical", crit)
        object.__setattr__(self, "featurized", featurize([poses[i] for i in crit], self.featurize_mode))

    @property
    def n_configs(self) -> int:
        return len(self.featurized)

    @property
    def sample_dt(self) -> float:
        return self.duration / (len(self.poses) - 1)


def _pose_digest(poses: Sequence[Pose]) -> str:
    h = hashlib.sha1()
    for p in poses:
        h.update(repr((p.translation, p.rotation.to_list())).encode())
    return h.hexdigest()[:16]


@dataclass(frozen=True, eq=False)
class TaskSpec:
    robot_id: str
    critical_configurations: tuple
    featurize_mode: str = "paper"
    featurized: FeaturizedTrajectory = field(init=False, repr=False)
    key: str = field(init=False)

    def __post_init__(self):
        confs = tuple(self.critical_configurations)
        if len(confs) < 2:
            raise ValueError(f"task for {self.robot_id!r} needs at least 2 critical configurations")
        object.__setattr__(self, "critical_configurations", confs)
        object.__setattr__(self, "featurized", featurize(confs, self.featurize_mode))
        object.__setattr__(self, "key", _pose_digest(confs))

    @property
    def K(self) -> int:
        return len(self.critical_configurations) - 1

    def to_dict(self) -> dict:
        return {"robot_id": self.robot_id,
                "critical_configurations": [p.to_dict() for p in self.critical_configurations]}

    @classmethod
    def from_dict(cls, d: dict, featurize_mode: str = "paper") -> "TaskSpec":
        return cls(str(d["robot_id"]), tuple(Pose.from_dict(p) for p in d["critical_configurations"]),
                   featurize_mode)


@dataclass(frozen=True)
class MdpState:
    cursor: int
    task: TaskSpec

    def __post_init__(self):
        if not 0 <= self.cursor <= self.task.K:
            raise ValueError(f"cursor {self.cursor} outside [0, {self.task.K}]")

    @property
    def terminal(self) -> bool:
        return self.cursor >= self.task.K


def reward(state: MdpState, demo: Demonstration, mode: str = "paper", dual_weight: float = 0.0) -> float:
    """Negated similarity sum between the remaining task segment and a demonstration.

    ``paper``: all pairs of remaining task configurations and demonstration
    configurations.  ``aligned``: task configuration ``cursor + l`` against
    demonstration configuration ``l`` for the configurations consumed.
    """
    if state.terminal:
        raise ValueError("no reward from a terminal state")
    if demo.n_configs == 0:
        raise ValueError(f"demonstration {demo.id!r} is empty")
    task_f = state.task.featurized
    t = state.cursor
    total = 0.0
    if mode == "paper":
        for j in range(t, len(task_f)):
            for d in demo.featurized:
                total += semantic_similarity(task_f[j], d, dual_weight)
    elif mode == "aligned":
        for l in range(min(demo.n_configs, state.task.K - t)):
            total += semantic_similarity(task_f[t + l], demo.featurized[l], dual_weight)
    else:
        raise ValueError(f"unknown reward mode {mode!r}")
    return -total


def transition(state: MdpState, demo: Demonstration) -> MdpState:
    if state.terminal:
        raise ValueError("cannot act from a terminal state")
    return MdpState(state.cursor + min(demo.n_configs, state.task.K - state.cursor), state.task)


@dataclass
class QAgent:
    value_table: dict = field(default_factory=dict)
    epsilon: float = 1.0
    learning_rate: float = 0.1
    discount: float = 0.95
    epsilon_start: float = 1.0
    epsilon_end: float = 0.05
    reward_mode: str = "paper"
    state_key: str = "task"
    dual_weight: float = 0.0

    def __post_init__(self):
        if not 0.0 <= self.epsilon <= 1.0:
            raise ValueError("epsilon must be in [0, 1]")
        if not 0.0 <= self.discount <= 1.0:
            raise ValueError("discount must be in [0, 1]")
        if self.reward_mode not in REWARD_MODES:
            raise ValueError(f"reward_mode must be one of {REWARD_MODES}")
        if self.state_key not in STATE_KEYS:
            raise ValueError(f"state_key must be one of {STATE_KEYS}")

    def key(self, state: MdpState) -> str:
        if self.state_key == "task":
            return f"{state.task.key}:{state.cursor}"
        # generalizing key: remaining length + quantized next featurized rotation
        q = state.task.featurized[state.cursor].delta.real
        comps = ",".join(f"{round(c, 1) + 0.0:.1f}" for c in q.to_list())
        return f"f:{state.task.K - state.cursor}:{comps}"

    def q(self, state_key: str, demo_id: str) -> float:
        return self.value_table.get(f"{state_key}|{demo_id}", 0.0)

    def knows(self, state_key: str, library: Sequence[Demonstration]) -> bool:
        return any(f"{state_key}|{d.id}" in self.value_table for d in library)

    def greedy_index(self, state_key: str, library: Sequence[Demonstration]) -> int:
        values = [self.q(state_key, d.id) for d in library]
        return int(np.argmax(values))

    def hyperparameters(self) -> dict:
        return {"epsilon": self.epsilon, "learning_rate": self.learning_rate, "discount": self.discount,
                "epsilon_start": self.epsilon_start, "epsilon_end": self.epsilon_end,
                "reward_mode": self.reward_mode, "state_key": self.state_key, "dual_weight": self.dual_weight}

    def to_dict(self) -> dict:
        return {"hyperparameters": self.hyperparameters(),
                "value_table": {k: self.value_table[k] for k in sorted(self.value_table)}}

    @classmethod
    def from_dict(cls, d: dict) -> "QAgent":
        return cls(value_table={str(k): float(v) for k, v in d["value_table"].items()}, **d["hyperparameters"])

    def copy(self) -> "QAgent":
        return QAgent(dict(self.value_table), **self.hyperparameters())


class RewardCache:
    """Rewards are deterministic, so each (task, cursor, demo) is evaluated once."""

    def __init__(self, agent: QAgent):
        self.mode, self.dual_weight = agent.reward_mode, agent.dual_weight
        self._cache: dict = {}

    def __call__(self, state: MdpState, demo_index: int, demo: Demonstration) -> float:
        k = (state.task.key, state.cursor, demo_index)
        r = self._cache.get(k)
        if r is None:
            r = self._cache[k] = reward(state, demo, self.mode, self.dual_weight)
        return r


def train(agent: QAgent, library: Sequence[Demonstration], tasks: Sequence[TaskSpec],
          episodes: int, seed: int = 0) -> QAgent:
    """Epsilon-greedy Q-learning; epsilon anneals linearly from start to end over the episodes."""
    library = list(library)
    if not library:
        raise ValueError("demonstration library is empty")
    if not tasks:
        raise ValueError("no tasks to train on")
    agent = agent.copy()
    if episodes <= 0:
        return agent
    rng = np.random.default_rng(seed)
    rewards = RewardCache(agent)
    table = agent.value_table
    n_actions = len(library)
    for e in range(episodes):
        frac = e / (episodes - 1) if episodes > 1 else 1.0
        agent.epsilon = agent.epsilon_start + (agent.epsilon_end - agent.epsilon_start) * frac
        task = tasks[int(rng.integers(len(tasks)))]
        state = MdpState(0, task)
        while not state.terminal:
            key = agent.key(state)
            if rng.random() < agent.epsilon:
                a = int(rng.integers(n_actions))
            else:
                a = agent.greedy_index(key, library)
            demo = library[a]
            r = rewards(state, a, demo)
            nxt = transition(state, demo)
            target = r
            if not nxt.terminal:
                nkey = agent.key(nxt)
                target += agent.discount * max(agent.q(nkey, d.id) for d in library)
            entry = f"{key}|{demo.id}"
            old = table.get(entry, 0.0)
            table[entry] = old + agent.learning_rate * (target - old)
            state = nxt
    return agent


@dataclass
class PlannedTrajectory:
    robot_id: str
    segments: list  # [(demo id, (first pose index, last pose index))]
    poses: tuple
    times: np.ndarray
    quality: float = 0.0
    goal_error: float = 0.0

    @property
    def duration(self) -> float:
        return float(self.times[-1])

    def positions(self) -> np.ndarray:
        return np.array([p.translation for p in self.poses])

    def to_dict(self) -> dict:
        return {
            "robot_id": self.robot_id,
            "segments": [{"demo": d, "range": list(r)} for d, r in self.segments],
            "poses": [p.to_dict() for p in self.poses],
            "times": self.times.tolist(),
            "quality": self.quality,
            "goal_error": self.goal_error,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "PlannedTrajectory":
        return cls(
            robot_id=str(d["robot_id"]),
            segments=[(s["demo"], tuple(s["range"])) for s in d["segments"]],
            poses=tuple(Pose.from_dict(p) for p in d["poses"]),
            times=np.array(d["times"], dtype=float),
            quality=float(d.get("quality", 0.0)),
            goal_error=float(d.get("goal_error", 0.0)),
        )


def greedy_actions(agent: QAgent, library: Sequence[Demonstration], task: TaskSpec) -> list[int]:
    """Greedy demo indices from cursor 0 to terminal.

    States absent from the value table fall back to the best immediate reward.
    """
    library = list(library)
    rewards = RewardCache(agent)
    state = MdpState(0, task)
    actions: list[int] = []
    while not state.terminal:
        if len(actions) > task.K:
            raise PlanningError(f"policy made no progress at cursor {state.cursor} of task {task.robot_id!r}")
        key = agent.key(state)
        if agent.knows(key, library):
            a = agent.greedy_index(key, library)
        else:
            a = int(np.argmax([rewards(state, i, d) for i, d in enumerate(library)]))
        nxt = transition(state, library[a])
        if nxt.cursor <= state.cursor:
            raise PlanningError(f"policy stuck at cursor {state.cursor} of task {task.robot_id!r}")
        actions.append(a)
        state = nxt
    return actions


def sequence_return(library: Sequence[Demonstration], task: TaskSpec, actions: Sequence[int],
                    mode: str = "paper", dual_weight: float = 0.0, discount: float = 1.0) -> float:
    state = MdpState(0, task)
    total, k = 0.0, 0
    for a in actions:
        total += discount**k * reward(state, library[a], mode, dual_weight)
        state = transition(state, library[a])
        k += 1
    return total


def plan(agent: QAgent, library: Sequence[Demonstration], task: TaskSpec) -> PlannedTrajectory:
    """Stitch the greedy demonstration sequence into one reference trajectory.

    The first segment is translated to start at the task's first
    configuration; each later segment is translated to start where the
    previous one ended, so joints are continuous.  Rotations are kept.
    """
    library = list(library)
    actions = greedy_actions(agent, library, task)
    poses: list[Pose] = []
    times: list[float] = []
    segments = []
    sims = []
    state = MdpState(0, task)
    anchor = np.array(task.critical_configurations[0].translation)
    t_offset = 0.0
    for a in actions:
        demo = library[a]
        n = min(demo.n_configs, task.K - state.cursor)
        i0, i1 = demo.critical[0], demo.critical[n]
        for l in range(n):
            sims.append(semantic_similarity(task.featurized[state.cursor + l], demo.featurized[l]))
        offset = anchor - np.array(demo.poses[i0].translation)
        seg = [demo.poses[i].translated(offset) for i in range(i0, i1 + 1)]
        seg_t = [t_offset + (i - i0) * demo.sample_dt for i in range(i0, i1 + 1)]
        if poses:
            seg, seg_t = seg[1:], seg_t[1:]  # shared joint
        poses.extend(seg)
        times.extend(seg_t)
        segments.append((demo.id, (i0, i1)))
        anchor = np.array(poses[-1].translation)
        t_offset = times[-1]
        state = transition(state, demo)
    goal = np.array(task.critical_configurations[-1].translation)
    return PlannedTrajectory(
        robot_id=task.robot_id,
        segments=segments,
        poses=tuple(poses),
        times=np.array(times),
        quality=float(np.mean(sims)) if sims else 0.0,
        goal_error=float(np.linalg.norm(anchor - goal)),
    )


def plan_all(agent: QAgent, library: Sequence[Demonstration], tasks: Sequence[TaskSpec]) -> dict:
    """One shared agent, independent plans per robot."""
    return {task.robot_id: plan(agent, library, task) for task in tasks}
