"""Tunables shared by the CLI commands, optionally loaded from a JSON file."""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, fields
from pathlib import Path
from typing import Optional


@dataclass
class Config:
    dt: float = 0.01
    # planner
    episodes: int = 2000
    learning_rate: float = 0.1
    discount: float = 0.95
    epsilon_start: float = 1.0
    epsilon_end: float = 0.05
    reward_mode: str = "paper"
    state_key: str = "task"
    dual_weight: float = 0.0
    featurize_mode: str = "paper"
    # field optimizer
    max_evals: int = 300
    lambda_p: float = 0.1
    mass: float = 1.0
    penalty_weight: float = 1e3

    def to_dict(self) -> dict:
        return asdict(self)


def load_config(path: Optional[str]) -> Config:
    if path is None:
        return Config()
    p = Path(path)
    try:
        doc = json.loads(p.read_text())
    except FileNotFoundError as exc:
        raise ValueError(f"{p}: no such config file") from exc
    except json.JSONDecodeError as exc:
        raise ValueError(f"{p}: invalid JSON ({exc})") from exc
    known = {f.name: f.type for f in fields(Config)}
    unknown = set(doc) - set(known)
    if unknown:
        raise ValueError(f"{p}: unknown config keys {sorted(unknown)}")
    base = Config()
    for k, v in doc.items():
        setattr(base, k, type(getattr(base, k))(v))
    return base
