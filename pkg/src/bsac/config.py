"""Flat ``key = value`` experiment configs.

Recognised keys are the :class:`TrainConfig` fields, the
:class:`~bsac.agent.AgentConfig` fields, and ``env.<param>`` for environment
parameters.  Anything else is rejected.  Example::

    env = chain-reacher
    env.k = 2
    bsn = reacher2-chain.bsn      # or: flat
    total_steps = 20000
    seeds = 0,1,2
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

from .agent import AgentConfig
from .errors import ConfigError

_TRAIN_KEYS = {
    "name": str,
    "env": str,
    "bsn": str,
    "total_steps": int,
    "eval_every": int,
    "eval_episodes": int,
    "seeds": "intlist",
    "out_dir": str,
    "threshold": float,
    "stop_at_threshold": bool,
}


def _parse_bool(v: str) -> bool:
    low = v.strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ConfigError(f"not a boolean: {v!r}")


def _parse_scalar(v: str):
    """Best-effort literal for environment parameters."""
    v = v.strip()
    if "," in v:
        return [_parse_scalar(x) for x in v.split(",")]
    for conv in (int, float):
        try:
            return conv(v)
        except ValueError:
            pass
    return v


def _agent_types():
    return {
        "alpha": float, "gamma": float, "tau": float, "actor_lr": float,
        "critic_lr": float, "alpha_lr": float, "batch_size": int,
        "warmup_steps": int, "update_every": int, "auto_alpha": bool,
        "target_entropy": "optfloat", "hidden_sizes": "intlist", "activation": str,
        "critic": str, "buffer_capacity": int, "log_std_min": float, "log_std_max": float,
    }


def _convert(key: str, kind, raw: str):
    try:
        if kind is bool:
            return _parse_bool(raw)
        if kind == "intlist":
            return tuple(int(x) for x in raw.split(",") if x.strip())
        if kind == "optfloat":
            return None if raw.strip().lower() in ("", "none", "auto") else float(raw)
        if kind is int:
            return int(float(raw)) if "e" in raw.lower() else int(raw)
        return kind(raw)
    except ValueError as e:
        raise ConfigError(f"bad value for {key!r}: {raw!r} ({e})") from None


@dataclass
class TrainConfig:
    env: str
    env_params: dict[str, Any] = field(default_factory=dict)
    bsn: str = "flat"
    agent: AgentConfig = field(default_factory=AgentConfig)
    total_steps: int = 100_000
    eval_every: int = 5000
    eval_episodes: int = 10
    seeds: tuple[int, ...] = (0,)
    out_dir: str = "runs"
    threshold: float | None = None
    stop_at_threshold: bool = False
    name: str = ""
    base_dir: str = "."  # where relative bsn paths resolve; not part of the hash

    def __post_init__(self):
        if self.total_steps <= self.agent.warmup_steps:
            raise ConfigError("total_steps must exceed warmup_steps")
        if not self.seeds:
            raise ConfigError("seed list must be non-empty")
        if self.eval_every < 1 or self.eval_episodes < 1:
            raise ConfigError("eval_every and eval_episodes must be >= 1")
        if self.stop_at_threshold and self.threshold is None:
            raise ConfigError("stop_at_threshold needs a threshold")

    @property
    def is_flat(self) -> bool:
        return self.bsn == "flat"

    @property
    def label(self) -> str:
        if self.name:
            return self.name
        return f"{self.env}-{'sac' if self.is_flat else Path(self.bsn).stem}"

    def bsn_path(self) -> Path:
        p = Path(self.bsn)
        if not p.is_absolute() and (Path(self.base_dir) / p).exists():
            return Path(self.base_dir) / p
        return p

    def semantic_dict(self) -> dict:
        """Everything that determines the numbers a run produces, except the seed."""
        return {
            "env": self.env,
            "env_params": self.env_params,
            "bsn": self.bsn if self.is_flat else self._bsn_fingerprint(),
            "agent": self.agent.to_dict(),
            "total_steps": self.total_steps,
            "eval_every": self.eval_every,
            "eval_episodes": self.eval_episodes,
            "threshold": self.threshold,
            "stop_at_threshold": self.stop_at_threshold,
        }

    def _bsn_fingerprint(self) -> str:
        from .bsn import load_bsn

        try:
            return load_bsn(self.bsn_path()).to_text()
        except FileNotFoundError:
            return self.bsn

    def config_hash(self) -> str:
        blob = json.dumps(self.semantic_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()

    def to_text(self) -> str:
        lines = [f"env = {self.env}"]
        for k, v in sorted(self.env_params.items()):
            lines.append(f"env.{k} = {','.join(map(str, v)) if isinstance(v, list) else v}")
        lines.append(f"bsn = {self.bsn}")
        for k, v in self.agent.to_dict().items():
            if k == "hidden_sizes":
                v = ",".join(map(str, v))
            lines.append(f"{k} = {'none' if v is None else v}")
        lines += [
            f"total_steps = {self.total_steps}",
            f"eval_every = {self.eval_every}",
            f"eval_episodes = {self.eval_episodes}",
            f"seeds = {','.join(map(str, self.seeds))}",
            f"out_dir = {self.out_dir}",
        ]
        if self.threshold is not None:
            lines.append(f"threshold = {self.threshold}")
        lines.append(f"stop_at_threshold = {self.stop_at_threshold}")
        if self.name:
            lines.append(f"name = {self.name}")
        return "\n".join(lines) + "\n"


def parse_config(text: str, base_dir: str = ".") -> TrainConfig:
    agent_types = _agent_types()
    train: dict[str, Any] = {}
    agent: dict[str, Any] = {}
    env_params: dict[str, Any] = {}
    seen: set[str] = set()
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {raw!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        if key in seen:
            raise ConfigError(f"line {lineno}: duplicate key {key!r}")
        seen.add(key)
        if key.startswith("env."):
            env_params[key[4:]] = _parse_scalar(value)
        elif key in _TRAIN_KEYS:
            train[key] = _convert(key, _TRAIN_KEYS[key], value)
        elif key in agent_types:
            agent[key] = _convert(key, agent_types[key], value)
        else:
            raise ConfigError(f"line {lineno}: unknown config key {key!r}")
    if "env" not in train:
        raise ConfigError("config must set 'env'")
    return TrainConfig(env_params=env_params, agent=AgentConfig(**agent), base_dir=base_dir, **train)


def load_config(path) -> TrainConfig:
    p = Path(path)
    return parse_config(p.read_text(encoding="utf-8"), base_dir=str(p.parent))
