"""Seeded training runs, greedy evaluation and multi-config comparison.

Run directory layout (one per config hash and seed)::

    <out_dir>/<label>-<hash[:10]>/seed-<n>/
        config.cfg      resolved config
        metrics.csv     step,critic_loss,policy_loss,mean_q,joint_logprob,alpha,
                        eval_return_mean,eval_return_std
        checkpoint.npz  final agent
        record.json     summary, written last
        INCOMPLETE      present while the run is in progress or if it crashed
"""

from __future__ import annotations

import csv
import io
import json
import logging
import math
import os
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .agent import Agent, UpdateMetrics, make_buffer, to_env_action, train_step
from .bsn import load_bsn
from .checkpoint import load_agent, save_agent
from .config import TrainConfig
from .envs import Env, make_env
from .errors import ConfigError, UsageError
from .numerics import derive_seed, seeded_rng
from .sac import FlatSacAgent

log = logging.getLogger(__name__)

CSV_COLUMNS = [
    "step", "critic_loss", "policy_loss", "mean_q", "joint_logprob", "alpha",
    "eval_return_mean", "eval_return_std",
]
EVAL_SEED_OFFSET = 1_000_003
DATA_DIR = Path(__file__).parent / "data"  # shipped .bsn and .cfg files


@dataclass
class RunRecord:
    config_hash: str
    label: str
    env: str
    seed: int
    total_steps: int
    rows: list[dict] = field(default_factory=list)
    evals: list[tuple[int, float, float]] = field(default_factory=list)
    wall_clock: float = 0.0
    checkpoint: str = ""
    steps_run: int = 0
    complete: bool = False

    def to_json(self) -> dict:
        d = asdict(self)
        d.pop("rows")
        return d


def build_agent(config: TrainConfig, env: Env, rng: np.random.Generator):
    if config.is_flat:
        return FlatSacAgent.create(env.spec, config.agent, rng)
    graph = load_bsn(config.bsn_path())
    if graph.total_action_dim != env.spec.action_dim:
        raise ConfigError(
            f"strategy network {config.bsn!r} covers {graph.total_action_dim} action dims "
            f"but {config.env!r} has {env.spec.action_dim}"
        )
    return Agent.create(graph, env.spec, config.agent, rng)


def rollout_returns(agent, env: Env, episodes: int, seed: int) -> np.ndarray:
    """Greedy (mean-action) episode returns; episode seeds derive from ``seed``."""
    rng = seeded_rng(seed)
    out = np.empty(episodes)
    for i in range(episodes):
        state = env.reset(derive_seed(rng))
        total = 0.0
        while True:
            res = env.step(to_env_action(env.spec, agent.greedy(state)))
            total += res.reward
            if res.terminal or res.truncated:
                break
            state = res.next_state
        out[i] = total
    return out


def _fmt(v) -> str:
    if v is None or (isinstance(v, float) and math.isnan(v)):
        return ""
    return repr(float(v))


def _row(step: int, m: UpdateMetrics | None, ev: tuple[float, float] | None) -> dict:
    row = {"step": step}
    for k in CSV_COLUMNS[1:6]:
        row[k] = getattr(m, k) if m is not None else None
    row["eval_return_mean"], row["eval_return_std"] = ev if ev else (None, None)
    return row


def rows_to_csv(rows: Sequence[dict]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_COLUMNS)
    for r in rows:
        w.writerow([r["step"]] + [_fmt(r[k]) for k in CSV_COLUMNS[1:]])
    return buf.getvalue()


def run_dir(config: TrainConfig, seed: int, out_dir: str | None = None) -> Path:
    root = Path(out_dir or config.out_dir)
    return root / f"{config.label}-{config.config_hash()[:10]}" / f"seed-{seed}"


def run_seed(config: TrainConfig, seed: int, out_dir: str | None = None) -> RunRecord:
    """Train one seed to completion and persist its artifacts."""
    env = make_env(config.env, config.env_params, seed)
    eval_env = make_env(config.env, config.env_params, seed)
    rng = seeded_rng(seed)
    agent = build_agent(config, env, rng)
    buffer = make_buffer(env.spec, config.agent)

    d = run_dir(config, seed, out_dir)
    d.mkdir(parents=True, exist_ok=True)
    marker = d / "INCOMPLETE"
    marker.write_text("run in progress or crashed\n")
    (d / "record.json").unlink(missing_ok=True)
    (d / "config.cfg").write_text(config.to_text())

    rec = RunRecord(config.config_hash(), config.label, config.env, seed, config.total_steps)
    t0 = time.perf_counter()
    for step in range(1, config.total_steps + 1):
        metrics = train_step(agent, env, buffer, rng)
        ev = None
        if step % config.eval_every == 0 or step == config.total_steps:
            returns = rollout_returns(agent, eval_env, config.eval_episodes, seed + EVAL_SEED_OFFSET)
            ev = (float(returns.mean()), float(returns.std()))
            rec.evals.append((step, *ev))
            log.info("%s seed %d step %d: return %.3f +- %.3f", config.label, seed, step, *ev)
        if metrics is not None or ev is not None:
            rec.rows.append(_row(step, metrics, ev))
        rec.steps_run = step
        if ev and config.stop_at_threshold and ev[0] >= config.threshold:
            break
    rec.wall_clock = time.perf_counter() - t0

    (d / "metrics.csv").write_text(rows_to_csv(rec.rows))
    ckpt = save_agent(d / "checkpoint.npz", agent, config.env, config.env_params)
    rec.checkpoint = str(ckpt)
    rec.complete = True
    tmp = d / "record.json.tmp"
    tmp.write_text(json.dumps(rec.to_json(), indent=2))
    os.replace(tmp, d / "record.json")
    marker.unlink()
    return rec


def run(config: TrainConfig, out_dir: str | None = None, seeds: Sequence[int] | None = None):
    """Validate, then train every seed sequentially; returns one record per seed."""
    probe = make_env(config.env, config.env_params, 0)
    if not config.is_flat:
        graph = load_bsn(config.bsn_path())
        if graph.total_action_dim != probe.spec.action_dim:
            raise ConfigError(
                f"strategy network {config.bsn!r} covers {graph.total_action_dim} action dims "
                f"but {config.env!r} has {probe.spec.action_dim}"
            )
    return [run_seed(config, s, out_dir) for s in (seeds or config.seeds)]


def evaluate(checkpoint, episodes: int, seed: int, env: Env | None = None) -> tuple[float, float]:
    """Mean and population std of greedy returns for a saved agent."""
    agent, meta, _, _ = load_agent(checkpoint)
    if env is None:
        env = make_env(meta["env"]["name"], meta["env"]["params"], seed)
    pol_dim = agent.policy.action_dim
    state_dim = agent.critics.input_dim - pol_dim
    if env.spec.action_dim != pol_dim or env.spec.state_dim != state_dim:
        raise ConfigError(
            f"checkpoint expects state/action dims {state_dim}/{pol_dim}, "
            f"environment has {env.spec.state_dim}/{env.spec.action_dim}"
        )
    returns = rollout_returns(agent, env, episodes, seed)
    return float(returns.mean()), float(returns.std())


# -- comparison -------------------------------------------------------------


def load_record(run_path) -> RunRecord:
    p = Path(run_path)
    data = json.loads((p / "record.json").read_text())
    data["evals"] = [tuple(e) for e in data["evals"]]
    rec = RunRecord(**data)
    with open(p / "metrics.csv", newline="") as fh:
        rec.rows = list(csv.DictReader(fh))
    return rec


def find_records(paths: Sequence) -> list[RunRecord]:
    """Collect complete records under the given directories (any depth)."""
    out = []
    for root in paths:
        for rj in sorted(Path(root).rglob("record.json")):
            if not (rj.parent / "INCOMPLETE").exists():
                out.append(load_record(rj.parent))
    return out


def auc(evals: Sequence[tuple]) -> float:
    """Trapezoid area under (step, mean return)."""
    if len(evals) < 2:
        return 0.0
    s = np.array([e[0] for e in evals], dtype=float)
    r = np.array([e[1] for e in evals], dtype=float)
    return float(np.sum(np.diff(s) * (r[1:] + r[:-1]) / 2.0))


def steps_to_threshold(evals: Sequence[tuple], threshold: float) -> int | None:
    for step, mean_ret, *_ in evals:
        if mean_ret >= threshold:
            return int(step)
    return None


NOT_REACHED = "not reached"


@dataclass
class ConfigSummary:
    label: str
    config_hash: str
    n_seeds: int
    reached: int
    median_steps: float | None
    steps_mean: float | None
    steps_std: float | None
    final_mean: float
    final_std: float
    auc_mean: float
    auc_std: float


def _median_steps(values: list[int | None]) -> float | None:
    """Median with 'not reached' ranked above every finite step count."""
    keyed = sorted(math.inf if v is None else v for v in values)
    n = len(keyed)
    med = keyed[n // 2] if n % 2 else (keyed[n // 2 - 1] + keyed[n // 2]) / 2
    return None if math.isinf(med) else float(med)


def summarize(records: Sequence[RunRecord], threshold: float) -> list[ConfigSummary]:
    if not records:
        raise UsageError("no run records to compare")
    envs = {r.env for r in records}
    if len(envs) > 1:
        raise UsageError(f"records come from different environments: {sorted(envs)}")
    totals = {r.total_steps for r in records}
    if len(totals) > 1:
        raise UsageError(f"records have different total_steps: {sorted(totals)}")
    groups: dict[str, list[RunRecord]] = {}
    for r in records:
        groups.setdefault(r.config_hash, []).append(r)
    out = []
    for h, recs in groups.items():
        sts = [steps_to_threshold(r.evals, threshold) for r in recs]
        reached = [s for s in sts if s is not None]
        finals = np.array([r.evals[-1][1] for r in recs])
        aucs = np.array([auc(r.evals) for r in recs])
        out.append(ConfigSummary(
            recs[0].label, h, len(recs), len(reached), _median_steps(sts),
            float(np.mean(reached)) if reached else None,
            float(np.std(reached)) if reached else None,
            float(finals.mean()), float(finals.std()),
            float(aucs.mean()), float(aucs.std()),
        ))
    return out


def compare(records: Sequence[RunRecord], threshold: float) -> tuple[str, str]:
    """Aggregate table as (csv_text, human_text); differences are vs the first config."""
    rows = summarize(records, threshold)
    base = rows[0]

    def diff(a, b):
        return None if a is None or b is None else a - b

    header = ["config", "hash", "seeds", "reached", "median_steps_to_threshold",
              "steps_mean", "steps_std", "final_return_mean", "final_return_std",
              "auc_mean", "auc_std", "diff_median_steps", "diff_final_return", "diff_auc"]
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    lines = [f"threshold = {threshold}"]
    for s in rows:
        cells = [
            s.label, s.config_hash[:10], s.n_seeds, s.reached,
            NOT_REACHED if s.median_steps is None else s.median_steps,
            "" if s.steps_mean is None else s.steps_mean,
            "" if s.steps_std is None else s.steps_std,
            s.final_mean, s.final_std, s.auc_mean, s.auc_std,
        ]
        d_steps = diff(s.median_steps, base.median_steps)
        cells += ["" if d_steps is None else d_steps,
                  s.final_mean - base.final_mean, s.auc_mean - base.auc_mean]
        w.writerow(cells)
        med = NOT_REACHED if s.median_steps is None else f"{s.median_steps:.0f}"
        lines.append(
            f"{s.label:<28} seeds={s.n_seeds} reached={s.reached}/{s.n_seeds} "
            f"median steps-to-threshold={med}  final={s.final_mean:.3f} +- {s.final_std:.3f}  "
            f"auc={s.auc_mean:.4g} +- {s.auc_std:.3g}"
        )
    return buf.getvalue(), "\n".join(lines) + "\n"
