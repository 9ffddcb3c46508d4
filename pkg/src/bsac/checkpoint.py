"""Versioned ``.npz`` checkpoints for agents.

Layout: every parameter array is stored under ``<group>/<name>`` (groups
``policy``, ``critic``, ``target``), Adam moments under
``opt/<optimizer>/{m,v}/<name>``, an optional replay buffer under ``buffer/*``,
and a JSON document under ``__meta__`` holding the format tag and version,
agent kind, strategy-network text and node order, clamp and squash settings,
the agent config, environment name/params, counters, temperature, optimizer
scalars and (optionally) the RNG state.
"""

from __future__ import annotations

import json
import os
from pathlib import Path

import numpy as np

from .agent import Agent, AgentConfig
from .bsn import parse_bsn
from .critic import CriticEnsemble
from .errors import UsageError
from .numerics import MlpParams
from .policy import JointPolicy, SubPolicy
from .replay import ReplayBuffer
from .sac import FlatSacAgent, TanhGaussianPolicy

FORMAT = "bsac-checkpoint"
VERSION = 1


def _mlp_meta(net: MlpParams) -> dict:
    return {"layers": len(net.weights), "activation": net.activation,
            "output_activation": net.output_activation}


def _mlp_from(arrays, prefix: str, meta: dict) -> MlpParams:
    n = meta["layers"]
    return MlpParams(
        [arrays[f"{prefix}W{k}"].copy() for k in range(n)],
        [arrays[f"{prefix}b{k}"].copy() for k in range(n)],
        meta["activation"],
        meta["output_activation"],
    )


def save_agent(path, agent, env_name: str = "", env_params: dict | None = None,
               rng: np.random.Generator | None = None,
               buffer: ReplayBuffer | None = None) -> Path:
    """Write ``agent`` (and optionally rng/buffer) atomically to ``path``."""
    path = Path(path)
    arrays: dict[str, np.ndarray] = {}
    for group, params in agent.param_groups().items():
        for k, v in params.items():
            arrays[f"{group}/{k}"] = v
    opt_meta = {}
    for name, st in agent.optimizers().items():
        opt_meta[name] = {"lr": st.lr, "beta1": st.beta1, "beta2": st.beta2,
                          "eps": st.eps, "step": st.step}
        for k in st.m:
            arrays[f"opt/{name}/m/{k}"] = st.m[k]
            arrays[f"opt/{name}/v/{k}"] = st.v[k]
    meta = {
        "format": FORMAT,
        "version": VERSION,
        "kind": agent.kind,
        "config": agent.config.to_dict(),
        "env": {"name": env_name, "params": env_params or {}},
        "log_alpha": agent.log_alpha,
        "env_steps": agent.env_steps,
        "updates": agent.updates,
        "optimizers": opt_meta,
        "critic": {"twin": agent.critics.twin, "tau": agent.critics.tau,
                   "net": _mlp_meta(agent.critics.q1)},
        "rng": rng.bit_generator.state if rng is not None else None,
    }
    if agent.kind == "bsac":
        pol = agent.policy
        meta["policy"] = {
            "graph": pol.graph.to_text(),
            "graph_name": pol.graph.name,
            "order": pol.order,
            "nodes": {
                nid: {"action_dim": s.action_dim, "parent_dim": s.parent_dim,
                      "squash": s.squash, "log_std_min": s.log_std_min,
                      "log_std_max": s.log_std_max, "net": _mlp_meta(s.network)}
                for nid, s in pol.subs.items()
            },
        }
    else:
        pol = agent.policy
        meta["policy"] = {"action_dim": pol.action_dim, "squash": pol.squash,
                          "log_std_min": pol.log_std_min, "log_std_max": pol.log_std_max,
                          "net": _mlp_meta(pol.net)}
    if buffer is not None:
        for k, v in buffer.state_dict().items():
            arrays[f"buffer/{k}"] = v
    arrays["__meta__"] = np.array(json.dumps(meta, default=_json_default))
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "wb") as fh:
        np.savez(fh, **arrays)
    os.replace(tmp, path)
    return path


def _json_default(o):
    if isinstance(o, np.integer):
        return int(o)
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(type(o))


def read_meta(path) -> dict:
    with np.load(path, allow_pickle=False) as z:
        meta = json.loads(str(z["__meta__"]))
    _check_meta(meta)
    return meta


def _check_meta(meta):
    if meta.get("format") != FORMAT:
        raise UsageError("not a bsac checkpoint")
    if meta.get("version") != VERSION:
        raise UsageError(f"unsupported checkpoint version {meta.get('version')}")


def load_agent(path):
    """Return ``(agent, meta, rng_or_None, buffer_or_None)``."""
    with np.load(path, allow_pickle=False) as z:
        arrays = {k: z[k] for k in z.files}
    meta = json.loads(str(arrays.pop("__meta__")))
    _check_meta(meta)
    cfg_dict = dict(meta["config"])
    cfg_dict["hidden_sizes"] = tuple(cfg_dict["hidden_sizes"])
    config = AgentConfig(**cfg_dict)

    cm = meta["critic"]
    q1 = _mlp_from(arrays, "critic/q1/", cm["net"])
    t1 = _mlp_from(arrays, "target/q1/", cm["net"])
    q2 = _mlp_from(arrays, "critic/q2/", cm["net"]) if cm["twin"] else None
    t2 = _mlp_from(arrays, "target/q2/", cm["net"]) if cm["twin"] else None
    critics = CriticEnsemble(q1, q2, t1, t2, cm["tau"])

    pm = meta["policy"]
    if meta["kind"] == "bsac":
        graph = parse_bsn(pm["graph"], pm.get("graph_name", ""))
        subs = {}
        for nid, nm in pm["nodes"].items():
            net = _mlp_from(arrays, f"policy/{nid}/", nm["net"])
            subs[nid] = SubPolicy(nid, net, nm["action_dim"], nm["parent_dim"], nm["squash"],
                                  nm["log_std_min"], nm["log_std_max"])
        agent = Agent(JointPolicy(graph, subs, list(pm["order"])), critics, config)
    elif meta["kind"] == "sac":
        net = _mlp_from(arrays, "policy/pi/", pm["net"])
        policy = TanhGaussianPolicy(net, pm["action_dim"], pm["squash"],
                                    pm["log_std_min"], pm["log_std_max"])
        agent = FlatSacAgent(policy, critics, config)
    else:
        raise UsageError(f"unknown agent kind {meta['kind']!r}")

    agent.log_alpha = float(meta["log_alpha"])
    agent.env_steps = int(meta["env_steps"])
    agent.updates = int(meta["updates"])
    for name, st in agent.optimizers().items():
        om = meta["optimizers"][name]
        st.lr, st.beta1, st.beta2, st.eps, st.step = (
            om["lr"], om["beta1"], om["beta2"], om["eps"], om["step"])
        pre = f"opt/{name}/m/"
        for k in [k for k in arrays if k.startswith(pre)]:
            key = k[len(pre):]
            st.m[key] = arrays[k].copy()
            st.v[key] = arrays[f"opt/{name}/v/{key}"].copy()

    rng = None
    if meta.get("rng") is not None:
        bg = np.random.Philox()
        bg.state = meta["rng"]
        rng = np.random.Generator(bg)
    buffer = None
    if "buffer/meta" in arrays:
        buffer = ReplayBuffer.from_state_dict(
            {k[len("buffer/"):]: v for k, v in arrays.items() if k.startswith("buffer/")})
    return agent, meta, rng, buffer
