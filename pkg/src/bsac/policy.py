"""Squashed-Gaussian sub-policies composed into a joint policy by the chain rule.

Each node of a strategy network gets its own MLP mapping
``[state, parent actions]`` to a mean and a log-std for the node's action
coordinates.  Sampling walks the graph in topological order, so every node
sees the executed (post-squash) actions of its parents, and the joint
log-density is the sum of the per-node conditional log-densities.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from . import numerics as nx
from .bsn import BsnGraph, gather_parent_actions, topo_order
from .errors import DomainError, NumericError, ShapeError
from .numerics import MlpParams, Tape, Var

LOG_STD_MIN = -20.0
LOG_STD_MAX = 2.0
SQUASH_EPS = 1e-6
HALF_LOG_2PI = 0.5 * math.log(2.0 * math.pi)


@dataclass
class SubPolicy:
    node_id: str
    network: MlpParams
    action_dim: int
    parent_dim: int
    squash: bool = True
    log_std_min: float = LOG_STD_MIN
    log_std_max: float = LOG_STD_MAX

    def __post_init__(self):
        if self.network.out_dim != 2 * self.action_dim:
            raise ShapeError(
                f"node {self.node_id!r}: network emits {self.network.out_dim} values, "
                f"expected {2 * self.action_dim}"
            )

    @property
    def state_dim(self) -> int:
        return self.network.in_dim - self.parent_dim

    def params(self) -> dict[str, np.ndarray]:
        return self.network.named(f"{self.node_id}/")


def _distribution(sub: SubPolicy, state, parent_actions, tape: Tape | None):
    """Return (mean, clamped log-std) as Vars."""
    inp = state if sub.parent_dim == 0 else nx.concat([state, parent_actions], axis=-1)
    out = nx.mlp_forward(sub.network, inp, tape, prefix=f"{sub.node_id}/")
    if tape is None:
        out = Var(out)
    if not np.all(np.isfinite(out.value)):
        raise NumericError(f"non-finite output from sub-policy {sub.node_id!r}")
    d = sub.action_dim
    mu = nx.columns(out, slice(0, d))
    log_std = nx.clip(nx.columns(out, slice(d, 2 * d)), sub.log_std_min, sub.log_std_max)
    return mu, log_std


def _as_batch(x) -> tuple[np.ndarray, bool]:
    x = nx.as_tensor(x)
    return (x[None, :], True) if x.ndim == 1 else (x, False)


def sub_sample(
    sub: SubPolicy,
    state,
    parent_actions,
    noise,
    tape: Tape | None = None,
) -> tuple[Var, Var]:
    """Reparameterized draw from one sub-policy; returns (action, log-prob) Vars.

    ``state``/``parent_actions`` may be arrays or Vars of shape (batch, width);
    ``noise`` is a standard-normal array of shape (batch, action_dim).
    """
    noise = nx.as_tensor(noise)
    if noise.shape[-1] != sub.action_dim:
        raise ShapeError(f"node {sub.node_id!r}: noise width {noise.shape[-1]} != {sub.action_dim}")
    mu, log_std = _distribution(sub, state, parent_actions, tape)
    u = mu + nx.exp(log_std) * noise
    # (u - mu) / std is exactly the noise, so the Gaussian term uses it directly
    gauss = nx.sum_(-0.5 * (noise * noise) - log_std - HALF_LOG_2PI, axis=-1)
    if not sub.squash:
        return u, gauss
    a = nx.tanh(u)
    correction = nx.sum_(nx.log(1.0 - nx.square(a) + SQUASH_EPS), axis=-1)
    return a, gauss - correction


@dataclass
class JointSample:
    action: np.ndarray
    node_log_probs: dict[str, np.ndarray]
    log_prob: np.ndarray
    action_var: Var = field(repr=False, default=None)
    node_log_prob_vars: dict[str, Var] = field(repr=False, default_factory=dict)
    log_prob_var: Var = field(repr=False, default=None)


@dataclass
class JointPolicy:
    graph: BsnGraph
    subs: dict[str, SubPolicy]
    order: list[str] = field(default_factory=list)

    def __post_init__(self):
        if set(self.subs) != {n.id for n in self.graph.nodes}:
            raise ShapeError("need exactly one sub-policy per strategy-network node")
        if not self.order:
            self.order = topo_order(self.graph)
        self._dims = {n.id: list(n.action_dims) for n in self.graph.nodes}
        self._parents = {n.id: list(n.parents) for n in self.graph.nodes}
        placed = [d for nid in self.order for d in self._dims[nid]]
        self._identity_layout = placed == list(range(self.graph.total_action_dim))
        # position of joint coordinate j inside the topo-ordered concatenation
        self._perm = np.argsort(placed)

    @property
    def m(self) -> int:
        return self.graph.m

    @property
    def action_dim(self) -> int:
        return self.graph.total_action_dim

    @property
    def state_dim(self) -> int:
        return self.subs[self.order[0]].state_dim

    @property
    def squash(self) -> bool:
        return self.subs[self.order[0]].squash

    def params(self) -> dict[str, np.ndarray]:
        out = {}
        for nid in self.order:
            out.update(self.subs[nid].params())
        return out

    def noise_shapes(self, batch: int) -> dict[str, tuple[int, int]]:
        return {nid: (batch, self.subs[nid].action_dim) for nid in self.order}

    def draw_noise(self, rng: np.random.Generator, batch: int) -> dict[str, np.ndarray]:
        """Standard-normal noise per node, drawn in topological order."""
        return {nid: rng.standard_normal(shape) for nid, shape in self.noise_shapes(batch).items()}


def make_joint_policy(
    graph: BsnGraph,
    state_dim: int,
    rng: np.random.Generator,
    hidden_sizes: Sequence[int] = (256, 256),
    activation: str = "relu",
    squash: bool = True,
    log_std_min: float = LOG_STD_MIN,
    log_std_max: float = LOG_STD_MAX,
) -> JointPolicy:
    """Initialize one sub-policy network per node, in topological order."""
    subs = {}
    for nid in topo_order(graph):
        d = len(graph.node(nid).action_dims)
        pd = len(graph.parent_dims(nid))
        net = nx.init_mlp([state_dim + pd, *hidden_sizes, 2 * d], rng, activation)
        subs[nid] = SubPolicy(nid, net, d, pd, squash, log_std_min, log_std_max)
    return JointPolicy(graph, subs)


def _assemble(policy: JointPolicy, actions: Mapping[str, Var]) -> Var:
    parts = [actions[nid] for nid in policy.order]
    joint = parts[0] if len(parts) == 1 else nx.concat(parts, axis=-1)
    if not policy._identity_layout:
        joint = nx.columns(joint, policy._perm)
    return joint


def joint_sample(
    policy: JointPolicy,
    state,
    noise: Mapping[str, np.ndarray],
    tape: Tape | None = None,
) -> JointSample:
    """Sample every node in topological order, conditioning on parents' actions."""
    state, single = _as_batch(state)
    if state.shape[-1] != policy.state_dim:
        raise ShapeError(f"state width {state.shape[-1]} != {policy.state_dim}")
    missing = [nid for nid in policy.order if nid not in noise]
    if missing:
        raise ShapeError(f"no noise supplied for nodes {missing}")
    actions: dict[str, Var] = {}
    log_probs: dict[str, Var] = {}
    for nid in policy.order:
        parents = policy._parents[nid]
        pa = None
        if parents:
            pa_parts = [actions[p] for p in parents]
            pa = pa_parts[0] if len(pa_parts) == 1 else nx.concat(pa_parts, axis=-1)
        eps = nx.as_tensor(noise[nid])
        if eps.ndim == 1:
            eps = eps[None, :]
        actions[nid], log_probs[nid] = sub_sample(policy.subs[nid], state, pa, eps, tape)
    total = log_probs[policy.order[0]]
    for nid in policy.order[1:]:
        total = total + log_probs[nid]
    joint = _assemble(policy, actions)
    unbatch = (lambda v: v[0]) if single else (lambda v: v)
    return JointSample(
        action=unbatch(joint.value),
        node_log_probs={nid: unbatch(lp.value) for nid, lp in log_probs.items()},
        log_prob=unbatch(total.value),
        action_var=joint,
        node_log_prob_vars=log_probs,
        log_prob_var=total,
    )


def node_log_probs(policy: JointPolicy, state, action) -> dict[str, np.ndarray]:
    """Per-node conditional log-densities of a given joint action."""
    state, single = _as_batch(state)
    action, _ = _as_batch(action)
    if action.shape[-1] != policy.action_dim:
        raise ShapeError(f"action width {action.shape[-1]} != {policy.action_dim}")
    if policy.squash and np.any(np.abs(action) >= 1.0):
        raise DomainError("squashed actions must lie strictly inside (-1, 1)")
    out = {}
    for nid in policy.order:
        sub = policy.subs[nid]
        a = action[..., policy._dims[nid]]
        pa = gather_parent_actions(policy.graph, nid, action) if sub.parent_dim else None
        mu, log_std = _distribution(sub, state, pa, None)
        u = np.arctanh(a) if sub.squash else a
        z = (u - mu.value) / np.exp(log_std.value)
        lp = np.sum(-0.5 * (z * z) - log_std.value - HALF_LOG_2PI, axis=-1)
        if sub.squash:
            lp = lp - np.sum(np.log(1.0 - np.square(a) + SQUASH_EPS), axis=-1)
        out[nid] = lp[0] if single else lp
    return out


def joint_log_prob(policy: JointPolicy, state, action) -> np.ndarray:
    per_node = node_log_probs(policy, state, action)
    total = per_node[policy.order[0]]
    for nid in policy.order[1:]:
        total = total + per_node[nid]
    return total


def greedy_action(policy: JointPolicy, state) -> np.ndarray:
    """Deterministic action: every node plays its (squashed) mean."""
    state, single = _as_batch(state)
    actions: dict[str, Var] = {}
    for nid in policy.order:
        sub = policy.subs[nid]
        pa = None
        if sub.parent_dim:
            pa = nx.concat([actions[p] for p in policy._parents[nid]], axis=-1)
        mu, _ = _distribution(sub, state, pa, None)
        actions[nid] = nx.tanh(mu) if sub.squash else mu
    joint = _assemble(policy, actions).value
    return joint[0] if single else joint


def entropy_estimate(
    policy: JointPolicy,
    state,
    n_samples: int,
    rng: np.random.Generator,
) -> tuple[float, dict[str, float]]:
    """Monte Carlo entropy of the joint policy at one state.

    Returns the joint estimate and the per-node conditional estimates.  The
    joint value is the sum of the per-node values, so it equals
    ``-mean(joint log-prob)`` up to rounding and is additive exactly.
    """
    if n_samples < 1:
        raise ValueError("n_samples must be >= 1")
    state = nx.as_tensor(state).reshape(1, -1)
    states = np.repeat(state, n_samples, axis=0)
    sample = joint_sample(policy, states, policy.draw_noise(rng, n_samples))
    per_node = {nid: -float(np.mean(sample.node_log_probs[nid])) for nid in policy.order}
    joint = 0.0
    for nid in policy.order:
        joint += per_node[nid]
    return joint, per_node
