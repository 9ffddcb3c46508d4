"""Bayesian soft actor-critic learner.

One update consists of

1. critic regression onto ``y = r + gamma * (1 - done) * V(s')`` where
   ``V(s') = min-target Q(s', A') - (alpha/m) * sum_i log pi_i(a'_i | ...)``,
2. a joint policy step minimizing ``E[(alpha/m) * sum_i log pi_i - min Q(s, A)]``
   with ``A`` reparameterized through every node, in one backward pass,
3. an optional temperature step,
4. Polyak averaging of the target critics.

``m`` is the node count of the strategy network; with ``m == 1`` every
expression is the ordinary SAC one.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field, fields

import numpy as np

from . import numerics as nx
from .bsn import BsnGraph
from .critic import CriticEnsemble, make_critics, polyak_update, q_eval, soft_value
from .envs import Env, EnvSpec
from .errors import ConfigError, NumericError
from .numerics import AdamState, Tape, derive_seed
from .policy import JointPolicy, greedy_action, joint_sample, make_joint_policy
from .replay import Batch, ReplayBuffer, Transition


@dataclass
class AgentConfig:
    alpha: float = 0.2
    gamma: float = 0.99
    tau: float = 0.005
    actor_lr: float = 3e-4
    critic_lr: float = 3e-4
    alpha_lr: float = 3e-4
    batch_size: int = 256
    warmup_steps: int = 1000
    update_every: int = 1
    auto_alpha: bool = False
    target_entropy: float | None = None
    hidden_sizes: tuple[int, ...] = (256, 256)
    activation: str = "relu"
    critic: str = "twin"
    buffer_capacity: int = 1_000_000
    log_std_min: float = -20.0
    log_std_max: float = 2.0

    def __post_init__(self):
        self.hidden_sizes = tuple(int(h) for h in self.hidden_sizes)
        self.validate()

    def validate(self):
        checks = [
            (self.alpha >= 0, "alpha must be >= 0"),
            (0.0 <= self.gamma <= 1.0, "gamma must be in [0, 1]"),
            (0.0 < self.tau <= 1.0, "tau must be in (0, 1]"),
            (min(self.actor_lr, self.critic_lr, self.alpha_lr) >= 0, "learning rates must be >= 0"),
            (self.batch_size >= 1, "batch_size must be >= 1"),
            (self.warmup_steps >= self.batch_size, "warmup_steps must be >= batch_size"),
            (self.update_every >= 1, "update_every must be >= 1"),
            (not self.auto_alpha or self.alpha > 0, "auto_alpha needs a positive initial alpha"),
            (self.critic in ("twin", "single"), "critic must be 'twin' or 'single'"),
            (self.activation in nx.ACTIVATIONS, f"activation must be one of {nx.ACTIVATIONS}"),
            (self.buffer_capacity >= self.batch_size, "buffer_capacity must be >= batch_size"),
            (self.log_std_min < self.log_std_max, "log_std_min must be < log_std_max"),
        ]
        for ok, msg in checks:
            if not ok:
                raise ConfigError(msg)

    @classmethod
    def field_names(cls) -> list[str]:
        return [f.name for f in fields(cls)]

    def to_dict(self) -> dict:
        d = asdict(self)
        d["hidden_sizes"] = list(self.hidden_sizes)
        return d


@dataclass
class UpdateMetrics:
    critic_loss: float = math.nan
    policy_loss: float = math.nan
    mean_q: float = math.nan
    joint_logprob: float = math.nan
    node_logprobs: dict[str, float] = field(default_factory=dict)
    alpha: float = math.nan

    def finite(self) -> bool:
        vals = [self.critic_loss, self.policy_loss, self.mean_q, self.joint_logprob, self.alpha]
        vals += list(self.node_logprobs.values())
        return all(math.isfinite(v) for v in vals)


class Agent:
    """Joint policy over a strategy network plus a shared critic ensemble."""

    kind = "bsac"

    def __init__(self, policy: JointPolicy, critics: CriticEnsemble, config: AgentConfig):
        if policy.action_dim + policy.state_dim != critics.input_dim:
            raise ConfigError("policy action width does not match the critic input")
        self.policy = policy
        self.critics = critics
        self.config = config
        self.actor_opt = AdamState(lr=config.actor_lr)
        self.critic_opt = AdamState(lr=config.critic_lr)
        self.alpha_opt = AdamState(lr=config.alpha_lr)
        self.log_alpha = math.log(config.alpha) if config.alpha > 0 else -math.inf
        self.env_steps = 0
        self.updates = 0

    @classmethod
    def create(
        cls,
        graph: BsnGraph,
        spec: EnvSpec,
        config: AgentConfig,
        rng: np.random.Generator,
    ) -> Agent:
        if graph.total_action_dim != spec.action_dim:
            raise ConfigError(
                f"strategy network covers {graph.total_action_dim} action dims, "
                f"environment {spec.name!r} has {spec.action_dim}"
            )
        policy = make_joint_policy(
            graph, spec.state_dim, rng, config.hidden_sizes, config.activation,
            squash=spec.squash == "tanh",
            log_std_min=config.log_std_min, log_std_max=config.log_std_max,
        )
        critics = make_critics(
            spec.state_dim, spec.action_dim, rng, config.hidden_sizes, config.activation,
            config.tau, twin=config.critic == "twin",
        )
        return cls(policy, critics, config)

    @property
    def m(self) -> int:
        return self.policy.m

    @property
    def alpha(self) -> float:
        return math.exp(self.log_alpha)

    @property
    def target_entropy(self) -> float:
        if self.config.target_entropy is not None:
            return self.config.target_entropy
        return -self.policy.action_dim / self.m

    def act(self, state, rng: np.random.Generator) -> np.ndarray:
        noise = self.policy.draw_noise(rng, 1)
        return joint_sample(self.policy, state, noise).action

    def greedy(self, state) -> np.ndarray:
        return greedy_action(self.policy, state)

    def param_groups(self) -> dict[str, dict[str, np.ndarray]]:
        return {
            "policy": self.policy.params(),
            "critic": self.critics.params(),
            "target": self.critics.target_params(),
        }

    def optimizers(self) -> dict[str, AdamState]:
        return {"actor": self.actor_opt, "critic": self.critic_opt, "alpha": self.alpha_opt}

    def update(self, buffer: ReplayBuffer, rng: np.random.Generator) -> UpdateMetrics:
        batch = buffer.sample(self.config.batch_size, rng)
        metrics = critic_update(self, batch, rng)
        pm = policy_update(self, batch, rng)
        metrics.policy_loss = pm.policy_loss
        metrics.joint_logprob = pm.joint_logprob
        metrics.node_logprobs = pm.node_logprobs
        if self.config.auto_alpha:
            alpha_update(self, batch, mean_node_logprob=pm.joint_logprob / self.m)
        polyak_update(self.critics)
        metrics.alpha = self.alpha
        self.updates += 1
        return metrics


def _noise(policy, rng, noise, batch):
    if noise is not None:
        return noise
    return policy.draw_noise(rng, batch)


def _check_finite(value: float, what: str, batch: Batch):
    if not math.isfinite(value):
        raise NumericError(
            f"non-finite {what}: rewards in [{batch.rewards.min():.3g}, {batch.rewards.max():.3g}], "
            f"|state| max {np.abs(batch.states).max():.3g}, "
            f"|action| max {np.abs(batch.actions).max():.3g}, done fraction {batch.dones.mean():.2f}"
        )


def critic_target(agent: Agent, batch: Batch, rng=None, noise=None) -> np.ndarray:
    """Soft Bellman backup ``r + gamma * (1 - done) * V(s')``; plain arrays, no tape."""
    noise = _noise(agent.policy, rng, noise, len(batch))
    v_next = soft_value(agent.critics, agent.policy, batch.next_states, noise, agent.alpha)
    return batch.rewards + agent.config.gamma * (1.0 - batch.dones) * v_next


def critic_update(agent: Agent, batch: Batch, rng=None, noise=None) -> UpdateMetrics:
    y = critic_target(agent, batch, rng, noise)
    tape = Tape()
    q1 = q_eval(agent.critics, batch.states, batch.actions, "q1", tape)
    loss = nx.mean(nx.square(q1 - y))
    q_min = q1.value
    if agent.critics.twin:
        q2 = q_eval(agent.critics, batch.states, batch.actions, "q2", tape)
        loss = loss + nx.mean(nx.square(q2 - y))
        q_min = np.minimum(q_min, q2.value)
    value = float(loss.value)
    _check_finite(value, "critic loss", batch)
    grads = tape.backward(loss)
    nx.adam_step(agent.critics.params(), grads, agent.critic_opt)
    return UpdateMetrics(critic_loss=value, mean_q=float(np.mean(q_min)), alpha=agent.alpha)


def policy_loss_var(agent: Agent, states, noise, tape: Tape):
    """Reparameterized joint-policy loss on ``tape``; returns (loss Var, sample)."""
    sample = joint_sample(agent.policy, states, noise, tape)
    q = q_eval(agent.critics, states, sample.action_var, "min-online", tape, trainable=False)
    coef = agent.alpha / agent.m
    loss = nx.mean(coef * sample.log_prob_var - q)
    return loss, sample


def policy_update(agent: Agent, batch: Batch, rng=None, noise=None) -> UpdateMetrics:
    noise = _noise(agent.policy, rng, noise, len(batch))
    tape = Tape()
    loss, sample = policy_loss_var(agent, batch.states, noise, tape)
    value = float(loss.value)
    _check_finite(value, "policy loss", batch)
    grads = tape.backward(loss)
    nx.adam_step(agent.policy.params(), grads, agent.actor_opt)
    return UpdateMetrics(
        policy_loss=value,
        joint_logprob=float(np.mean(sample.log_prob)),
        node_logprobs={k: float(np.mean(v)) for k, v in sample.node_log_probs.items()},
        alpha=agent.alpha,
    )


def alpha_gradient(mean_node_logprob: float, target_entropy: float) -> float:
    """d/d(log alpha) of ``-log_alpha * (mean (1/m) sum log pi_i + target)``."""
    return -(mean_node_logprob + target_entropy)


def alpha_update(agent: Agent, batch: Batch | None = None, rng=None, noise=None,
                 mean_node_logprob: float | None = None) -> float:
    """Step log-alpha so the per-node average entropy tracks the target."""
    if mean_node_logprob is None:
        noise = _noise(agent.policy, rng, noise, len(batch))
        sample = joint_sample(agent.policy, batch.states, noise)
        mean_node_logprob = float(np.mean(sample.log_prob)) / agent.m
    p = {"log_alpha": np.array([agent.log_alpha])}
    g = {"log_alpha": np.array([alpha_gradient(mean_node_logprob, agent.target_entropy)])}
    nx.adam_step(p, g, agent.alpha_opt)
    agent.log_alpha = float(p["log_alpha"][0])
    return agent.alpha


# -- environment interaction -------------------------------------------------


def random_action(spec: EnvSpec, rng: np.random.Generator) -> np.ndarray:
    """Uniform warm-up action in policy space."""
    if spec.squash == "tanh":
        return rng.uniform(-1.0, 1.0, size=spec.action_dim)
    return rng.uniform(spec.action_low, spec.action_high)


def to_env_action(spec: EnvSpec, action: np.ndarray) -> np.ndarray:
    """Map a policy-space action onto the environment's bounds."""
    if spec.squash == "off":
        return action
    lo, hi = spec.action_low, spec.action_high
    if np.all(lo == -1.0) and np.all(hi == 1.0):
        return action
    return lo + (action + 1.0) * 0.5 * (hi - lo)


def train_step(agent, env: Env, buffer: ReplayBuffer, rng: np.random.Generator):
    """Advance one environment step and, past warm-up, run one update round.

    Returns the update's metrics, or None when no update ran.  Works for any
    agent exposing ``act``, ``update``, ``config`` and ``env_steps``.
    """
    state = env.reset(derive_seed(rng)) if env.episode_ended else env.state
    t = agent.env_steps + 1
    cfg = agent.config
    if t <= cfg.warmup_steps:
        action = random_action(env.spec, rng)
    else:
        action = agent.act(state, rng)
    result = env.step(to_env_action(env.spec, action))
    buffer.push(Transition(state, action, result.reward, result.next_state, result.terminal))
    agent.env_steps = t
    if t > cfg.warmup_steps and (t - cfg.warmup_steps) % cfg.update_every == 0:
        return agent.update(buffer, rng)
    return None


def make_buffer(spec: EnvSpec, config: AgentConfig) -> ReplayBuffer:
    return ReplayBuffer(config.buffer_capacity, spec.state_dim, spec.action_dim)
