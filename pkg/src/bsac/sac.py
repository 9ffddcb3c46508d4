"""Plain soft actor-critic with one tanh-Gaussian policy network.

Kept deliberately separate from the strategy-network code path: it is the
reference a single-node Bayesian agent must reproduce number for number.  It
shares only the numeric substrate, the critic ensemble and the replay buffer.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import numerics as nx
from .agent import AgentConfig, UpdateMetrics
from .critic import CriticEnsemble, make_critics, polyak_update, q_eval
from .envs import EnvSpec
from .errors import NumericError
from .numerics import AdamState, MlpParams, Tape
from .replay import Batch, ReplayBuffer

_HALF_LOG_2PI = 0.5 * math.log(2.0 * math.pi)


@dataclass
class TanhGaussianPolicy:
    net: MlpParams
    action_dim: int
    squash: bool = True
    log_std_min: float = -20.0
    log_std_max: float = 2.0

    def params(self):
        return self.net.named("pi/")


def _head(policy: TanhGaussianPolicy, state, tape):
    out = nx.mlp_forward(policy.net, state, tape, prefix="pi/")
    out = out if tape is not None else nx.Var(out)
    d = policy.action_dim
    mu = nx.columns(out, slice(0, d))
    log_std = nx.clip(nx.columns(out, slice(d, 2 * d)), policy.log_std_min, policy.log_std_max)
    return mu, log_std


def sample(policy: TanhGaussianPolicy, state, noise, tape=None):
    """Reparameterized action and its log-density (both Vars)."""
    mu, log_std = _head(policy, state, tape)
    u = mu + nx.exp(log_std) * noise
    logp = nx.sum_(-0.5 * (noise * noise) - log_std - _HALF_LOG_2PI, axis=-1)
    if not policy.squash:
        return u, logp
    a = nx.tanh(u)
    return a, logp - nx.sum_(nx.log(1.0 - nx.square(a) + 1e-6), axis=-1)


def log_prob(policy: TanhGaussianPolicy, state, action) -> np.ndarray:
    mu, log_std = _head(policy, nx.as_tensor(state), None)
    u = np.arctanh(action) if policy.squash else action
    z = (u - mu.value) / np.exp(log_std.value)
    lp = np.sum(-0.5 * z * z - log_std.value - _HALF_LOG_2PI, axis=-1)
    if policy.squash:
        lp = lp - np.sum(np.log(1.0 - np.square(action) + 1e-6), axis=-1)
    return lp


class FlatSacAgent:
    kind = "sac"

    def __init__(self, policy: TanhGaussianPolicy, critics: CriticEnsemble, config: AgentConfig):
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
    def create(cls, spec: EnvSpec, config: AgentConfig, rng: np.random.Generator):
        d = spec.action_dim
        net = nx.init_mlp([spec.state_dim, *config.hidden_sizes, 2 * d], rng, config.activation)
        policy = TanhGaussianPolicy(
            net, d, spec.squash == "tanh", config.log_std_min, config.log_std_max
        )
        critics = make_critics(
            spec.state_dim, d, rng, config.hidden_sizes, config.activation,
            config.tau, twin=config.critic == "twin",
        )
        return cls(policy, critics, config)

    @property
    def m(self) -> int:
        return 1

    @property
    def alpha(self) -> float:
        return math.exp(self.log_alpha)

    @property
    def target_entropy(self) -> float:
        if self.config.target_entropy is not None:
            return self.config.target_entropy
        return -float(self.policy.action_dim)

    def act(self, state, rng):
        noise = rng.standard_normal((1, self.policy.action_dim))
        a, _ = sample(self.policy, nx.as_tensor(state)[None, :], noise)
        return a.value[0]

    def greedy(self, state):
        mu, _ = _head(self.policy, nx.as_tensor(state)[None, :], None)
        a = np.tanh(mu.value) if self.policy.squash else mu.value
        return a[0]

    def param_groups(self):
        return {
            "policy": self.policy.params(),
            "critic": self.critics.params(),
            "target": self.critics.target_params(),
        }

    def optimizers(self):
        return {"actor": self.actor_opt, "critic": self.critic_opt, "alpha": self.alpha_opt}

    def value_target(self, batch: Batch, noise) -> np.ndarray:
        a2, logp2 = sample(self.policy, batch.next_states, noise)
        q_next = q_eval(self.critics, batch.next_states, a2.value, "min-target")
        v_next = q_next - self.alpha * logp2.value
        return batch.rewards + self.config.gamma * (1.0 - batch.dones) * v_next

    def critic_step(self, batch: Batch, noise) -> tuple[float, float]:
        y = self.value_target(batch, noise)
        tape = Tape()
        q1 = q_eval(self.critics, batch.states, batch.actions, "q1", tape)
        loss = nx.mean(nx.square(q1 - y))
        q_min = q1.value
        if self.critics.twin:
            q2 = q_eval(self.critics, batch.states, batch.actions, "q2", tape)
            loss = loss + nx.mean(nx.square(q2 - y))
            q_min = np.minimum(q_min, q2.value)
        if not math.isfinite(float(loss.value)):
            raise NumericError("non-finite critic loss")
        nx.adam_step(self.critics.params(), tape.backward(loss), self.critic_opt)
        return float(loss.value), float(np.mean(q_min))

    def policy_step(self, batch: Batch, noise) -> tuple[float, float]:
        tape = Tape()
        a, logp = sample(self.policy, batch.states, noise, tape)
        q = q_eval(self.critics, batch.states, a, "min-online", tape, trainable=False)
        loss = nx.mean(self.alpha * logp - q)
        if not math.isfinite(float(loss.value)):
            raise NumericError("non-finite policy loss")
        nx.adam_step(self.policy.params(), tape.backward(loss), self.actor_opt)
        return float(loss.value), float(np.mean(logp.value))

    def temperature_step(self, mean_logp: float):
        p = {"log_alpha": np.array([self.log_alpha])}
        g = {"log_alpha": np.array([-(mean_logp + self.target_entropy)])}
        nx.adam_step(p, g, self.alpha_opt)
        self.log_alpha = float(p["log_alpha"][0])

    def update(self, buffer: ReplayBuffer, rng) -> UpdateMetrics:
        batch = buffer.sample(self.config.batch_size, rng)
        d = self.policy.action_dim
        critic_loss, mean_q = self.critic_step(batch, rng.standard_normal((len(batch), d)))
        policy_loss, mean_logp = self.policy_step(batch, rng.standard_normal((len(batch), d)))
        if self.config.auto_alpha:
            self.temperature_step(mean_logp)
        polyak_update(self.critics)
        self.updates += 1
        return UpdateMetrics(critic_loss, policy_loss, mean_q, mean_logp, {}, self.alpha)
