"""Shared soft Q-critic: twin online networks with Polyak-averaged targets."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import numerics as nx
from .errors import ShapeError, UsageError
from .numerics import MlpParams, Tape, Var
from .policy import JointPolicy, joint_sample

WHICH = ("q1", "q2", "min-online", "min-target")


@dataclass
class CriticEnsemble:
    q1: MlpParams
    q2: MlpParams | None
    target_q1: MlpParams
    target_q2: MlpParams | None
    tau: float = 0.005

    @property
    def twin(self) -> bool:
        return self.q2 is not None

    @property
    def input_dim(self) -> int:
        return self.q1.in_dim

    def params(self) -> dict[str, np.ndarray]:
        out = self.q1.named("q1/")
        if self.twin:
            out.update(self.q2.named("q2/"))
        return out

    def target_params(self) -> dict[str, np.ndarray]:
        out = self.target_q1.named("q1/")
        if self.twin:
            out.update(self.target_q2.named("q2/"))
        return out


def make_critics(
    state_dim: int,
    action_dim: int,
    rng: np.random.Generator,
    hidden_sizes: Sequence[int] = (256, 256),
    activation: str = "relu",
    tau: float = 0.005,
    twin: bool = True,
) -> CriticEnsemble:
    sizes = [state_dim + action_dim, *hidden_sizes, 1]
    q1 = nx.init_mlp(sizes, rng, activation)
    q2 = nx.init_mlp(sizes, rng, activation) if twin else None
    return CriticEnsemble(q1, q2, q1.copy(), q2.copy() if twin else None, tau)


def _q(net: MlpParams, inp, tape, prefix, trainable):
    out = nx.mlp_forward(net, inp, tape, prefix=prefix, trainable=trainable)
    if tape is None:
        return out[..., 0]
    return nx.columns(out, 0)


def q_eval(
    ens: CriticEnsemble,
    state,
    action,
    which: str = "min-online",
    tape: Tape | None = None,
    trainable: bool = True,
):
    """Q estimate for a batch of (state, joint action) pairs.

    Without a tape returns an ndarray of shape (batch,); with a tape returns a
    Var.  ``trainable=False`` treats critic weights as constants on the tape,
    so only ``action`` (if tracked) receives gradient.
    """
    if which not in WHICH:
        raise UsageError(f"which must be one of {WHICH}, got {which!r}")
    sv = state.value if isinstance(state, Var) else nx.as_tensor(state)
    av = action.value if isinstance(action, Var) else nx.as_tensor(action)
    if sv.shape[-1] + av.shape[-1] != ens.input_dim:
        raise ShapeError(
            f"critic expects state+action width {ens.input_dim}, got {sv.shape[-1]}+{av.shape[-1]}"
        )
    if tape is None:
        inp = np.concatenate([sv, av], axis=-1)
    else:
        inp = nx.concat([state, action], axis=-1)
    if which == "q1":
        return _q(ens.q1, inp, tape, "q1/", trainable)
    if which == "q2":
        if not ens.twin:
            raise UsageError("single critic has no q2")
        return _q(ens.q2, inp, tape, "q2/", trainable)
    if which == "min-online":
        nets = (ens.q1, ens.q2)
    else:
        nets = (ens.target_q1, ens.target_q2)
        tape = None
    a = _q(nets[0], inp, tape, "q1/", trainable)
    if nets[1] is None:
        return a
    b = _q(nets[1], inp, tape, "q2/", trainable)
    if tape is None:
        return np.minimum(a, b)
    return nx.minimum(a, b)


def soft_value(
    ens: CriticEnsemble,
    policy: JointPolicy,
    next_state,
    noise,
    alpha: float,
) -> np.ndarray:
    """Single-sample soft value: min-target Q minus (alpha/m) * sum of node log-probs."""
    if alpha < 0:
        raise UsageError("alpha must be >= 0")
    sample = joint_sample(policy, next_state, noise)
    q = q_eval(ens, next_state, sample.action, "min-target")
    return q - (alpha / policy.m) * sample.log_prob


def polyak_update(ens: CriticEnsemble, tau: float | None = None) -> CriticEnsemble:
    """target <- tau * online + (1 - tau) * target, in place."""
    tau = ens.tau if tau is None else tau
    if not 0.0 < tau <= 1.0:
        raise UsageError(f"polyak tau must be in (0, 1], got {tau}")
    online = ens.params()
    for key, t in ens.target_params().items():
        t *= 1.0 - tau
        t += tau * online[key]
    return ens
