"""Small deterministic continuous-control environments.

Both environments follow a gym-like ``reset(seed) -> state`` /
``step(action) -> StepResult`` contract and are pure functions of
(seed, action sequence).

``QuadraticBandit``
    Single-state bandit, reward ``-||a - a*||^2``, every step terminal and
    actions unbounded.  With temperature ``alpha`` the max-entropy optimum is
    ``N(a*, alpha/2 * I)``.

``ChainReacher``
    Planar arm of ``k`` unit links driven by joint accelerations.  State is
    ``[theta_1..k, theta_dot_1..k, target_x, target_y]``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Any, Mapping

import numpy as np

from .errors import ShapeError, UsageError
from .numerics import seeded_rng


@dataclass(frozen=True)
class EnvSpec:
    name: str
    state_dim: int
    action_dim: int
    action_low: np.ndarray
    action_high: np.ndarray
    max_episode_steps: int
    squash: str  # "tanh" or "off"

    def __post_init__(self):
        if self.state_dim <= 0 or self.action_dim <= 0:
            raise UsageError("environment dims must be positive")
        if self.squash not in ("tanh", "off"):
            raise UsageError(f"squash must be 'tanh' or 'off', got {self.squash!r}")
        if self.squash == "tanh" and not (
            np.all(np.isfinite(self.action_low)) and np.all(np.isfinite(self.action_high))
        ):
            raise UsageError("tanh-squashed environments need finite action bounds")


@dataclass
class StepResult:
    next_state: np.ndarray
    reward: float
    terminal: bool
    truncated: bool


class Env:
    spec: EnvSpec

    def __init__(self):
        self._state: np.ndarray | None = None
        self._t = 0
        self._ended = True

    @property
    def state(self) -> np.ndarray:
        if self._state is None:
            raise UsageError("environment has not been reset")
        return self._state.copy()

    @property
    def episode_ended(self) -> bool:
        return self._ended

    def _check_action(self, action) -> np.ndarray:
        if self._state is None or self._ended:
            raise UsageError("step() after the episode ended; call reset() first")
        a = np.asarray(action, dtype=np.float64)
        if a.shape != (self.spec.action_dim,):
            raise ShapeError(f"action shape {a.shape}, expected ({self.spec.action_dim},)")
        if not np.all(np.isfinite(a)):
            raise UsageError("non-finite action")
        return a

    def reset(self, seed: int) -> np.ndarray:
        raise NotImplementedError

    def step(self, action) -> StepResult:
        raise NotImplementedError


class QuadraticBandit(Env):
    def __init__(self, d: int = 2, a_star=None, bound: float = 1.0, seed: int = 0):
        super().__init__()
        if a_star is None:
            a_star = seeded_rng(seed).uniform(-bound, bound, size=d)
        self.a_star = np.asarray(a_star, dtype=np.float64).reshape(d)
        if np.max(np.abs(self.a_star)) > bound:
            raise UsageError(f"|a*| exceeds bound {bound}")
        self.bound = float(bound)
        self.spec = EnvSpec(
            "quadratic-bandit", 1, d, np.full(d, -bound), np.full(d, bound), 1, "off"
        )

    def reset(self, seed: int = 0) -> np.ndarray:
        self._state = np.zeros(1)
        self._t = 0
        self._ended = False
        return self.state

    def step(self, action) -> StepResult:
        a = self._check_action(action)
        diff = a - self.a_star
        self._t += 1
        self._ended = True
        return StepResult(self.state, -float(diff @ diff), True, False)


def forward_kinematics(theta) -> np.ndarray:
    """End-effector of a planar chain of unit links."""
    phi = np.cumsum(theta)
    return np.array([np.cos(phi).sum(), np.sin(phi).sum()])


class ChainReacher(Env):
    """Planar k-link arm with acceleration control.

    Targets are reachable arm poses: the tip position for joint angles drawn
    from U[-target_range, target_range]^k.  With the default 0.25 a
    time-optimal joint-space controller averages about -6 return on k=4.
    """

    dt = 0.05
    max_speed = 1.0
    tolerance = 0.05
    control_cost = 0.01

    def __init__(self, k: int = 2, max_steps: int = 200, target_range: float = 0.25):
        super().__init__()
        self.k = int(k)
        if self.k < 1:
            raise UsageError("chain-reacher needs k >= 1")
        self.target_range = float(target_range)
        self.spec = EnvSpec(
            "chain-reacher", 2 * self.k + 2, self.k,
            -np.ones(self.k), np.ones(self.k), int(max_steps), "tanh",
        )

    def set_state(self, theta, theta_dot, target) -> np.ndarray:
        self._state = np.concatenate([
            np.asarray(theta, dtype=np.float64),
            np.asarray(theta_dot, dtype=np.float64),
            np.asarray(target, dtype=np.float64),
        ])
        if self._state.shape != (self.spec.state_dim,):
            raise ShapeError(f"state width {self._state.shape[0]} != {self.spec.state_dim}")
        self._t = 0
        self._ended = False
        return self.state

    def reset(self, seed: int = 0) -> np.ndarray:
        """Joints in U[-0.1, 0.1]^k at rest; target = arm tip at U[-r, r]^k joints."""
        rng = seeded_rng(seed)
        theta = rng.uniform(-0.1, 0.1, size=self.k)
        target = forward_kinematics(
            rng.uniform(-self.target_range, self.target_range, size=self.k)
        )
        return self.set_state(theta, np.zeros(self.k), target)

    def step(self, action) -> StepResult:
        a = np.clip(self._check_action(action), -1.0, 1.0)
        k = self.k
        s = self._state
        theta_dot = np.clip(s[k:2 * k] + self.dt * a, -self.max_speed, self.max_speed)
        theta = s[:k] + self.dt * theta_dot
        target = s[2 * k:]
        dist = float(np.linalg.norm(forward_kinematics(theta) - target))
        reward = -dist - self.control_cost * float(a @ a)
        self._state = np.concatenate([theta, theta_dot, target])
        self._t += 1
        terminal = dist < self.tolerance
        truncated = not terminal and self._t >= self.spec.max_episode_steps
        self._ended = terminal or truncated
        return StepResult(self.state, reward, terminal, truncated)


ENV_NAMES = ("quadratic-bandit", "chain-reacher")


_ENV_PARAMS = {
    "quadratic-bandit": {"d", "a_star", "bound"},
    "chain-reacher": {"k", "max_steps", "target_range"},
}


def make_env(name: str, params: Mapping[str, Any] | None = None, seed: int = 0) -> Env:
    params = dict(params or {})
    if name not in _ENV_PARAMS:
        hint = ""
        if any(tag in name.lower() for tag in ("hopper", "walker", "humanoid", "-v")):
            hint = " (MuJoCo/Gym environments are out of scope and not bundled)"
        raise UsageError(f"unknown environment {name!r}{hint}; available: {', '.join(ENV_NAMES)}")
    extra = set(params) - _ENV_PARAMS[name]
    if extra:
        raise UsageError(f"unknown parameters for {name}: {sorted(extra)}")
    if name == "quadratic-bandit":
        return QuadraticBandit(
            d=int(params.get("d", 2)),
            a_star=params.get("a_star"),
            bound=float(params.get("bound", 1.0)),
            seed=seed,
        )
    return ChainReacher(
        k=int(params.get("k", 2)),
        max_steps=int(params.get("max_steps", 200)),
        target_range=float(params.get("target_range", 0.25)),
    )
