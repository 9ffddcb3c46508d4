"""Fixed-capacity uniform replay buffer."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import NotReadyError, ShapeError, UsageError


@dataclass
class Transition:
    state: np.ndarray
    action: np.ndarray
    reward: float
    next_state: np.ndarray
    done: bool  # genuine terminal only; time-limit truncation stays False


@dataclass(frozen=True)
class Batch:
    states: np.ndarray
    actions: np.ndarray
    rewards: np.ndarray
    next_states: np.ndarray
    dones: np.ndarray

    def __len__(self):
        return self.rewards.shape[0]


class ReplayBuffer:
    """Ring buffer; the oldest record is overwritten first."""

    def __init__(self, capacity: int, state_dim: int, action_dim: int):
        if capacity < 1:
            raise UsageError("capacity must be >= 1")
        self.capacity = int(capacity)
        self.state_dim = state_dim
        self.action_dim = action_dim
        self._s = np.zeros((capacity, state_dim))
        self._a = np.zeros((capacity, action_dim))
        self._r = np.zeros(capacity)
        self._s2 = np.zeros((capacity, state_dim))
        self._d = np.zeros(capacity)
        self.size = 0
        self.cursor = 0

    def __len__(self):
        return self.size

    def push(self, t: Transition) -> None:
        s = np.asarray(t.state, dtype=np.float64)
        a = np.asarray(t.action, dtype=np.float64)
        s2 = np.asarray(t.next_state, dtype=np.float64)
        if s.shape != (self.state_dim,) or s2.shape != (self.state_dim,):
            raise ShapeError(f"state width must be {self.state_dim}")
        if a.shape != (self.action_dim,):
            raise ShapeError(f"action width must be {self.action_dim}")
        if not np.isfinite(t.reward):
            raise ShapeError("reward must be finite")
        i = self.cursor
        self._s[i] = s
        self._a[i] = a
        self._r[i] = t.reward
        self._s2[i] = s2
        self._d[i] = float(bool(t.done))
        self.cursor = (i + 1) % self.capacity
        self.size = min(self.size + 1, self.capacity)

    def _gather(self, idx) -> Batch:
        return Batch(self._s[idx], self._a[idx], self._r[idx], self._s2[idx], self._d[idx])

    def sample(self, batch_size: int, rng: np.random.Generator) -> Batch:
        """Uniform with replacement over stored records."""
        if self.size < batch_size:
            raise NotReadyError(f"buffer holds {self.size} records, batch needs {batch_size}")
        return self._gather(rng.integers(0, self.size, size=batch_size))

    def contents(self) -> Batch:
        """All stored records, oldest first."""
        if self.size < self.capacity:
            idx = np.arange(self.size)
        else:
            idx = (np.arange(self.capacity) + self.cursor) % self.capacity
        return self._gather(idx)

    def state_dict(self) -> dict[str, np.ndarray]:
        n = self.size
        return {
            "s": self._s[:n].copy(),
            "a": self._a[:n].copy(),
            "r": self._r[:n].copy(),
            "s2": self._s2[:n].copy(),
            "d": self._d[:n].copy(),
            "meta": np.array([self.capacity, self.size, self.cursor]),
        }

    @classmethod
    def from_state_dict(cls, sd) -> ReplayBuffer:
        capacity, size, cursor = (int(x) for x in sd["meta"])
        buf = cls(capacity, sd["s"].shape[1], sd["a"].shape[1])
        buf._s[:size] = sd["s"]
        buf._a[:size] = sd["a"]
        buf._r[:size] = sd["r"]
        buf._s2[:size] = sd["s2"]
        buf._d[:size] = sd["d"]
        buf.size, buf.cursor = size, cursor
        return buf
