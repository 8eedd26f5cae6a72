"""Replay storage: the agent buffer with hindsight ("future") goal
relabeling and the read-only expert buffer with demonstration relabeling.

Stored transitions are immutable; relabeling happens at sampling time by
swapping the goal for the achieved goal of a later state in the same
episode and recomputing the indicator reward. Episode boundaries are never
crossed.
"""

from collections import deque
from dataclasses import dataclass

import numpy as np

from gcrl.envs import (
    RELABEL_EXPERT,
    RELABEL_HER_FUTURE,
    RELABEL_ORIGINAL,
    Trajectory,
)
from gcrl.errors import ConfigError, StateOnlyDemoError

DEFAULT_CAPACITY = 1_000_000


@dataclass
class Batch:
    """Sampled transitions as parallel arrays. ``a`` is None when the source
    holds state-only demonstrations. ``g_orig``/``idx``/``future_idx`` expose
    the pre-relabel goal and storage indices for diagnostics."""

    s: np.ndarray
    a: np.ndarray | None
    s2: np.ndarray
    g: np.ndarray
    r: np.ndarray
    done: np.ndarray
    relabeled: np.ndarray
    g_orig: np.ndarray
    idx: np.ndarray
    future_idx: np.ndarray

    def __len__(self) -> int:
        return self.s.shape[0]


class _FlatStore:
    """Transitions of whole episodes in flat preallocated arrays.

    ``fut_hi[i]`` is one past the last transition of episode containing
    transition i, so future-relabel candidates for i are exactly
    ``ag2[i:fut_hi[i]]`` (the achieved goals of strictly later states).
    """

    def __init__(self, env, capacity, store_actions):
        self.env = env
        self.capacity = int(capacity)
        spec = env.spec
        size = self.capacity + spec.horizon  # slack so one episode always fits
        self._s = np.empty((size, spec.state_dim))
        self._a = np.empty((size, spec.action_dim)) if store_actions else None
        self._s2 = np.empty((size, spec.state_dim))
        self._g = np.empty((size, spec.goal_dim))
        self._ag2 = np.empty((size, spec.goal_dim))
        self._r = np.empty(size)
        self._done = np.empty(size, dtype=bool)
        self._fut_hi = np.empty(size, dtype=np.int64)
        self._lo = 0
        self._hi = 0
        self._episode_lengths = deque()

    @property
    def size(self) -> int:
        return self._hi - self._lo

    def _compact(self):
        span = self.size
        for arr in (self._s, self._a, self._s2, self._g, self._ag2, self._r,
                    self._done):
            if arr is not None:
                arr[:span] = arr[self._lo : self._hi]
        self._fut_hi[:span] = self._fut_hi[self._lo : self._hi] - self._lo
        self._lo, self._hi = 0, span

    def append(self, traj: Trajectory):
        n = traj.length
        if n > self.capacity:
            raise ValueError(f"episode of {n} transitions exceeds capacity {self.capacity}")
        if self._hi + n > self._s.shape[0]:
            self._compact()
        lo, hi = self._hi, self._hi + n
        states = np.asarray(traj.states, dtype=np.float64)
        self._s[lo:hi] = states[:-1]
        self._s2[lo:hi] = states[1:]
        if self._a is not None:
            self._a[lo:hi] = np.asarray(traj.actions, dtype=np.float64)
        self._g[lo:hi] = traj.goal
        self._ag2[lo:hi] = self.env.achieved_goal(states[1:])
        self._r[lo:hi] = self.env.success(states[1:], traj.goal).astype(np.float64)
        self._done[lo:hi] = False
        self._done[hi - 1] = True
        self._fut_hi[lo:hi] = hi
        self._hi = hi
        self._episode_lengths.append(n)
        while self.size > self.capacity:
            self._lo += self._episode_lengths.popleft()

    def gather(self, idx, relabel_mask, future_u, tag):
        """Assemble a batch for storage indices ``idx``; rows where
        ``relabel_mask`` holds get the achieved goal of a strictly later
        state of their episode, chosen uniformly via ``future_u``."""
        span = self._fut_hi[idx] - idx
        future = idx + np.floor(future_u * span).astype(np.int64)
        g = np.where(relabel_mask[:, None], self._ag2[future], self._g[idx])
        r = self.env.success(self._s2[idx], g).astype(np.float64)
        return Batch(
            s=self._s[idx].copy(),
            a=None if self._a is None else self._a[idx].copy(),
            s2=self._s2[idx].copy(),
            g=g,
            r=r,
            done=self._done[idx].copy(),
            relabeled=np.where(relabel_mask, tag, RELABEL_ORIGINAL).astype(np.int8),
            g_orig=self._g[idx].copy(),
            idx=idx.copy(),
            future_idx=np.where(relabel_mask, future, -1),
        )


class ReplayBuffer:
    """FIFO agent buffer; sampling applies the hindsight "future" strategy
    with probability ``hindsight_p`` per transition."""

    def __init__(self, env, capacity=DEFAULT_CAPACITY):
        self._store = _FlatStore(env, capacity, store_actions=True)

    @property
    def size(self) -> int:
        return self._store.size

    def insert(self, traj: Trajectory) -> None:
        traj.validate(self._store.env.spec, require_actions=True)
        self._store.append(traj)

    def sample(self, batch_size, rng, hindsight_p) -> Batch:
        if self.size == 0:
            raise ValueError("cannot sample from an empty replay buffer")
        store = self._store
        idx = store._lo + rng.integers(0, store.size, size=batch_size)
        relabel = rng.random(batch_size) < hindsight_p
        future_u = rng.random(batch_size)
        return store.gather(idx, relabel, future_u, RELABEL_HER_FUTURE)


class ExpertBuffer:
    """Read-only buffer over a demonstration set. When ``relabel_enabled``,
    every sampled transition is re-goaled to a strictly later achieved state
    of its demonstration; otherwise the recorded goal is kept. The indicator
    reward is recomputed either way."""

    def __init__(self, env, demos, relabel_enabled=True):
        from gcrl.experts import spec_hash

        if demos.env_name != env.spec.name or demos.spec_hash != spec_hash(env.spec):
            raise ConfigError(
                f"demo set was recorded on {demos.env_name!r} "
                f"(hash {demos.spec_hash}) but the environment is "
                f"{env.spec.name!r} (hash {spec_hash(env.spec)})"
            )
        self.state_only = demos.state_only
        self.relabel_enabled = bool(relabel_enabled)
        total = sum(t.length for t in demos.trajectories)
        self._store = _FlatStore(env, total, store_actions=not self.state_only)
        for traj in demos.trajectories:
            traj.validate(env.spec, require_actions=not self.state_only)
            self._store.append(traj)

    @property
    def size(self) -> int:
        return self._store.size

    def sample(self, batch_size, rng, require_actions=False, consumer="") -> Batch:
        if require_actions and self.state_only:
            raise StateOnlyDemoError(
                f"{consumer or 'a consumer'} requires expert actions but the "
                "demonstrations are state-only"
            )
        if self.size == 0:
            raise ValueError("expert buffer is empty")
        store = self._store
        idx = store._lo + rng.integers(0, store.size, size=batch_size)
        if self.relabel_enabled:
            future_u = rng.random(batch_size)
            mask = np.ones(batch_size, dtype=bool)
            return store.gather(idx, mask, future_u, RELABEL_EXPERT)
        mask = np.zeros(batch_size, dtype=bool)
        return store.gather(idx, mask, np.zeros(batch_size), RELABEL_EXPERT)
