"""Deterministic continuous goal-conditioned environments.

Two 2D tasks: a four-room arena with doorways (``four_rooms``) and a
pointmass pushing a block (``block_pusher``). Environments are pure
transition functions over explicit state: ``step`` takes and returns state
arrays and never touches the goal, which is what licenses hindsight
relabeling. Batched variants evaluate many rollouts at once.
"""

from dataclasses import dataclass

import numpy as np

from gcrl.errors import ConfigError, NumericError

# relabel provenance tags carried by transitions
RELABEL_ORIGINAL = 0
RELABEL_HER_FUTURE = 1
RELABEL_EXPERT = 2
RELABEL_TAGS = ("original", "her_future", "expert_relabel")

SOURCE_AGENT = "agent"
SOURCE_EXPERT = "expert"


@dataclass(frozen=True)
class EnvSpec:
    """Dimensions, bounds and episode constants of one environment."""

    name: str
    state_dim: int
    action_dim: int
    goal_dim: int
    action_bound: float
    horizon: int
    success_radius: float

    @property
    def gamma(self) -> float:
        return 1.0 - 1.0 / self.horizon


@dataclass
class Transition:
    """One environment step (s, a, s2, g, r) with relabel provenance."""

    s: np.ndarray
    a: np.ndarray
    s2: np.ndarray
    g: np.ndarray
    r: float
    done: bool
    relabeled: str = "original"


@dataclass
class Trajectory:
    """Ordered steps of one episode: states has T+1 rows, actions T rows
    (or None for state-only demonstrations). Consecutive states chain by
    construction."""

    states: np.ndarray
    actions: np.ndarray | None
    goal: np.ndarray
    source: str = SOURCE_AGENT

    @property
    def length(self) -> int:
        return self.states.shape[0] - 1

    def validate(self, spec: EnvSpec, require_actions: bool = True) -> None:
        states = np.asarray(self.states)
        if states.ndim != 2 or states.shape[1] != spec.state_dim or states.shape[0] < 2:
            raise ValueError(
                f"trajectory states have shape {states.shape}, expected "
                f"(T+1>=2, {spec.state_dim})"
            )
        if not np.isfinite(states).all():
            raise NumericError("trajectory contains non-finite states")
        if self.length > spec.horizon:
            raise ValueError(
                f"trajectory length {self.length} exceeds horizon {spec.horizon}"
            )
        if np.asarray(self.goal).shape != (spec.goal_dim,):
            raise ValueError("trajectory goal has wrong dimension")
        if self.actions is not None:
            acts = np.asarray(self.actions)
            if acts.shape != (self.length, spec.action_dim):
                raise ValueError(
                    f"trajectory actions have shape {acts.shape}, expected "
                    f"({self.length}, {spec.action_dim})"
                )
            if not np.isfinite(acts).all():
                raise NumericError("trajectory contains non-finite actions")
        elif require_actions:
            raise ValueError("trajectory is state-only but actions are required")


# ------------------------------------------------------------ four rooms

ARENA = 1.0
WALL_HALF = 0.025
DOOR_HALF = 0.1
_W = WALL_HALF

# Axis-aligned rectangles (xmin, xmax, ymin, ymax) whose open interiors are
# impassable. Wall bands are split around the doors (|center| = 0.5, width
# 0.2) and extended past the arena edge so the border cannot be slid over;
# four border slabs keep motion inside [-1, 1]^2.
_MOTION_RECTS = (
    (-_W, _W, -2.0, -0.6),
    (-_W, _W, -0.4, 0.4),
    (-_W, _W, 0.6, 2.0),
    (-2.0, -0.6, -_W, _W),
    (-0.4, 0.4, -_W, _W),
    (0.6, 2.0, -_W, _W),
    (ARENA, 2.0, -2.0, 2.0),
    (-2.0, -ARENA, -2.0, 2.0),
    (-2.0, 2.0, ARENA, 2.0),
    (-2.0, 2.0, -2.0, -ARENA),
)

# the same walls clipped to the arena, for sampling and plotting
WALL_RECTS = (
    (-_W, _W, -1.0, -0.6),
    (-_W, _W, -0.4, 0.4),
    (-_W, _W, 0.6, 1.0),
    (-1.0, -0.6, -_W, _W),
    (-0.4, 0.4, -_W, _W),
    (0.6, 1.0, -_W, _W),
)

# rooms indexed 0: top-right, 1: top-left, 2: bottom-left, 3: bottom-right
DOORS = {
    (0, 1): np.array([0.0, 0.5]),
    (2, 3): np.array([0.0, -0.5]),
    (1, 2): np.array([-0.5, 0.0]),
    (0, 3): np.array([0.5, 0.0]),
}
ROOM_NEIGHBORS = {0: (1, 3), 1: (0, 2), 2: (1, 3), 3: (0, 2)}


def door_center(room_a: int, room_b: int) -> np.ndarray:
    key = (room_a, room_b) if (room_a, room_b) in DOORS else (room_b, room_a)
    return DOORS[key]


def in_wall(points) -> np.ndarray:
    """True where a point lies inside a wall band (closed test, arena part)."""
    pts = np.atleast_2d(points)
    hit = np.zeros(pts.shape[0], dtype=bool)
    for x0, x1, y0, y1 in WALL_RECTS:
        hit |= (
            (pts[:, 0] >= x0) & (pts[:, 0] <= x1)
            & (pts[:, 1] >= y0) & (pts[:, 1] <= y1)
        )
    return hit if np.ndim(points) == 2 else bool(hit[0])


def room_of(points) -> np.ndarray:
    """Quadrant index of a point (door zones resolve by coordinate sign)."""
    pts = np.atleast_2d(points)
    right = pts[:, 0] >= 0.0
    top = pts[:, 1] >= 0.0
    rooms = np.where(top, np.where(right, 0, 1), np.where(right, 3, 2))
    return rooms if np.ndim(points) == 2 else int(rooms[0])


def _clip_motion_single(px, py, dx, dy):
    """Scalar twin of ``_clip_motion_batch``: first wall contact truncates
    the normal component, the lateral remainder slides along the face."""
    best_t = np.inf
    best_axis = -1
    best_face = 0.0
    for x0, x1, y0, y1 in _MOTION_RECTS:
        if dx != 0.0:
            t1 = (x0 - px) / dx
            t2 = (x1 - px) / dx
            tx_lo, tx_hi = (t1, t2) if t1 < t2 else (t2, t1)
        elif x0 < px < x1:
            tx_lo, tx_hi = -np.inf, np.inf
        else:
            continue
        if dy != 0.0:
            t1 = (y0 - py) / dy
            t2 = (y1 - py) / dy
            ty_lo, ty_hi = (t1, t2) if t1 < t2 else (t2, t1)
        elif y0 < py < y1:
            ty_lo, ty_hi = -np.inf, np.inf
        else:
            continue
        if ty_lo > tx_lo:
            t_in, axis = ty_lo, 1
        else:
            t_in, axis = tx_lo, 0
        t_out = tx_hi if tx_hi < ty_hi else ty_hi
        if t_in < t_out and t_out > 0.0 and t_in < 1.0:
            t = t_in if t_in > 0.0 else 0.0
            if t < best_t:
                best_t = t
                best_axis = axis
                if axis == 0:
                    best_face = x0 if dx > 0 else x1
                else:
                    best_face = y0 if dy > 0 else y1
    if best_axis < 0:
        return px + dx, py + dy
    t = best_t
    if best_axis == 0:
        qx = best_face
        qy = py + t * dy
        target = qy + (1.0 - t) * dy
        for x0, x1, y0, y1 in _MOTION_RECTS:
            if x0 < qx < x1:
                if target > qy and qy <= y0 and target > y0:
                    target = y0
                elif target < qy and qy >= y1 and target < y1:
                    target = y1
        return qx, target
    qx = px + t * dx
    qy = best_face
    target = qx + (1.0 - t) * dx
    for x0, x1, y0, y1 in _MOTION_RECTS:
        if y0 < qy < y1:
            if target > qx and qx <= x0 and target > x0:
                target = x0
            elif target < qx and qx >= x1 and target < x1:
                target = x1
    return target, qy


def _clip_motion_batch(p, d):
    n = p.shape[0]
    best_t = np.full(n, np.inf)
    best_axis = np.full(n, -1, dtype=np.intp)
    best_face = np.zeros(n)
    for x0, x1, y0, y1 in _MOTION_RECTS:
        lows = (x0, y0)
        highs = (x1, y1)
        t_lo = np.empty((2, n))
        t_hi = np.empty((2, n))
        for ax in range(2):
            dz = d[:, ax]
            pz = p[:, ax]
            moving = dz != 0.0
            safe = np.where(moving, dz, 1.0)
            t1 = (lows[ax] - pz) / safe
            t2 = (highs[ax] - pz) / safe
            lo = np.minimum(t1, t2)
            hi = np.maximum(t1, t2)
            inside = (pz > lows[ax]) & (pz < highs[ax])
            t_lo[ax] = np.where(moving, lo, np.where(inside, -np.inf, np.inf))
            t_hi[ax] = np.where(moving, hi, np.where(inside, np.inf, -np.inf))
        axis = (t_lo[1] > t_lo[0]).astype(np.intp)
        t_in = np.maximum(t_lo[0], t_lo[1])
        t_out = np.minimum(t_hi[0], t_hi[1])
        hit = (t_in < t_out) & (t_out > 0.0) & (t_in < 1.0)
        t = np.clip(t_in, 0.0, None)
        closer = hit & (t < best_t)
        if not closer.any():
            continue
        face_x = np.where(d[:, 0] > 0, x0, x1)
        face_y = np.where(d[:, 1] > 0, y0, y1)
        face = np.where(axis == 0, face_x, face_y)
        best_t = np.where(closer, t, best_t)
        best_axis = np.where(closer, axis, best_axis)
        best_face = np.where(closer, face, best_face)

    out = p + d
    contact = best_axis >= 0
    if not contact.any():
        return out
    for ax in range(2):
        lane = contact & (best_axis == ax)
        if not lane.any():
            continue
        lat = 1 - ax
        t = best_t[lane]
        fixed = best_face[lane]
        start = p[lane, lat] + t * d[lane, lat]
        target = start + (1.0 - t) * d[lane, lat]
        for rect in _MOTION_RECTS:
            nlo, nhi = (rect[0], rect[1]) if ax == 0 else (rect[2], rect[3])
            llo, lhi = (rect[2], rect[3]) if ax == 0 else (rect[0], rect[1])
            norm_in = (fixed > nlo) & (fixed < nhi)
            up = norm_in & (target > start) & (start <= llo) & (target > llo)
            down = norm_in & (target < start) & (start >= lhi) & (target < lhi)
            target = np.where(up, llo, target)
            target = np.where(down, lhi, target)
        out[lane, ax] = fixed
        out[lane, lat] = target
    return out


class FourRooms:
    """Pointmass in a 2x2 arena split into four rooms by thin walls with one
    door per half-wall. State, action and goal are all 2D; the goal space is
    the free space."""

    def __init__(self):
        self.spec = EnvSpec(
            name="four_rooms",
            state_dim=2,
            action_dim=2,
            goal_dim=2,
            action_bound=0.1,
            horizon=300,
            success_radius=0.1,
        )

    def _sample_free(self, n, rng):
        out = np.empty((n, 2))
        filled = 0
        while filled < n:
            cand = rng.uniform(-ARENA, ARENA, size=(n - filled, 2))
            good = cand[~in_wall(cand)]
            out[filled : filled + good.shape[0]] = good
            filled += good.shape[0]
        return out

    def reset(self, rng) -> np.ndarray:
        return self._sample_free(1, rng)[0]

    def reset_batch(self, n, rng) -> np.ndarray:
        return self._sample_free(n, rng)

    def sample_goal(self, rng) -> np.ndarray:
        return self._sample_free(1, rng)[0]

    def sample_goals(self, n, rng) -> np.ndarray:
        return self._sample_free(n, rng)

    def _clip_action(self, a):
        a = np.asarray(a, dtype=np.float64)
        if not np.isfinite(a).all():
            raise NumericError("non-finite action")
        return np.clip(a, -self.spec.action_bound, self.spec.action_bound)

    def step(self, s, a) -> np.ndarray:
        a = self._clip_action(a)
        return np.array(_clip_motion_single(s[0], s[1], a[0], a[1]))

    def step_batch(self, states, actions) -> np.ndarray:
        a = self._clip_action(actions)
        return _clip_motion_batch(np.asarray(states, dtype=np.float64), a)

    def achieved_goal(self, s) -> np.ndarray:
        return np.asarray(s, dtype=np.float64).copy()

    def success(self, s, g):
        s = np.asarray(s)
        g = np.asarray(g)
        ag = self.achieved_goal(s)
        dist = np.linalg.norm(ag - g, axis=-1)
        return dist <= self.spec.success_radius

    def wall_segments(self) -> np.ndarray:
        """Wall outlines as (x1, y1, x2, y2) rows for plotting."""
        segs = []
        for x0, x1, y0, y1 in WALL_RECTS:
            segs += [
                (x0, y0, x1, y0),
                (x1, y0, x1, y1),
                (x1, y1, x0, y1),
                (x0, y1, x0, y0),
            ]
        return np.array(segs)


# ----------------------------------------------------------- block pusher

POINT_RADIUS = 0.06
BLOCK_HALF = 0.06
BLOCK_SPAWN_HALF = 0.3
# block center may reach the arena edge so any sampled block target is
# reachable within the success radius
_BLOCK_RANGE = ARENA


def _resolve_push(p2, b):
    """Move the block out of the pointmass disc by the minimum translation;
    if the arena pins the block, back the pointmass out instead. Returns
    (point, block)."""
    p2 = p2.copy()
    b = b.copy()
    nearest = np.clip(p2, b - BLOCK_HALF, b + BLOCK_HALF)
    delta = p2 - nearest
    dist = np.sqrt(delta[0] ** 2 + delta[1] ** 2)
    if dist >= POINT_RADIUS:
        return p2, b
    if dist > 0.0:
        u = delta / dist
        b = b - u * (POINT_RADIUS - dist)
    else:
        pen = BLOCK_HALF + POINT_RADIUS - np.abs(p2 - b)
        axis = 0 if pen[0] <= pen[1] else 1
        sign = 1.0 if p2[axis] <= b[axis] else -1.0
        b[axis] = b[axis] + sign * pen[axis]
    b = np.clip(b, -_BLOCK_RANGE, _BLOCK_RANGE)
    nearest = np.clip(p2, b - BLOCK_HALF, b + BLOCK_HALF)
    delta = p2 - nearest
    dist = np.sqrt(delta[0] ** 2 + delta[1] ** 2)
    if dist < POINT_RADIUS:
        if dist > 0.0:
            p2 = nearest + delta / dist * POINT_RADIUS
        else:
            pen = BLOCK_HALF + POINT_RADIUS - np.abs(p2 - b)
            axis = 0 if pen[0] <= pen[1] else 1
            sign = -1.0 if p2[axis] <= b[axis] else 1.0
            p2[axis] = p2[axis] + sign * pen[axis]
        p2 = np.clip(p2, -ARENA, ARENA)
    return p2, b


class BlockPusher:
    """Pointmass block pusher: the disc-shaped pointmass displaces the
    square block only while overlapping it. State is (point, block); the
    4D goal is (block target, point target)."""

    def __init__(self):
        self.spec = EnvSpec(
            name="block_pusher",
            state_dim=4,
            action_dim=2,
            goal_dim=4,
            action_bound=0.1,
            horizon=100,
            success_radius=0.15,
        )

    def reset(self, rng) -> np.ndarray:
        block = rng.uniform(-BLOCK_SPAWN_HALF, BLOCK_SPAWN_HALF, size=2)
        while True:
            point = rng.uniform(-ARENA, ARENA, size=2)
            nearest = np.clip(point, block - BLOCK_HALF, block + BLOCK_HALF)
            if np.linalg.norm(point - nearest) >= POINT_RADIUS + 0.005:
                break
        return np.concatenate([point, block])

    def reset_batch(self, n, rng) -> np.ndarray:
        return np.stack([self.reset(rng) for _ in range(n)])

    def sample_goal(self, rng) -> np.ndarray:
        return rng.uniform(-ARENA, ARENA, size=4)

    def sample_goals(self, n, rng) -> np.ndarray:
        return rng.uniform(-ARENA, ARENA, size=(n, 4))

    def _clip_action(self, a):
        a = np.asarray(a, dtype=np.float64)
        if not np.isfinite(a).all():
            raise NumericError("non-finite action")
        return np.clip(a, -self.spec.action_bound, self.spec.action_bound)

    def step(self, s, a) -> np.ndarray:
        a = self._clip_action(a)
        p2 = np.clip(s[:2] + a, -ARENA, ARENA)
        p2, b2 = _resolve_push(p2, np.asarray(s[2:4], dtype=np.float64))
        return np.concatenate([p2, b2])

    def step_batch(self, states, actions) -> np.ndarray:
        states = np.asarray(states, dtype=np.float64)
        actions = self._clip_action(actions)
        out = np.empty_like(states)
        for i in range(states.shape[0]):
            out[i] = self.step(states[i], actions[i])
        return out

    def achieved_goal(self, s) -> np.ndarray:
        s = np.asarray(s, dtype=np.float64)
        return np.concatenate([s[..., 2:4], s[..., 0:2]], axis=-1)

    def success(self, s, g):
        ag = self.achieved_goal(s)
        g = np.asarray(g)
        block_ok = np.linalg.norm(ag[..., 0:2] - g[..., 0:2], axis=-1) <= self.spec.success_radius
        point_ok = np.linalg.norm(ag[..., 2:4] - g[..., 2:4], axis=-1) <= self.spec.success_radius
        return block_ok & point_ok


ENV_NAMES = ("four_rooms", "block_pusher")


def make_env(name: str):
    if name == "four_rooms":
        return FourRooms()
    if name == "block_pusher":
        return BlockPusher()
    raise ConfigError(f"unknown environment {name!r}; valid names: {', '.join(ENV_NAMES)}")
