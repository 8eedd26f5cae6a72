"""Scripted goal-reaching controllers, the sub-optimal corruption wrapper
and demonstration recording/serialization.

The four-rooms expert walks the room-graph shortest path through door
centers; the pusher expert runs three phases (get behind the block, push
it to its target, move to the rest position) with detours around the
block. Both are deterministic functions of (state, goal).
"""

import hashlib
import json
from dataclasses import dataclass

import numpy as np

from gcrl import envs
from gcrl.envs import (
    BLOCK_HALF,
    POINT_RADIUS,
    SOURCE_EXPERT,
    Trajectory,
    door_center,
    room_of,
)

DEMO_FORMAT = "gcrl-demos"
DEMO_VERSION = 1


@dataclass(frozen=True)
class NoisyExpertConfig:
    """Sub-optimal expert corruption: with probability ``epsilon`` a uniform
    random action, otherwise the optimal action plus Gaussian noise of
    standard deviation ``sigma`` (clipped to the action box)."""

    epsilon: float = 0.0
    sigma: float = 0.0

    @property
    def is_noiseless(self) -> bool:
        return self.epsilon == 0.0 and self.sigma == 0.0


# per-environment sub-optimal expert settings used by the robustness study
NOISY_EXPERT_DEFAULTS = {
    "four_rooms": NoisyExpertConfig(epsilon=0.4, sigma=1.5),
    "block_pusher": NoisyExpertConfig(epsilon=0.5, sigma=0.3),
}


def step_toward(pos, target, bound) -> np.ndarray:
    """Largest box-bounded step along the straight line to ``target``
    (direction preserved; lands exactly when within reach)."""
    v = np.asarray(target, dtype=np.float64) - np.asarray(pos, dtype=np.float64)
    m = np.max(np.abs(v))
    if m <= bound:
        return v
    return v * (bound / m)


def noisy_expert_action(optimal, cfg: NoisyExpertConfig, rng, bound) -> np.ndarray:
    """Apply the epsilon-greedy/Gaussian corruption to an optimal action."""
    optimal = np.asarray(optimal, dtype=np.float64)
    if rng.random() < cfg.epsilon:
        return rng.uniform(-bound, bound, size=optimal.shape)
    noisy = optimal + rng.normal(0.0, cfg.sigma, size=optimal.shape) if cfg.sigma > 0 else optimal
    return np.clip(noisy, -bound, bound)


# ------------------------------------------------------------- four rooms

_DOOR_PASS = envs.WALL_HALF + 0.01


def four_rooms_route(start_room: int, goal_room: int):
    """Breadth-first room-graph route; returns [(door_center, next_room)]."""
    if start_room == goal_room:
        return []
    parent = {start_room: None}
    queue = [start_room]
    while queue:
        room = queue.pop(0)
        if room == goal_room:
            break
        for nxt in envs.ROOM_NEIGHBORS[room]:
            if nxt not in parent:
                parent[nxt] = room
                queue.append(nxt)
    rooms = [goal_room]
    while parent[rooms[-1]] is not None:
        rooms.append(parent[rooms[-1]])
    rooms.reverse()
    return [(door_center(a, b), b) for a, b in zip(rooms[:-1], rooms[1:])]


class FourRoomsExpert:
    """Waypoint controller: move straight at the goal within a room, else
    through the centers of the doors on the room-graph shortest path."""

    def __init__(self, env):
        self.env = env
        self.bound = env.spec.action_bound

    def plan(self, s, g):
        """Door-center waypoints between the current and the goal room."""
        return [door for door, _ in four_rooms_route(room_of(s), room_of(g))]

    def action(self, s, g) -> np.ndarray:
        route = four_rooms_route(room_of(s), room_of(g))
        if not route:
            return step_toward(s, g, self.bound)
        door, next_room = route[0]
        # aim slightly past the door center so the room transition completes
        offset = np.zeros(2)
        axis = 0 if door[0] == 0.0 else 1
        positive = next_room in ((0, 3) if axis == 0 else (0, 1))
        offset[axis] = _DOOR_PASS if positive else -_DOOR_PASS
        return step_toward(s, door + offset, self.bound)

    __call__ = action


# ----------------------------------------------------------- block pusher

_PUSH_TOL = 0.05
_AXIS_TOL = 0.02
_GAP = 0.005
_CLEAR_NAV = POINT_RADIUS + 0.002
_CLEAR_REST = POINT_RADIUS + 0.005
_CORNER = BLOCK_HALF + POINT_RADIUS + 0.015

_COMPASS = [
    np.array([np.cos(t), np.sin(t)])
    for t in np.linspace(0.0, 2.0 * np.pi, 16, endpoint=False)
]


def _support(u) -> float:
    """Half-extent of the block along direction ``u`` (unit vector)."""
    return BLOCK_HALF * (abs(u[0]) + abs(u[1]))


def _segment_segment_distance(ax, ay, bx, by, cx, cy, dx, dy) -> float:
    """Exact distance between segments AB and CD."""
    ux, uy = bx - ax, by - ay
    vx, vy = dx - cx, dy - cy
    wx, wy = ax - cx, ay - cy
    a = ux * ux + uy * uy
    b = ux * vx + uy * vy
    c = vx * vx + vy * vy
    d = ux * wx + uy * wy
    e = vx * wx + vy * wy
    denom = a * c - b * b
    if denom > 1e-18:
        s = (b * e - c * d) / denom
        t = (a * e - b * d) / denom
    else:
        s, t = 0.0, (e / c if c > 1e-18 else 0.0)
    s = min(1.0, max(0.0, s))
    # re-clamp t for the clamped s, then s for the clamped t
    t = (b * s + e) / c if c > 1e-18 else 0.0
    t = min(1.0, max(0.0, t))
    s = (b * t - d) / a if a > 1e-18 else 0.0
    s = min(1.0, max(0.0, s))
    px, py = ax + s * ux - (cx + t * vx), ay + s * uy - (cy + t * vy)
    return (px * px + py * py) ** 0.5


def _segment_box_distance(ax, ay, cx, cy, x0, x1, y0, y1) -> float:
    """Exact distance between segment AC and a closed axis-aligned box."""
    if x0 <= ax <= x1 and y0 <= ay <= y1:
        return 0.0
    if x0 <= cx <= x1 and y0 <= cy <= y1:
        return 0.0
    # slab test for a crossing
    dx, dy = cx - ax, cy - ay
    t_lo, t_hi = 0.0, 1.0
    crossing = True
    for p0, p1, q, dq in ((x0, x1, ax, dx), (y0, y1, ay, dy)):
        if dq == 0.0:
            if not p0 <= q <= p1:
                crossing = False
                break
        else:
            t1, t2 = (p0 - q) / dq, (p1 - q) / dq
            if t1 > t2:
                t1, t2 = t2, t1
            t_lo, t_hi = max(t_lo, t1), min(t_hi, t2)
            if t_lo > t_hi:
                crossing = False
                break
    if crossing:
        return 0.0
    edges = (
        (x0, y0, x1, y0),
        (x1, y0, x1, y1),
        (x1, y1, x0, y1),
        (x0, y1, x0, y0),
    )
    return min(
        _segment_segment_distance(ax, ay, cx, cy, ex0, ey0, ex1, ey1)
        for ex0, ey0, ex1, ey1 in edges
    )


class BlockPusherExpert:
    """Three-phase controller: approach the block from the side opposite its
    target, push it there, then park the pointmass at its own target without
    disturbing the block."""

    def __init__(self, env):
        self.env = env
        self.bound = env.spec.action_bound

    def action(self, s, g) -> np.ndarray:
        s = np.asarray(s, dtype=np.float64)
        p, b = s[:2], s[2:4]
        block_target, point_target = np.asarray(g[:2]), np.asarray(g[2:4])
        if np.linalg.norm(b - block_target) > _PUSH_TOL:
            return self._push_phase(p, b, block_target)
        rest = self._rest_point(b, point_target)
        if np.linalg.norm(p - rest) < 1e-12:
            return np.zeros(2)
        return self._navigate(p, b, rest)

    __call__ = action

    def _clearance(self, x, b) -> float:
        nearest = np.clip(x, b - BLOCK_HALF, b + BLOCK_HALF)
        return float(np.linalg.norm(x - nearest))

    def _segment_clear(self, a, c, b, margin=_CLEAR_NAV) -> bool:
        """Clearance of segment a->c from the block square stays >= margin."""
        return _segment_box_distance(
            float(a[0]), float(a[1]), float(c[0]), float(c[1]),
            float(b[0]) - BLOCK_HALF, float(b[0]) + BLOCK_HALF,
            float(b[1]) - BLOCK_HALF, float(b[1]) + BLOCK_HALF,
        ) >= margin

    def _push_phase(self, p, b, block_target) -> np.ndarray:
        # axis-aligned legs (x first, then y): flat-face contact pushes the
        # block without lateral drift and keeps approach points in the arena
        delta = block_target - b
        axis = 0 if abs(delta[0]) > _AXIS_TOL else 1
        sign = 1.0 if delta[axis] > 0 else -1.0
        contact = BLOCK_HALF + POINT_RADIUS
        rel = p - b
        behind = -rel[axis] * sign
        perp = abs(rel[1 - axis])
        if contact - 0.02 <= behind <= contact + _GAP + 0.03 and perp <= 0.03:
            step = np.zeros(2)
            step[axis] = sign * min(self.bound, abs(delta[axis]) + _GAP + 0.005)
            return step
        approach = b.copy()
        approach[axis] -= sign * (contact + _GAP)
        return self._navigate(p, b, approach)

    def _rest_point(self, b, point_target) -> np.ndarray:
        """Closest reachable point to the pointmass target that does not
        overlap the block (and stays inside the arena)."""
        if (
            np.all(np.abs(point_target) <= envs.ARENA)
            and self._clearance(point_target, b) >= _CLEAR_REST
        ):
            return point_target
        primary = point_target - b
        if np.linalg.norm(primary) < 1e-9:
            primary = -b if np.linalg.norm(b) > 1e-9 else np.array([1.0, 0.0])
        best, best_dist = None, np.inf
        for d in [primary] + _COMPASS:
            u = d / np.linalg.norm(d)
            cand = np.clip(b + u * (_support(u) + _CLEAR_REST), -envs.ARENA, envs.ARENA)
            if self._clearance(cand, b) < _CLEAR_REST - 1e-3:
                continue
            cand_dist = np.linalg.norm(cand - point_target)
            if cand_dist < best_dist:
                best, best_dist = cand, cand_dist
        return best if best is not None else b + primary / np.linalg.norm(primary)

    def _navigate(self, p, b, target) -> np.ndarray:
        """Step toward ``target`` without running into the block, detouring
        via the corners of the inflated block square when needed."""
        direct = step_toward(p, target, self.bound)
        if self._segment_clear(p, p + direct, b):
            return direct
        corners = []
        for sx in (-1.0, 1.0):
            for sy in (-1.0, 1.0):
                c = np.clip(b + np.array([sx, sy]) * _CORNER, -envs.ARENA, envs.ARENA)
                if self._clearance(c, b) >= _CLEAR_NAV:
                    corners.append(c)
        best_path, best_len = None, np.inf
        for i, ci in enumerate(corners):
            if not self._segment_clear(p, ci, b):
                continue
            leg0 = np.linalg.norm(p - ci)
            if self._segment_clear(ci, target, b):
                total = leg0 + np.linalg.norm(ci - target)
                if total < best_len:
                    best_path, best_len = [ci, target], total
            for j, cj in enumerate(corners):
                if i == j or not self._segment_clear(ci, cj, b):
                    continue
                if self._segment_clear(cj, target, b):
                    total = leg0 + np.linalg.norm(ci - cj) + np.linalg.norm(cj - target)
                    if total < best_len:
                        best_path, best_len = [ci, cj, target], total
        if best_path is not None:
            # steer at the first node not already reached
            for node in best_path:
                if np.linalg.norm(node - p) > 1e-9:
                    return step_toward(p, node, self.bound)
            return np.zeros(2)
        # boxed in: back straight out of the block's neighborhood
        nearest = np.clip(p, b - BLOCK_HALF, b + BLOCK_HALF)
        away = p - nearest
        if np.linalg.norm(away) < 1e-9:
            away = p - b if np.linalg.norm(p - b) > 1e-9 else np.array([1.0, 0.0])
        away = away / np.linalg.norm(away)
        return step_toward(p, p + away * 0.2, self.bound)


def make_expert(env):
    if env.spec.name == "four_rooms":
        return FourRoomsExpert(env)
    if env.spec.name == "block_pusher":
        return BlockPusherExpert(env)
    raise ValueError(f"no scripted expert for environment {env.spec.name!r}")


# ------------------------------------------------------- demo collection

def spec_hash(spec) -> str:
    payload = json.dumps(
        {
            "name": spec.name,
            "state_dim": spec.state_dim,
            "action_dim": spec.action_dim,
            "goal_dim": spec.goal_dim,
            "action_bound": spec.action_bound,
            "horizon": spec.horizon,
            "success_radius": spec.success_radius,
        },
        sort_keys=True,
    )
    return hashlib.sha256(payload.encode("utf-8")).hexdigest()[:12]


@dataclass
class DemoSet:
    """Expert trajectories toward uniformly sampled goals plus the metadata
    needed to reproduce them."""

    env_name: str
    spec_hash: str
    trajectories: list
    meta: dict

    @property
    def state_only(self) -> bool:
        return any(t.actions is None for t in self.trajectories)

    def __len__(self) -> int:
        return len(self.trajectories)


def collect_demos(env, n_demos, rng, record_actions=True, noise=None, expert=None,
                  meta=None) -> DemoSet:
    """Roll out the scripted expert toward ``n_demos`` uniformly sampled
    goals. Trajectories are truncated at success; a noiseless expert that
    fails to reach its goal within the horizon is a hard error."""
    if n_demos < 1:
        raise ValueError("n_demos must be >= 1")
    expert = expert or make_expert(env)
    cfg = noise or NoisyExpertConfig()
    trajectories = []
    for _ in range(n_demos):
        goal = env.sample_goal(rng)
        s = env.reset(rng)
        states, actions = [s], []
        reached = False
        for _t in range(env.spec.horizon):
            a = expert.action(s, goal)
            if not cfg.is_noiseless:
                a = noisy_expert_action(a, cfg, rng, env.spec.action_bound)
            s = env.step(s, a)
            states.append(s)
            actions.append(a)
            if env.success(s, goal):
                reached = True
                break
        if not reached and cfg.is_noiseless:
            raise RuntimeError(
                f"noiseless expert failed to reach goal {goal} within "
                f"{env.spec.horizon} steps on {env.spec.name}; this indicates "
                "a controller or geometry bug"
            )
        trajectories.append(
            Trajectory(
                states=np.array(states),
                actions=np.array(actions) if record_actions else None,
                goal=np.asarray(goal, dtype=np.float64),
                source=SOURCE_EXPERT,
            )
        )
    full_meta = {"epsilon": cfg.epsilon, "sigma": cfg.sigma}
    full_meta.update(meta or {})
    return DemoSet(env.spec.name, spec_hash(env.spec), trajectories, full_meta)


def save_demos(path, demos: DemoSet) -> None:
    """Write a demo set as one JSON record per line (header first). Floats
    round-trip exactly, and identical demo sets produce identical bytes."""
    header = {
        "format": DEMO_FORMAT,
        "version": DEMO_VERSION,
        "env": demos.env_name,
        "spec_hash": demos.spec_hash,
        "n_trajectories": len(demos),
        "state_only": demos.state_only,
        "meta": demos.meta,
    }
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(json.dumps(header, sort_keys=True) + "\n")
        for traj in demos.trajectories:
            record = {"goal": traj.goal.tolist(), "states": traj.states.tolist()}
            if traj.actions is not None:
                record["actions"] = traj.actions.tolist()
            fh.write(json.dumps(record, sort_keys=True) + "\n")


def load_demos(path) -> DemoSet:
    with open(path, encoding="utf-8") as fh:
        header = json.loads(fh.readline())
        if header.get("format") != DEMO_FORMAT:
            raise ValueError(f"{path} is not a gcrl demo file")
        trajectories = []
        for line in fh:
            record = json.loads(line)
            actions = record.get("actions")
            trajectories.append(
                Trajectory(
                    states=np.array(record["states"], dtype=np.float64),
                    actions=None if actions is None else np.array(actions, dtype=np.float64),
                    goal=np.array(record["goal"], dtype=np.float64),
                    source=SOURCE_EXPERT,
                )
            )
    if len(trajectories) != header["n_trajectories"]:
        raise ValueError(f"demo file {path} is truncated")
    return DemoSet(header["env"], header["spec_hash"], trajectories, header.get("meta", {}))
