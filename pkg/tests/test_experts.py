import json

import numpy as np
import pytest

from gcrl import envs
from gcrl.envs import BlockPusher, FourRooms, room_of
from gcrl.experts import (
    NoisyExpertConfig,
    collect_demos,
    four_rooms_route,
    load_demos,
    make_expert,
    noisy_expert_action,
    save_demos,
    spec_hash,
)

# independent room-graph oracle: rooms form a 4-cycle, so the shortest route
# between distinct rooms has 1 hop for neighbors and 2 hops for diagonals
ORACLE_HOPS = {
    (0, 0): 0, (1, 1): 0, (2, 2): 0, (3, 3): 0,
    (0, 1): 1, (1, 0): 1, (1, 2): 1, (2, 1): 1,
    (2, 3): 1, (3, 2): 1, (0, 3): 1, (3, 0): 1,
    (0, 2): 2, (2, 0): 2, (1, 3): 2, (3, 1): 2,
}
DOOR_CENTERS = [tuple(d) for d in envs.DOORS.values()]


@pytest.fixture
def fr():
    return FourRooms()


@pytest.fixture
def bp():
    return BlockPusher()


def rollout(env, expert, s, g, horizon=None):
    states = [np.asarray(s, dtype=np.float64)]
    for _ in range(horizon or env.spec.horizon):
        states.append(env.step(states[-1], expert.action(states[-1], g)))
        if env.success(states[-1], g):
            break
    return np.array(states)


# ------------------------------------------------------------ four rooms


def test_close_goal_in_same_room_is_reached_exactly(fr):
    expert = make_expert(fr)
    s = np.array([0.5, 0.5])
    g = np.array([0.55, 0.44])
    a = expert.action(s, g)
    assert np.allclose(s + a, g, atol=1e-15)


def test_route_lengths_match_room_graph_oracle(fr):
    for start in range(4):
        for goal in range(4):
            route = four_rooms_route(start, goal)
            assert len(route) == ORACLE_HOPS[(start, goal)]
            room = start
            for door, nxt in route:
                assert tuple(door) in DOOR_CENTERS
                assert nxt in envs.ROOM_NEIGHBORS[room]
                room = nxt
            if route:
                assert room == goal


def test_top_right_to_bottom_left_crosses_exactly_two_doors(fr):
    expert = make_expert(fr)
    s = np.array([0.5, 0.5])
    g = np.array([-0.5, -0.5])
    plan = expert.plan(s, g)
    assert len(plan) == 2
    assert tuple(plan[0]) in DOOR_CENTERS
    states = rollout(fr, expert, s, g)
    rooms = [room_of(p) for p in states]
    transitions = sum(1 for a, b in zip(rooms[:-1], rooms[1:]) if a != b)
    assert transitions == 2
    assert fr.success(states[-1], g)


def test_four_rooms_expert_reaches_sampled_goals(fr):
    expert = make_expert(fr)
    rng = np.random.default_rng(0)
    wins = 0
    for _ in range(1000):
        g = fr.sample_goal(rng)
        s = fr.reset(rng)
        states = rollout(fr, expert, s, g)
        wins += bool(fr.success(states[-1], g))
    assert wins >= 990


def test_four_rooms_expert_is_near_geodesic(fr):
    expert = make_expert(fr)
    rng = np.random.default_rng(1)
    for _ in range(200):
        g = fr.sample_goal(rng)
        s = fr.reset(rng)
        states = rollout(fr, expert, s, g)
        assert fr.success(states[-1], g)
        path_len = np.sum(np.linalg.norm(np.diff(states, axis=0), axis=1))
        waypoints = [s] + expert.plan(s, g) + [g]
        route_len = sum(
            np.linalg.norm(np.asarray(b) - np.asarray(a))
            for a, b in zip(waypoints[:-1], waypoints[1:])
        )
        assert path_len <= 1.3 * route_len + 1e-9


# ----------------------------------------------------------- block pusher


def test_pusher_expert_reaches_sampled_goals(bp):
    expert = make_expert(bp)
    rng = np.random.default_rng(2)
    wins = 0
    for _ in range(300):
        g = bp.sample_goal(rng)
        s = bp.reset(rng)
        states = rollout(bp, expert, s, g)
        wins += bool(bp.success(states[-1], g))
    assert wins >= 297


def test_pusher_expert_far_from_block_does_not_move_it(bp):
    expert = make_expert(bp)
    s = np.array([-0.9, -0.9, 0.5, 0.5])
    g = np.array([0.5, 0.5, -0.5, -0.5])  # block already at target
    s2 = bp.step(s, expert.action(s, g))
    assert np.array_equal(s2[2:], s[2:])


# -------------------------------------------------------------- noise


def test_noiseless_config_is_passthrough(fr):
    rng = np.random.default_rng(3)
    a = np.array([0.05, -0.02])
    out = noisy_expert_action(a, NoisyExpertConfig(0.0, 0.0), rng, 0.1)
    assert np.array_equal(out, a)


def test_epsilon_one_is_uniform_regardless_of_optimal(fr):
    rng = np.random.default_rng(4)
    draws = np.array([
        noisy_expert_action(np.array([0.1, 0.1]), NoisyExpertConfig(1.0, 0.0), rng, 0.1)
        for _ in range(10000)
    ])
    assert np.all(np.abs(draws) <= 0.1)
    assert np.all(np.abs(draws.mean(axis=0)) < 3 * 0.1 / np.sqrt(3 * 10000))
    # mirror the draw protocol to confirm the uniform branch is always taken
    mirror = np.random.default_rng(4)
    for row in draws[:100]:
        assert mirror.random() < 1.0
        assert np.array_equal(row, mirror.uniform(-0.1, 0.1, size=2))


def test_uniform_branch_frequency_at_paper_setting():
    # four-rooms sub-optimal expert setting: epsilon 0.4, sigma 1.5
    cfg = NoisyExpertConfig(epsilon=0.4, sigma=1.5)
    assert cfg == NoisyExpertConfig(*NOISY_DEFAULT_FR)
    rng = np.random.default_rng(5)
    mirror = np.random.default_rng(5)
    n, uniform_hits = 10000, 0
    for _ in range(n):
        noisy_expert_action(np.zeros(2), cfg, rng, 0.1)
        took_uniform = mirror.random() < cfg.epsilon
        if took_uniform:
            mirror.uniform(-0.1, 0.1, size=2)
            uniform_hits += 1
        else:
            mirror.normal(0.0, cfg.sigma, size=2)
    # the two generators must stay in lockstep
    assert rng.random() == mirror.random()
    sigma = np.sqrt(0.4 * 0.6 / n)
    assert abs(uniform_hits / n - 0.4) < 3 * sigma


NOISY_DEFAULT_FR = (0.4, 1.5)


def test_gaussian_noise_variance_matches_config():
    cfg = NoisyExpertConfig(epsilon=0.0, sigma=0.01)
    rng = np.random.default_rng(6)
    opt = np.array([0.02, -0.03])
    noise = np.array([
        noisy_expert_action(opt, cfg, rng, 0.1) - opt for _ in range(10000)
    ])
    var = noise.var(axis=0)
    tol = 3 * cfg.sigma**2 * np.sqrt(2.0 / 10000)
    assert np.all(np.abs(var - cfg.sigma**2) < tol)
    assert abs(noise.mean()) < 3 * cfg.sigma / np.sqrt(2 * 10000)


def test_noisy_defaults_per_environment():
    assert experts_defaults("four_rooms") == (0.4, 1.5)
    assert experts_defaults("block_pusher") == (0.5, 0.3)


def experts_defaults(name):
    from gcrl.experts import NOISY_EXPERT_DEFAULTS

    cfg = NOISY_EXPERT_DEFAULTS[name]
    return (cfg.epsilon, cfg.sigma)


# --------------------------------------------------------------- demos


def test_collect_demos_noiseless_all_succeed(fr):
    demos = collect_demos(fr, 20, np.random.default_rng(7))
    assert len(demos) == 20
    for traj in demos.trajectories:
        assert fr.success(traj.states[-1], traj.goal)
        assert traj.length <= fr.spec.horizon
        assert traj.actions.shape == (traj.length, 2)
        # truncation: success happens only at the final state
        assert not np.any(fr.success(traj.states[:-1], traj.goal))


def test_collect_demos_noisy_tolerates_failures(fr):
    demos = collect_demos(
        fr, 10, np.random.default_rng(8), noise=NoisyExpertConfig(0.4, 1.5)
    )
    assert len(demos) == 10
    for traj in demos.trajectories:
        assert traj.length <= fr.spec.horizon


def test_demo_file_roundtrip_and_byte_identical(fr, tmp_path):
    a, b = tmp_path / "a.demos", tmp_path / "b.demos"
    save_demos(a, collect_demos(fr, 5, np.random.default_rng(9), meta={"seed": 9}))
    save_demos(b, collect_demos(fr, 5, np.random.default_rng(9), meta={"seed": 9}))
    assert a.read_bytes() == b.read_bytes()
    other = tmp_path / "c.demos"
    save_demos(other, collect_demos(fr, 5, np.random.default_rng(10), meta={"seed": 10}))
    assert a.read_bytes() != other.read_bytes()
    demos = load_demos(a)
    assert demos.env_name == "four_rooms"
    assert demos.spec_hash == spec_hash(fr.spec)
    assert demos.meta["seed"] == 9
    assert len(demos) == 5
    reloaded = load_demos(a)
    for t1, t2 in zip(demos.trajectories, reloaded.trajectories):
        assert np.array_equal(t1.states, t2.states)
        assert np.array_equal(t1.actions, t2.actions)
        assert np.array_equal(t1.goal, t2.goal)


def test_state_only_demo_file_has_no_action_arrays(fr, tmp_path):
    path = tmp_path / "so.demos"
    save_demos(path, collect_demos(fr, 4, np.random.default_rng(11), record_actions=False))
    lines = path.read_text().strip().split("\n")
    header = json.loads(lines[0])
    assert header["state_only"] is True
    for line in lines[1:]:
        assert "actions" not in json.loads(line)
    demos = load_demos(path)
    assert demos.state_only
    assert all(t.actions is None for t in demos.trajectories)


def test_expert_actions_respect_bounds(fr, bp):
    rng = np.random.default_rng(12)
    for env in (fr, bp):
        expert = make_expert(env)
        for _ in range(100):
            s = env.reset(rng)
            g = env.sample_goal(rng)
            a = expert.action(s, g)
            assert np.all(np.abs(a) <= env.spec.action_bound + 1e-12)
