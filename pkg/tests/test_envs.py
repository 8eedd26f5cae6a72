import numpy as np
import pytest
from shapely.geometry import LineString, box

from gcrl import envs
from gcrl.envs import BlockPusher, FourRooms, Trajectory, make_env
from gcrl.errors import ConfigError, NumericError


def oracle_in_wall_strict(p):
    """Independent wall test from the stated geometry: bands of half-width
    0.025 along the axes, doors of width 0.2 centered at +-0.5. Strictly
    interior: wall faces and door edges are free (states may rest on them
    after sliding along a face)."""
    x, y = p
    door = lambda c: 0.4 <= abs(c) <= 0.6
    v = abs(x) < 0.025 and not door(y) and abs(y) < 1
    h = abs(y) < 0.025 and not door(x) and abs(x) < 1
    return v or h


def wall_boxes(shrink=1e-9):
    return [box(x0 + shrink, y0 + shrink, x1 - shrink, y1 - shrink)
            for x0, x1, y0, y1 in envs.WALL_RECTS]


def segment_crosses_wall(a, b):
    seg = LineString([tuple(a), tuple(b)])
    return any(seg.intersects(w) for w in wall_boxes())


@pytest.fixture
def fr():
    return FourRooms()


@pytest.fixture
def bp():
    return BlockPusher()


# ------------------------------------------------------------------ spec


def test_env_specs_match_contract(fr, bp):
    assert (fr.spec.state_dim, fr.spec.action_dim, fr.spec.goal_dim) == (2, 2, 2)
    assert fr.spec.horizon == 300
    assert (bp.spec.state_dim, bp.spec.action_dim, bp.spec.goal_dim) == (4, 2, 4)
    assert bp.spec.horizon == 100
    assert fr.spec.gamma == 1.0 - 1.0 / 300
    assert bp.spec.gamma == 1.0 - 1.0 / 100


def test_make_env_rejects_unknown_name():
    with pytest.raises(ConfigError, match="four_rooms"):
        make_env("fetch_pick_and_place")


# ----------------------------------------------------------------- resets


def test_reset_is_seed_deterministic(fr, bp):
    for env in (fr, bp):
        a = env.reset(np.random.default_rng(3))
        b = env.reset(np.random.default_rng(3))
        assert np.array_equal(a, b)


def test_four_rooms_resets_avoid_walls(fr):
    starts = fr.reset_batch(10000, np.random.default_rng(0))
    assert not any(oracle_in_wall_strict(p) for p in starts)
    assert np.all(np.abs(starts) <= 1.0)


def test_four_rooms_resets_cover_all_rooms(fr):
    starts = fr.reset_batch(10000, np.random.default_rng(1))
    rooms = envs.room_of(starts)
    counts = np.bincount(rooms, minlength=4)
    # each quadrant holds 1/4 of the free area by symmetry
    sigma = np.sqrt(0.25 * 0.75 * 10000)
    assert np.all(np.abs(counts - 2500) < 3 * sigma)


def test_goal_samples_avoid_walls_and_are_area_proportional(fr):
    goals = fr.sample_goals(10000, np.random.default_rng(2))
    assert not any(oracle_in_wall_strict(g) for g in goals)
    counts = np.bincount(envs.room_of(goals), minlength=4)
    sigma = np.sqrt(0.25 * 0.75 * 10000)
    assert np.all(np.abs(counts - 2500) < 3 * sigma)
    a = fr.sample_goals(5, np.random.default_rng(7))
    b = fr.sample_goals(5, np.random.default_rng(7))
    assert np.array_equal(a, b)


def test_pusher_reset_layout(bp):
    rng = np.random.default_rng(4)
    for _ in range(200):
        s = bp.reset(rng)
        point, block = s[:2], s[2:]
        assert np.all(np.abs(block) <= envs.BLOCK_SPAWN_HALF)
        assert np.all(np.abs(point) <= 1.0)
        nearest = np.clip(point, block - envs.BLOCK_HALF, block + envs.BLOCK_HALF)
        assert np.linalg.norm(point - nearest) >= envs.POINT_RADIUS


# ------------------------------------------------------------------ steps


def test_zero_action_is_identity(fr, bp):
    rng = np.random.default_rng(5)
    for _ in range(50):
        s = fr.reset(rng)
        assert np.array_equal(fr.step(s, np.zeros(2)), s)
    s = bp.reset(rng)
    assert np.array_equal(bp.step(s, np.zeros(2)), s)


def test_nonfinite_action_raises(fr, bp):
    with pytest.raises(NumericError):
        fr.step(np.zeros(2), np.array([np.nan, 0.0]))
    with pytest.raises(NumericError):
        bp.step(np.zeros(4), np.array([np.inf, 0.0]))


def test_action_clipped_to_bound(fr):
    s = np.array([0.5, 0.5])
    s2 = fr.step(s, np.array([5.0, -5.0]))
    assert np.allclose(s2, [0.6, 0.4])


def test_wall_clamp_preserves_lateral_component(fr):
    # heading into the left face of the vertical wall: the normal component
    # truncates at the face, the lateral one is kept in full
    s2 = fr.step(np.array([-0.03, 0.3]), np.array([0.06, 0.04]))
    assert np.allclose(s2, [-0.025, 0.34], atol=1e-12)
    # already resting on the face
    s2 = fr.step(np.array([-0.025, 0.3]), np.array([0.05, 0.02]))
    assert np.allclose(s2, [-0.025, 0.32], atol=1e-12)
    # moving away from the face is unobstructed
    s2 = fr.step(np.array([-0.025, 0.3]), np.array([-0.05, 0.02]))
    assert np.allclose(s2, [-0.075, 0.32], atol=1e-12)


def test_motion_through_door_is_free(fr):
    s2 = fr.step(np.array([-0.06, 0.5]), np.array([0.1, 0.0]))
    assert np.allclose(s2, [0.04, 0.5])


def test_slide_stops_at_door_jamb(fr):
    # sliding down the wall face must stop where the horizontal band begins
    s2 = fr.step(np.array([-0.025, 0.08]), np.array([0.05, -0.1]))
    assert np.allclose(s2, [-0.025, 0.025], atol=1e-12)


def test_border_clamps_and_slides(fr):
    s2 = fr.step(np.array([0.97, 0.5]), np.array([0.08, 0.03]))
    assert np.allclose(s2, [1.0, 0.53], atol=1e-12)
    # border sliding cannot cross the wall band that meets the border
    s2 = fr.step(np.array([0.06, 0.995]), np.array([-0.09, 0.02]))
    assert np.allclose(s2, [0.025, 1.0], atol=1e-12)


def test_step_batch_matches_single(fr):
    rng = np.random.default_rng(6)
    states = fr.reset_batch(2000, rng)
    actions = rng.uniform(-0.1, 0.1, size=(2000, 2))
    batch = fr.step_batch(states, actions)
    singles = np.array([fr.step(s, a) for s, a in zip(states, actions)])
    assert np.allclose(batch, singles, atol=1e-14)


def test_no_step_segment_crosses_a_wall(fr):
    rng = np.random.default_rng(8)
    s = fr.reset_batch(10000, rng)
    a = rng.uniform(-0.1, 0.1, size=(10000, 2))
    s2 = fr.step_batch(s, a)
    assert np.all(np.abs(s2) <= 1.0)
    for i in range(10000):
        assert not segment_crosses_wall(s[i], s2[i]), (s[i], a[i], s2[i])


def test_random_walk_stays_in_bounds_and_off_walls(fr):
    rng = np.random.default_rng(9)
    s = fr.reset_batch(64, rng)
    for _ in range(300):
        a = rng.uniform(-0.1, 0.1, size=(64, 2))
        s2 = fr.step_batch(s, a)
        for i in range(64):
            assert not segment_crosses_wall(s[i], s2[i])
        s = s2
        assert np.all(np.abs(s) <= 1.0)
        assert not any(oracle_in_wall_strict(p) for p in s)


def test_dynamics_ignore_goal_by_construction(fr):
    # step has no goal argument; the same action sequence gives the same
    # states no matter what goal a policy was chasing
    rng = np.random.default_rng(10)
    s0 = fr.reset(rng)
    actions = rng.uniform(-0.1, 0.1, size=(20, 2))
    first = [s := s0] and [s := fr.step(s, a) for a in actions]
    second_s = s0
    second = []
    for a in actions:
        second_s = fr.step(second_s, a)
        second.append(second_s)
    assert np.array_equal(np.array(first), np.array(second))


def test_pusher_no_contact_leaves_block(bp):
    s = np.array([-0.8, -0.8, 0.2, 0.1])
    s2 = bp.step(s, np.array([0.05, 0.0]))
    assert np.allclose(s2[:2], [-0.75, -0.8])
    assert np.array_equal(s2[2:], s[2:])


def test_pusher_contact_displaces_block(bp):
    # disc touching the left face and moving right pushes the block right
    s = np.array([0.2 - 0.12, 0.1, 0.2, 0.1])
    s2 = bp.step(s, np.array([0.05, 0.0]))
    assert np.isclose(s2[0], 0.2 - 0.12 + 0.05)
    assert np.isclose(s2[2], 0.25)
    assert np.isclose(s2[3], 0.1)


def test_pusher_never_leaves_disc_inside_block(bp):
    rng = np.random.default_rng(11)
    s = bp.reset(rng)
    for _ in range(3000):
        a = rng.uniform(-0.1, 0.1, size=2)
        if rng.random() < 0.5:
            a = s[2:4] - s[:2]  # aim at the block to force contacts
            a = np.clip(a, -0.1, 0.1)
        s = bp.step(s, a)
        point, block = s[:2], s[2:]
        nearest = np.clip(point, block - envs.BLOCK_HALF, block + envs.BLOCK_HALF)
        assert np.linalg.norm(point - nearest) >= envs.POINT_RADIUS - 1e-9
        assert np.all(np.abs(point) <= 1.0)
        assert np.all(np.abs(block) <= 1.0 + 1e-12)


def test_pusher_block_pinned_at_border(bp):
    s = np.array([1.0 - 0.12, 0.0, 1.0, 0.0])
    for _ in range(10):
        s = bp.step(s, np.array([0.1, 0.0]))
    assert np.isclose(s[2], 1.0)
    nearest = np.clip(s[:2], s[2:] - envs.BLOCK_HALF, s[2:] + envs.BLOCK_HALF)
    assert np.linalg.norm(s[:2] - nearest) >= envs.POINT_RADIUS - 1e-9


# ---------------------------------------------------------------- success


def test_success_exact_and_boundary(fr):
    g = np.array([0.3, -0.2])
    assert fr.success(g, g)
    # distance exactly equal to the radius counts as success (closed ball)
    assert fr.success(np.array([fr.spec.success_radius, 0.0]), np.zeros(2))
    assert not fr.success(np.array([fr.spec.success_radius + 1e-9, 0.0]), np.zeros(2))


def test_success_agrees_with_norm_oracle(fr, bp):
    rng = np.random.default_rng(12)
    s = rng.uniform(-1, 1, size=(500, 2))
    g = rng.uniform(-1, 1, size=(500, 2))
    expected = np.linalg.norm(s - g, axis=1) <= fr.spec.success_radius
    assert np.array_equal(fr.success(s, g), expected)
    s4 = rng.uniform(-1, 1, size=(500, 4))
    g4 = rng.uniform(-1, 1, size=(500, 4))
    ag = np.concatenate([s4[:, 2:], s4[:, :2]], axis=1)
    expected4 = (np.linalg.norm(ag[:, :2] - g4[:, :2], axis=1) <= 0.15) & (
        np.linalg.norm(ag[:, 2:] - g4[:, 2:], axis=1) <= 0.15
    )
    assert np.array_equal(bp.success(s4, g4), expected4)


def test_pusher_success_requires_both_subgoals(bp):
    s = np.array([0.5, 0.5, -0.5, -0.5])  # point at (.5,.5), block at (-.5,-.5)
    g_both = np.array([-0.5, -0.5, 0.5, 0.5])
    g_block_only = np.array([-0.5, -0.5, 0.0, 0.0])
    assert bp.success(s, g_both)
    assert not bp.success(s, g_block_only)


# ----------------------------------------------------------- achieved goal


def test_achieved_goal_identity_and_reorder(fr, bp):
    s = np.array([0.3, -0.2])
    assert np.array_equal(fr.achieved_goal(s), s)
    s4 = np.array([1.0, 2.0, 3.0, 4.0])  # point (1,2), block (3,4)
    assert np.array_equal(bp.achieved_goal(s4), [3.0, 4.0, 1.0, 2.0])


def test_achieved_goal_roundtrip_success(fr, bp):
    rng = np.random.default_rng(13)
    for env, dim in ((fr, 2), (bp, 4)):
        s = rng.uniform(-1, 1, size=(200, dim))
        assert np.all(env.success(s, env.achieved_goal(s)))


# ------------------------------------------------------------- trajectory


def test_trajectory_validation(fr):
    states = np.zeros((4, 2))
    actions = np.zeros((3, 2))
    Trajectory(states, actions, np.zeros(2)).validate(fr.spec)
    with pytest.raises(ValueError):
        Trajectory(states, np.zeros((2, 2)), np.zeros(2)).validate(fr.spec)
    with pytest.raises(ValueError):
        Trajectory(states, None, np.zeros(2)).validate(fr.spec, require_actions=True)
    Trajectory(states, None, np.zeros(2)).validate(fr.spec, require_actions=False)
    bad = states.copy()
    bad[1, 0] = np.nan
    with pytest.raises(NumericError):
        Trajectory(bad, actions, np.zeros(2)).validate(fr.spec)
    long_states = np.zeros((fr.spec.horizon + 2, 2))
    with pytest.raises(ValueError):
        Trajectory(long_states, None, np.zeros(2)).validate(fr.spec, require_actions=False)


def test_wall_segments_export(fr):
    segs = fr.wall_segments()
    assert segs.shape == (24, 4)
    assert np.all(np.abs(segs) <= 1.0)
