import numpy as np
import pytest

from flowplan.config import SceneConfig
from flowplan.dataset import (DatasetRecord, read_dataset, write_dataset)
from flowplan.bernstein import TrajectoryCoeffs
from flowplan.errors import InvalidInputError, ParseError, VersionError
from flowplan.scene import Scenario, WorldView, make_scenario
from flowplan.worlds import sample_world


def world_view(world, agents=None):
    rects, circles = world.shape_arrays()
    if agents is None:
        agents = np.array([[a.start[0], a.start[1], 0.0, 0.0] for a in world.agents],
                          dtype=float).reshape(-1, 4)
    return WorldView(rects=rects, circles=circles, agents=agents,
                     robot_goal=np.asarray(world.robot_goal, dtype=float))


class TestSampleWorld:
    def test_deterministic(self):
        assert sample_world(7, "sparse") == sample_world(7, "sparse")

    def test_seed_sensitivity(self):
        a = sample_world(7, "dense")
        b = sample_world(8, "dense")
        assert a.agents != b.agents

    def test_unknown_difficulty(self):
        with pytest.raises(InvalidInputError):
            sample_world(0, "extreme")

    def test_dense_constraint_audit(self):
        for seed in range(100):
            world = sample_world(seed, "dense")
            assert len(world.agents) >= 15
            starts = np.array([a.start for a in world.agents])
            assert np.ptp(starts[:, 0]) <= 12.0 and np.ptp(starts[:, 1]) <= 12.0
            sx, sy, _ = world.robot_start
            assert np.hypot(world.robot_goal[0] - sx, world.robot_goal[1] - sy) >= 8.0

    def test_corridor_gap_and_flow(self):
        for seed in range(20):
            world = sample_world(seed, "corridor")
            gap = min(r.ymin for r in world.rects if r.ymin > 0) - \
                max(r.ymax for r in world.rects if r.ymax < 0)
            assert gap <= 3.0
            headings = [np.sign(a.goal[0] - a.start[0]) for a in world.agents]
            assert +1 in headings and -1 in headings

    def test_speeds_and_radii_in_range(self):
        world = sample_world(3, "sparse")
        for a in world.agents:
            assert 0.0 < a.pref_speed <= 2.0
            assert a.radius > 0.0


class TestMakeScenario:
    def test_goal_heading_facing_goal(self):
        world = sample_world(1, "sparse")
        view = world_view(world)
        sx, sy, _ = world.robot_start
        theta = np.arctan2(world.robot_goal[1] - sy, world.robot_goal[0] - sx)
        scn = make_scenario(view, (sx, sy, theta), SceneConfig())
        assert np.allclose(scn.goal_heading, [1.0, 0.0], atol=1e-9)

    def test_empty_world(self):
        cfg = SceneConfig()
        view = WorldView(rects=np.zeros((0, 4)), circles=np.zeros((0, 3)),
                         agents=np.zeros((0, 4)), robot_goal=np.array([5.0, 0.0]))
        scn = make_scenario(view, (0.0, 0.0, 0.0), cfg)
        assert scn.pointcloud_len == 0 and scn.dyn_len == 0
        assert np.all(scn.pointcloud == cfg.sentinel)

    def test_wall_two_meters_ahead(self):
        cfg = SceneConfig()
        view = WorldView(rects=np.array([[2.0, -3.0, 2.4, 3.0]]),
                         circles=np.zeros((0, 3)), agents=np.zeros((0, 4)),
                         robot_goal=np.array([10.0, 0.0]))
        scn = make_scenario(view, (0.0, 0.0, 0.0), cfg)
        assert scn.pointcloud_len > 0
        nearest = scn.static_points()[0]
        assert np.linalg.norm(nearest - [2.0, 0.0]) < 0.05

    def test_rotation_equivariance_circle_world(self):
        cfg = SceneConfig(n_rays=720)
        rng = np.random.default_rng(0)
        centers = rng.uniform(-4, 4, size=(5, 2))
        radii = rng.uniform(0.3, 0.8, size=5)
        agents = np.concatenate([rng.uniform(-4, 4, size=(4, 2)),
                                 rng.uniform(-1, 1, size=(4, 2))], axis=1)
        goal = np.array([5.0, 1.0])

        def build(theta):
            c, s = np.cos(theta), np.sin(theta)
            rot = np.array([[c, -s], [s, c]])
            circ = np.concatenate([centers @ rot.T, radii[:, None]], axis=1)
            ag = np.concatenate([agents[:, :2] @ rot.T, agents[:, 2:] @ rot.T], axis=1)
            return make_scenario(
                WorldView(rects=np.zeros((0, 4)), circles=circ, agents=ag,
                          robot_goal=rot @ goal),
                (0.0, 0.0, theta), cfg)

        base = build(0.0)
        rotated = build(0.73)
        assert abs(base.pointcloud_len - rotated.pointcloud_len) <= 8
        for p in base.static_points()[::7]:
            gap = np.linalg.norm(rotated.static_points() - p, axis=1).min()
            assert gap < 0.05
        assert np.allclose(base.goal_heading, rotated.goal_heading, atol=1e-9)
        assert np.allclose(base.dynamic_rows(), rotated.dynamic_rows(), atol=1e-9)

    def test_dynamic_rows_sorted_by_range_and_capped(self):
        cfg = SceneConfig(n_obs=3)
        agents = np.array([[4.0, 0.0, 0.1, 0.0],
                           [1.0, 0.0, 0.2, 0.0],
                           [2.0, 0.0, 0.3, 0.0],
                           [3.0, 0.0, 0.4, 0.0],
                           [40.0, 0.0, 0.5, 0.0]])
        view = WorldView(rects=np.zeros((0, 4)), circles=np.zeros((0, 3)),
                         agents=agents, robot_goal=np.array([5.0, 0.0]))
        scn = make_scenario(view, (0.0, 0.0, 0.0), cfg)
        assert scn.dyn_len == 3
        assert np.allclose(scn.dynamic_rows()[:, 0], [1.0, 2.0, 3.0])


def random_record(rng, with_expert=False):
    cfg = SceneConfig()
    n_p = int(rng.integers(0, 20))
    n_d = int(rng.integers(0, 5))
    pcd = np.full((cfg.n_pts, 2), cfg.sentinel)
    pcd[:n_p] = rng.uniform(-8, 8, size=(n_p, 2))
    dyn = np.zeros((cfg.n_obs, 4))
    dyn[:, :2] = cfg.sentinel
    dyn[:n_d] = rng.uniform(-5, 5, size=(n_d, 4))
    g = rng.standard_normal(2)
    g /= np.linalg.norm(g)
    scn = Scenario(pcd, n_p, dyn, n_d, g)
    coeffs = TrajectoryCoeffs(rng.standard_normal(11), rng.standard_normal(11))
    expert = rng.uniform(-3, 3, size=(50, 2)) if with_expert else None
    return DatasetRecord(scn, coeffs, expert, {"seed": int(rng.integers(0, 1000)),
                                               "scene": 4, "tag": "test"})


class TestDatasetRoundTrip:
    def test_bitwise_roundtrip(self, tmp_path):
        rng = np.random.default_rng(42)
        records = [random_record(rng, with_expert=(i % 2 == 0)) for i in range(1000)]
        path = tmp_path / "data.jsonl"
        write_dataset(records, path)
        back = read_dataset(path)
        assert len(back) == 1000
        for orig, rec in zip(records, back):
            f32 = lambda a: np.asarray(a, dtype=np.float32).astype(float)
            assert np.array_equal(rec.scenario.static_points(),
                                  f32(orig.scenario.static_points()))
            assert np.array_equal(rec.scenario.dynamic_rows(),
                                  f32(orig.scenario.dynamic_rows()))
            assert np.array_equal(rec.scenario.goal_heading, f32(orig.scenario.goal_heading))
            assert np.array_equal(rec.target_coeffs.cx, f32(orig.target_coeffs.cx))
            assert np.array_equal(rec.target_coeffs.cy, f32(orig.target_coeffs.cy))
            if orig.expert_xy is None:
                assert rec.expert_xy is None
            else:
                assert np.array_equal(rec.expert_xy, f32(orig.expert_xy))
            assert rec.meta == orig.meta

    def test_double_write_identical_bytes(self, tmp_path):
        rng = np.random.default_rng(1)
        records = [random_record(rng) for _ in range(5)]
        p1, p2 = tmp_path / "a.jsonl", tmp_path / "b.jsonl"
        write_dataset(records, p1)
        write_dataset(records, p2)
        assert p1.read_bytes() == p2.read_bytes()

    def test_truncated_line_names_line_number(self, tmp_path):
        rng = np.random.default_rng(2)
        path = tmp_path / "data.jsonl"
        write_dataset([random_record(rng) for _ in range(3)], path)
        text = path.read_text()
        lines = text.splitlines()
        lines[2] = lines[2][:40]
        path.write_text("\n".join(lines) + "\n")
        with pytest.raises(ParseError, match="line 3"):
            read_dataset(path)

    def test_version_mismatch(self, tmp_path):
        path = tmp_path / "data.jsonl"
        path.write_text('{"version": 99, "seed": 0}\n')
        with pytest.raises(VersionError):
            read_dataset(path)

    def test_empty_file(self, tmp_path):
        path = tmp_path / "data.jsonl"
        path.write_text("")
        assert read_dataset(path) == []
