import dataclasses

import numpy as np
import pytest

from flowplan.benchmark import (BenchmarkReport, aggregate_rows, suite_worlds,
                                write_hlp_csv, write_report_csv)
from flowplan.bernstein import canonical_basis, fit_coeffs
from flowplan.config import EvalConfig, RunConfig
from flowplan.errors import InvalidInputError
from flowplan.metrics import cost_select, episode_metrics, hlp
from flowplan.render import render_hlp_bars
from flowplan.scene import Scenario
from flowplan.scorer import candidate_set_from_coeffs
from flowplan.sim import EpisodeResult, run_episode
from tests.test_sim import empty_world, straight_line_planner, zero_velocity_planner

BASIS = canonical_basis()


class TestHlp:
    def test_identical_paths_zero(self):
        rng = np.random.default_rng(0)
        path = rng.uniform(-3, 3, size=(50, 2))
        assert hlp(path, path) == 0.0

    def test_constant_offset_collapses_to_offset(self):
        rng = np.random.default_rng(1)
        path = rng.uniform(-3, 3, size=(40, 2))
        shifted = path + np.array([0.7, 0.0])
        assert hlp(shifted, path) == pytest.approx(0.7, abs=1e-12)

    def test_nonnegative_and_symmetric(self):
        rng = np.random.default_rng(2)
        a = rng.uniform(-3, 3, size=(30, 2))
        b = rng.uniform(-3, 3, size=(30, 2))
        assert hlp(a, b) >= 0.0
        assert hlp(a, b) == pytest.approx(hlp(b, a), abs=1e-15)

    def test_translation_invariant_together(self):
        rng = np.random.default_rng(3)
        a = rng.uniform(-3, 3, size=(30, 2))
        b = rng.uniform(-3, 3, size=(30, 2))
        shift = np.array([5.0, -2.0])
        assert hlp(a + shift, b + shift) == pytest.approx(hlp(a, b), abs=1e-12)

    def test_length_mismatch_rejected(self):
        with pytest.raises(InvalidInputError):
            hlp(np.zeros((5, 2)), np.zeros((6, 2)))


def scenario_with_points(points):
    from flowplan.config import SceneConfig
    cfg = SceneConfig()
    pcd = np.full((cfg.n_pts, 2), cfg.sentinel)
    pts = np.asarray(points, dtype=float).reshape(-1, 2)
    pcd[:pts.shape[0]] = pts
    dyn = np.zeros((cfg.n_obs, 4))
    dyn[:, :2] = cfg.sentinel
    return Scenario(pcd, pts.shape[0], dyn, 0, np.array([1.0, 0.0]))


def line_coeffs(speed, lateral=0.0, wobble=0.0):
    t = BASIS.times
    xy = np.stack([speed * t, np.full_like(t, lateral)
                   + wobble * np.sin(2 * np.pi * t)], axis=1)
    coeffs, _ = fit_coeffs(xy, BASIS)
    return coeffs


class TestCostSelect:
    def test_collision_dominant_picks_free_candidate(self):
        scn = scenario_with_points([[2.0, 0.0]])
        cands = candidate_set_from_coeffs(
            [line_coeffs(0.8, lateral=0.0), line_coeffs(0.8, lateral=2.0)], BASIS)
        cfg = EvalConfig(cost_w_collision=1000.0, cost_w_smooth=0.0,
                         cost_w_progress=0.0)
        assert cost_select(cands, scn, BASIS, cfg) == 1

    def test_identical_candidates_pick_first(self):
        scn = scenario_with_points([])
        coeffs = line_coeffs(0.5)
        cands = candidate_set_from_coeffs([coeffs, coeffs, coeffs], BASIS)
        assert cost_select(cands, scn, BASIS, EvalConfig()) == 0

    def test_smoothness_only_prefers_straight(self):
        scn = scenario_with_points([])
        cands = candidate_set_from_coeffs(
            [line_coeffs(0.8, wobble=0.8), line_coeffs(0.8)], BASIS)
        cfg = EvalConfig(cost_w_collision=0.0, cost_w_smooth=1.0,
                         cost_w_progress=0.0)
        assert cost_select(cands, scn, BASIS, cfg) == 1


class TestEpisodeMetrics:
    def test_straight_run_kinematics(self):
        cfg = RunConfig()
        cfg.sim = dataclasses.replace(cfg.sim, goal_tolerance=0.3)
        result = run_episode(empty_world(), straight_line_planner(speed=1.0), cfg)
        metrics = episode_metrics(result)
        assert result.outcome == "success"
        assert metrics.length == pytest.approx(10.0, rel=0.05)
        assert metrics.time == pytest.approx(10.0, rel=0.10)
        assert metrics.velocity == pytest.approx(1.0, rel=0.10)

    def test_stationary_timeout(self):
        cfg = RunConfig()
        cfg.sim = dataclasses.replace(cfg.sim, timeout=3.0)
        result = run_episode(empty_world(), zero_velocity_planner(), cfg)
        metrics = episode_metrics(result)
        assert metrics.length < 0.05

    def test_velocity_identity(self):
        result = EpisodeResult("success", 7.5, 10.0, 0.75)
        metrics = episode_metrics(result)
        assert metrics.velocity == result.path_length / result.duration

    def test_zero_duration_flag(self):
        metrics = episode_metrics(EpisodeResult("error", 0.0, 0.0, 0.0))
        assert metrics.velocity is None


class TestAggregation:
    def episodes(self):
        mk = lambda outcome, length, duration: EpisodeResult(
            outcome, length, duration, length / duration if duration else 0.0)
        return [
            ("guided", "dense", 0, mk("success", 10.0, 12.0)),
            ("guided", "dense", 1, mk("collision", 4.0, 5.0)),
            ("guided", "dense", 2, mk("success", 11.0, 13.0)),
            ("vanilla", "dense", 0, mk("timeout", 2.0, 60.0)),
        ]

    def test_rows_recomputable_from_episodes(self):
        episodes = self.episodes()
        rows = aggregate_rows(episodes)
        guided = next(r for r in rows if r.variant == "guided")
        assert guided.runs == 3 and guided.successes == 2
        assert guided.rate == pytest.approx(2 / 3)
        assert guided.mean_len == pytest.approx((10.0 + 11.0) / 2)
        assert guided.mean_time == pytest.approx(12.5)
        vanilla = next(r for r in rows if r.variant == "vanilla")
        assert vanilla.successes == 0 and vanilla.mean_len is None

    def test_rate_mean_over_successes_only(self):
        rows = aggregate_rows(self.episodes())
        guided = next(r for r in rows if r.variant == "guided")
        # the collision run's short path must not contaminate the mean
        assert guided.mean_len > 10.0

    def test_report_csv_roundtrip_bytes(self, tmp_path):
        report = BenchmarkReport(rows=aggregate_rows(self.episodes()))
        p1, p2 = tmp_path / "a.csv", tmp_path / "b.csv"
        write_report_csv(report, p1)
        write_report_csv(report, p2)
        assert p1.read_bytes() == p2.read_bytes()
        header = p1.read_text().splitlines()[0]
        assert header == "variant,world,runs,successes,rate,mean_len_m,mean_time_s,mean_vel_mps"

    def test_hlp_csv_and_svg(self, tmp_path):
        pairs = [(0, 0.5, 0.7), (1, 0.4, 0.3), (2, 0.2, 0.6)]
        csv_path = tmp_path / "hlp.csv"
        write_hlp_csv(pairs, csv_path)
        lines = csv_path.read_text().splitlines()
        assert lines[0] == "scene_id,hlp_scorer,hlp_cost"
        assert len(lines) == 4
        svg_path = tmp_path / "hlp.svg"
        render_hlp_bars(svg_path, pairs)
        body = svg_path.read_text()
        assert body.startswith("<svg") and body.rstrip().endswith("</svg>")
        assert body.count("<rect") >= 7  # background + 2 bars per scene


class TestSuiteWorlds:
    def test_named_suites(self):
        worlds = suite_worlds("dense", 4, seed=0)
        assert len(worlds) == 4 and all(w.tag == "dense" for w in worlds)
        mixed = suite_worlds("mixed", 6, seed=0)
        assert {w.tag for w in mixed} == {"sparse", "dense", "corridor"}

    def test_deterministic(self):
        assert suite_worlds("sparse", 3, 5) == suite_worlds("sparse", 3, 5)
