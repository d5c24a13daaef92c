import dataclasses

import numpy as np
import pytest

from flowplan import autodiff as ad
from flowplan.autodiff import Tensor
from flowplan.bernstein import canonical_basis
from flowplan.config import RunConfig
from flowplan.encoder import (encode_branches, encode_scenarios, scenario_arrays)
from flowplan.errors import NumericalError
from flowplan.flow import (CoeffStats, cfm_loss, init_flow, load_flow,
                           sample_candidates, train_flow)
from flowplan.scene import Scenario, empty_scenario
from flowplan.unet import vector_field

CFG = RunConfig()
BASIS = canonical_basis()


@pytest.fixture(scope="module")
def store():
    return init_flow(CFG, seed=11)


def scenario_with(rng, n_pts=6, n_obs=3):
    cfg = CFG.scene
    pcd = np.full((cfg.n_pts, 2), cfg.sentinel)
    pcd[:n_pts] = rng.uniform(-5, 5, size=(n_pts, 2))
    dyn = np.zeros((cfg.n_obs, 4))
    dyn[:, :2] = cfg.sentinel
    dyn[:n_obs] = rng.uniform(-3, 3, size=(n_obs, 4))
    g = rng.standard_normal(2)
    g /= np.linalg.norm(g)
    return Scenario(pcd, n_pts, dyn, n_obs, g)


class TestEncoder:
    def test_pointcloud_permutation_invariance_exact(self, store):
        rng = np.random.default_rng(0)
        scn = scenario_with(rng, n_pts=20)
        base = encode_scenarios(store, [scn], CFG.flow).data
        for _ in range(5):
            perm = rng.permutation(scn.pointcloud_len)
            pcd = scn.pointcloud.copy()
            pcd[:scn.pointcloud_len] = pcd[:scn.pointcloud_len][perm]
            shuffled = dataclasses.replace(scn, pointcloud=pcd)
            assert np.array_equal(encode_scenarios(store, [shuffled], CFG.flow).data, base)

    def test_sentinel_rows_do_not_matter(self, store):
        rng = np.random.default_rng(1)
        scn = scenario_with(rng, n_pts=5, n_obs=2)
        pcd = scn.pointcloud.copy()
        dyn = scn.dyn_obstacles.copy()
        pcd[scn.pointcloud_len:] = 123.456
        dyn[scn.dyn_len:] = -77.0
        junk = Scenario(pcd, scn.pointcloud_len, dyn, scn.dyn_len, scn.goal_heading)
        a = encode_scenarios(store, [scn], CFG.flow).data
        b = encode_scenarios(store, [junk], CFG.flow).data
        assert np.array_equal(a, b)

    def test_goal_flip_isolated_to_goal_branch(self, store):
        rng = np.random.default_rng(2)
        scn = scenario_with(rng)
        flipped = dataclasses.replace(scn, goal_heading=-scn.goal_heading)
        arrays = scenario_arrays([scn])
        arrays_f = scenario_arrays([flipped])
        cs, cd, cg = encode_branches(store, *arrays, CFG.flow)
        cs_f, cd_f, cg_f = encode_branches(store, *arrays_f, CFG.flow)
        assert np.array_equal(cs.data, cs_f.data)
        assert np.array_equal(cd.data, cd_f.data)
        assert not np.allclose(cg.data, cg_f.data)

    def test_empty_scene_uses_learned_tokens(self, store):
        scn = empty_scenario(CFG.scene)
        tokens = encode_scenarios(store, [scn], CFG.flow)
        assert np.isfinite(tokens.data).all()
        assert tokens.data.shape == (1, 3, CFG.flow.d_model)


class TestVectorField:
    def test_output_shape_is_22_for_order_10(self, store):
        rng = np.random.default_rng(3)
        ctx = encode_scenarios(store, [scenario_with(rng)], CFG.flow)
        out = vector_field(store, rng.standard_normal((1, 22)).astype(np.float32),
                           np.array([0.3], dtype=np.float32), ctx, CFG.flow)
        assert out.data.shape == (1, 22)

    def test_fresh_network_is_zero_field(self, store):
        rng = np.random.default_rng(4)
        ctx = encode_scenarios(store, [scenario_with(rng)], CFG.flow)
        out = vector_field(store, rng.standard_normal((3, 22)).astype(np.float32),
                           np.array([0.1, 0.5, 0.9], dtype=np.float32),
                           Tensor(np.repeat(ctx.data, 3, axis=0)), CFG.flow)
        assert np.array_equal(out.data, np.zeros((3, 22), dtype=np.float32))

    def test_input_gradient_matches_finite_differences(self):
        cfg = RunConfig()
        cfg.flow = dataclasses.replace(cfg.flow, d_model=16, unet_channels=(8, 16),
                                       time_embed_dim=16)
        store = init_flow(cfg, seed=5)
        # give the zero-initialized head real weights so the field is nonzero
        rng = np.random.default_rng(6)
        head = store["unet.head1.w"]
        head.data = (0.3 * rng.standard_normal(head.data.shape)).astype(np.float32)
        ctx = encode_scenarios(store, [scenario_with(rng)], cfg.flow)
        xi0 = rng.standard_normal((1, 22)).astype(np.float32)
        tau = np.array([0.4], dtype=np.float32)

        xi = Tensor(xi0.copy(), requires_grad=True)
        out = vector_field(store, xi, tau, ctx, cfg.flow)
        loss = ad.sum_(ad.mul(out, out))
        loss.backward()
        analytic = xi.grad.reshape(-1).astype(float)

        numeric = np.zeros(22)
        eps = 1e-3
        for i in range(22):
            hi = xi0.astype(float).copy()
            hi[0, i] += eps
            lo = xi0.astype(float).copy()
            lo[0, i] -= eps
            f_hi = vector_field(store, Tensor(hi), tau, ctx, cfg.flow).data
            f_lo = vector_field(store, Tensor(lo), tau, ctx, cfg.flow).data
            numeric[i] = ((f_hi ** 2).sum() - (f_lo ** 2).sum()) / (2 * eps)
        err = np.abs(analytic - numeric).max() / max(np.abs(numeric).max(), 1e-6)
        assert err < 1e-3

    def test_non_finite_input_rejected(self, store):
        rng = np.random.default_rng(7)
        ctx = encode_scenarios(store, [scenario_with(rng)], CFG.flow)
        bad = np.full((1, 22), np.nan, dtype=np.float32)
        with pytest.raises(NumericalError):
            vector_field(store, bad, np.array([0.1], dtype=np.float32), ctx, CFG.flow)


class TestCfmLoss:
    def test_oracle_field_gives_zero_loss(self, store):
        rng = np.random.default_rng(8)
        xi1 = rng.standard_normal((6, 22)).astype(np.float32)
        scenarios = [scenario_with(rng) for _ in range(6)]

        def oracle(xi_tau, tau, ctx):
            # u = xi1 - xi0 recovered from the path point: xi_tau = (1-t)xi0 + t xi1
            t = tau[:, None].astype(np.float64)
            u = (xi1.astype(np.float64) - xi_tau.astype(np.float64)) / (1.0 - t)
            return Tensor(u.astype(np.float32))

        loss = cfm_loss(store, xi1, scenarios, CFG.flow,
                        np.random.default_rng(9), field_fn=oracle)
        assert float(loss.data) < 1e-8

    def test_zero_field_loss_matches_monte_carlo(self, store):
        rng = np.random.default_rng(10)
        dim = 22
        xi1 = rng.standard_normal((2000, dim)).astype(np.float32)
        scn = empty_scenario(CFG.scene)

        def zero(xi_tau, tau, ctx):
            return Tensor(np.zeros_like(xi_tau))

        # encode once: identical scenario for all rows keeps the test fast
        loss = cfm_loss(store, xi1, [scn] * 2000, CFG.flow,
                        np.random.default_rng(11), field_fn=zero)
        expected = dim + (xi1 ** 2).sum(axis=1).mean()
        assert abs(float(loss.data) - expected) / expected < 0.1


def toy_records(rng, count=60):
    """Trivially conditioned records with coefficient targets in two clusters."""
    from flowplan.dataset import DatasetRecord
    from flowplan.bernstein import TrajectoryCoeffs
    records = []
    for i in range(count):
        sign = 1.0 if i % 2 == 0 else -1.0
        cx = np.linspace(0, 3, 11) + 0.05 * rng.standard_normal(11)
        cy = sign * 1.5 + 0.05 * rng.standard_normal(11)
        records.append(DatasetRecord(empty_scenario(CFG.scene),
                                     TrajectoryCoeffs(cx, cy), None, {"seed": i}))
    return records


class TestTraining:
    def test_training_is_deterministic(self, tmp_path):
        rng = np.random.default_rng(12)
        records = toy_records(rng, count=30)
        cfg = RunConfig()
        cfg.flow = dataclasses.replace(cfg.flow, d_model=16, unet_channels=(8, 16),
                                       time_embed_dim=16, fusion_layers=1, dyn_layers=1)
        cfg.train = dataclasses.replace(cfg.train, batch_size=8)
        p1, p2 = tmp_path / "a.ckpt", tmp_path / "b.ckpt"
        train_flow(records, cfg, steps=5, seed=3, out_path=p1)
        train_flow(records, cfg, steps=5, seed=3, out_path=p2)
        assert p1.read_bytes() == p2.read_bytes()

    def test_resume_matches_uninterrupted(self, tmp_path):
        rng = np.random.default_rng(13)
        records = toy_records(rng, count=30)
        cfg = RunConfig()
        cfg.flow = dataclasses.replace(cfg.flow, d_model=16, unet_channels=(8, 16),
                                       time_embed_dim=16, fusion_layers=1, dyn_layers=1)
        cfg.train = dataclasses.replace(cfg.train, batch_size=8)
        full = tmp_path / "full.ckpt"
        train_flow(records, cfg, steps=8, seed=3, out_path=full)
        part = tmp_path / "part.ckpt"
        train_flow(records, cfg, steps=4, seed=3, out_path=part)
        resumed = tmp_path / "resumed.ckpt"
        train_flow(records, cfg, steps=8, seed=3, out_path=resumed, resume=part)
        assert resumed.read_bytes() == full.read_bytes()

    def test_checkpoint_roundtrip_through_loader(self, tmp_path):
        rng = np.random.default_rng(14)
        records = toy_records(rng, count=20)
        cfg = RunConfig()
        cfg.flow = dataclasses.replace(cfg.flow, d_model=16, unet_channels=(8, 16),
                                       time_embed_dim=16, fusion_layers=1, dyn_layers=1)
        path = tmp_path / "flow.ckpt"
        store, stats, _ = train_flow(records, cfg, steps=2, seed=0, out_path=path)
        loaded, loaded_stats, loaded_cfg, extra = load_flow(path)
        assert loaded.names() == store.names()
        assert np.array_equal(loaded_stats.mean, stats.mean)
        assert loaded_cfg == cfg.flow
        assert extra["order"] == cfg.bernstein.order


class TestSampling:
    def setup_method(self):
        self.stats = CoeffStats(np.zeros(22, dtype=np.float32),
                                np.ones(22, dtype=np.float32))

    def test_zero_field_returns_prior_draw(self, store):
        rng = np.random.default_rng(20)
        draw_rng = np.random.default_rng(21)
        expected = np.random.default_rng(21).standard_normal((4, 22)).astype(np.float32)
        out = sample_candidates(store, empty_scenario(CFG.scene), 4, 5, 0.0,
                                draw_rng, CFG.flow, self.stats, BASIS)
        got = np.stack([c.flat() for c in out])
        assert np.allclose(got, expected, atol=1e-7)

    def test_constant_field_integrates_exactly_one_step(self, store):
        const = np.arange(22, dtype=np.float32) / 22.0

        def field(xi, tau, ctx):
            return np.tile(const, (xi.shape[0], 1))

        start = np.random.default_rng(22).standard_normal((3, 22)).astype(np.float32)
        out = sample_candidates(store, empty_scenario(CFG.scene), 3, 1, 0.0,
                                np.random.default_rng(22), CFG.flow, self.stats,
                                BASIS, field_fn=field)
        got = np.stack([c.flat() for c in out])
        assert np.array_equal(got.astype(np.float32), start + const)

    def test_constant_field_many_steps_close(self, store):
        const = np.full(22, 0.7, dtype=np.float32)

        def field(xi, tau, ctx):
            return np.tile(const, (xi.shape[0], 1))

        start = np.random.default_rng(23).standard_normal((2, 22)).astype(np.float32)
        out = sample_candidates(store, empty_scenario(CFG.scene), 2, 7, 0.0,
                                np.random.default_rng(23), CFG.flow, self.stats,
                                BASIS, field_fn=field)
        got = np.stack([c.flat() for c in out])
        assert np.abs(got - (start + const)).max() < 1e-5

    def test_guidance_continuous_at_zero(self, store):
        rng = np.random.default_rng(24)
        scn = scenario_with(rng)
        a = sample_candidates(store, scn, 4, 5, 0.0, np.random.default_rng(25),
                              CFG.flow, self.stats, BASIS)
        b = sample_candidates(store, scn, 4, 5, 1e-12, np.random.default_rng(25),
                              CFG.flow, self.stats, BASIS)
        for ca, cb in zip(a, b):
            assert np.abs(ca.flat() - cb.flat()).max() < 1e-6

    def test_sampling_deterministic_bitwise(self, store):
        rng = np.random.default_rng(26)
        scn = scenario_with(rng)
        a = sample_candidates(store, scn, 6, 5, 2.0, np.random.default_rng(27),
                              CFG.flow, self.stats, BASIS)
        b = sample_candidates(store, scn, 6, 5, 2.0, np.random.default_rng(27),
                              CFG.flow, self.stats, BASIS)
        for ca, cb in zip(a, b):
            assert np.array_equal(ca.flat(), cb.flat())
