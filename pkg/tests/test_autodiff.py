import numpy as np
import pytest

from flowplan import autodiff as ad
from flowplan.autodiff import Tensor
from flowplan.errors import (ConfigError, EmptyInputError, ShapeError, TrainingError)
from flowplan.params import ParamStore, adam_step, load_checkpoint, save_checkpoint


def grad_check(make_scalar, arrays, eps=1e-3, tol=1e-3):
    """Analytic f32 backward vs float64 central differences, per input."""
    tensors = [Tensor(a.astype(np.float32), requires_grad=True) for a in arrays]
    out = make_scalar(*tensors)
    out.backward()
    for which, base in enumerate(arrays):
        numeric = np.zeros(base.size)
        flat = base.astype(float).reshape(-1)
        for i in range(flat.size):
            bumped = [a.astype(float).copy() for a in arrays]
            bumped[which].reshape(-1)[i] = flat[i] + eps
            hi = make_scalar(*[Tensor(b) for b in bumped]).data.item()
            bumped[which].reshape(-1)[i] = flat[i] - eps
            lo = make_scalar(*[Tensor(b) for b in bumped]).data.item()
            numeric[i] = (hi - lo) / (2 * eps)
        analytic = tensors[which].grad.reshape(-1).astype(float)
        scale = max(np.abs(numeric).max(), 1e-4)
        err = np.abs(analytic - numeric).max() / scale
        assert err < tol, f"input {which}: rel err {err:.2e}"


def weighted_sum(t, rng):
    w = Tensor(rng.standard_normal(t.data.shape).astype(t.data.dtype))
    return ad.sum_(ad.mul(t, w))


SEEDS = range(10)


class TestForwardSemantics:
    def test_matmul_identity(self):
        a = np.arange(12, dtype=np.float32).reshape(3, 4)
        out = ad.matmul(Tensor(np.eye(3, dtype=np.float32)), Tensor(a))
        assert np.array_equal(out.data, a)

    def test_matmul_shape_error_names_both(self):
        with pytest.raises(ShapeError, match=r"\(2, 3\).*\(4, 2\)"):
            ad.matmul(Tensor(np.zeros((2, 3))), Tensor(np.zeros((4, 2))))

    def test_softmax_uniform(self):
        out = ad.softmax(Tensor(np.full((2, 5), 3.0)))
        assert np.allclose(out.data, 0.2, atol=1e-7)

    def test_layer_norm_moments(self):
        rng = np.random.default_rng(0)
        x = Tensor(rng.standard_normal((6, 32)).astype(np.float32))
        out = ad.layer_norm(x, Tensor(np.ones(32, np.float32)),
                            Tensor(np.zeros(32, np.float32)))
        assert np.abs(out.data.mean(axis=-1)).max() < 1e-5
        assert np.abs(out.data.var(axis=-1) - 1.0).max() < 1e-4

    def test_conv1d_identity_kernel(self):
        x = np.arange(6, dtype=np.float32).reshape(1, 6)
        w = np.ones((1, 1, 1), dtype=np.float32)
        out = ad.conv1d(Tensor(x), Tensor(w))
        assert np.array_equal(out.data, x)

    def test_conv1d_discrete_difference(self):
        out = ad.conv1d(Tensor(np.array([[1.0, 2.0, 4.0]], dtype=np.float32)),
                        Tensor(np.array([[[1.0, -1.0]]], dtype=np.float32)))
        assert np.allclose(out.data, [[-1.0, -2.0]])

    def test_conv1d_output_length(self):
        x = Tensor(np.zeros((2, 3, 11), dtype=np.float32))
        w = Tensor(np.zeros((5, 3, 3), dtype=np.float32))
        assert ad.conv1d(x, w, stride=2, padding=1).data.shape == (2, 5, 6)

    def test_conv1d_kernel_too_large(self):
        with pytest.raises(ShapeError):
            ad.conv1d(Tensor(np.zeros((1, 3))), Tensor(np.zeros((1, 1, 5))))

    def test_max_pool_single_row(self):
        row = np.array([[1.5, -2.0, 0.25]], dtype=np.float32)
        out = ad.max_pool_valid(Tensor(row), 1)
        assert np.array_equal(out.data, row[0])

    def test_max_pool_hand_case(self):
        x = np.array([[1.0, 5.0], [3.0, 2.0]], dtype=np.float32)
        out = ad.max_pool_valid(Tensor(x), 2)
        assert np.array_equal(out.data, [3.0, 5.0])

    def test_max_pool_sentinels_never_win(self):
        x = np.array([[1.0, 5.0], [3.0, 2.0], [1e3, 1e3]], dtype=np.float32)
        out = ad.max_pool_valid(Tensor(x), 2)
        assert np.array_equal(out.data, [3.0, 5.0])

    def test_max_pool_empty_raises(self):
        with pytest.raises(EmptyInputError):
            ad.max_pool_valid(Tensor(np.zeros((3, 2), dtype=np.float32)), 0)

    def test_attention_single_token_is_value_chain(self):
        rng = np.random.default_rng(1)
        dim = 8
        mats = [Tensor(rng.standard_normal((dim, dim)).astype(np.float32))
                for _ in range(4)]
        tok = Tensor(rng.standard_normal((1, dim)).astype(np.float32))
        out = ad.multi_head_attention(tok, tok, tok, 2, *mats)
        expected = (tok.data @ mats[2].data) @ mats[3].data
        assert np.allclose(out.data, expected, atol=1e-6)

    def test_attention_identical_tokens_identical_rows(self):
        rng = np.random.default_rng(2)
        dim = 8
        mats = [Tensor(rng.standard_normal((dim, dim)).astype(np.float32))
                for _ in range(4)]
        row = rng.standard_normal((1, dim)).astype(np.float32)
        toks = Tensor(np.repeat(row, 3, axis=0))
        out = ad.multi_head_attention(toks, toks, toks, 2, *mats)
        assert np.allclose(out.data[0], out.data[1], atol=1e-7)
        assert np.allclose(out.data[0], out.data[2], atol=1e-7)

    def test_attention_indivisible_heads(self):
        t = Tensor(np.zeros((2, 6), dtype=np.float32))
        w = Tensor(np.zeros((6, 6), dtype=np.float32))
        with pytest.raises(ConfigError):
            ad.multi_head_attention(t, t, t, 4, w, w, w, w)

    def test_attention_masked_keys_ignored(self):
        rng = np.random.default_rng(3)
        dim = 8
        mats = [Tensor(rng.standard_normal((dim, dim)).astype(np.float32))
                for _ in range(4)]
        base = rng.standard_normal((4, dim)).astype(np.float32)
        junk = base.copy()
        junk[2:] = 777.0
        mask = np.zeros((1, 4, 4), dtype=np.float32)
        mask[:, :, 2:] = -1e9
        out_a = ad.multi_head_attention(Tensor(base), Tensor(base), Tensor(base),
                                        2, *mats, mask=mask)
        out_b = ad.multi_head_attention(Tensor(base), Tensor(junk), Tensor(junk),
                                        2, *mats, mask=mask)
        assert np.allclose(out_a.data[:2], out_b.data[:2], atol=1e-6)

    def test_forward_deterministic(self):
        rng = np.random.default_rng(5)
        x = rng.standard_normal((4, 16)).astype(np.float32)
        w = rng.standard_normal((16, 16)).astype(np.float32)
        a = ad.relu(ad.matmul(Tensor(x), Tensor(w))).data
        b = ad.relu(ad.matmul(Tensor(x), Tensor(w))).data
        assert np.array_equal(a, b)


class TestSinusoidalEmbed:
    def test_range(self):
        emb = ad.sinusoidal_embed(np.linspace(0, 1, 11), 64)
        assert emb.min() >= -1.0 and emb.max() <= 1.0

    def test_tau_zero(self):
        emb = ad.sinusoidal_embed(0.0, 16)[0]
        assert np.allclose(emb[0::2], 0.0) and np.allclose(emb[1::2], 1.0)

    def test_distinct_taus_distinct(self):
        emb = ad.sinusoidal_embed([0.0, 0.5, 1.0], 64)
        for i in range(3):
            for j in range(i + 1, 3):
                assert np.linalg.norm(emb[i] - emb[j]) > 0.1

    def test_odd_dim_rejected(self):
        with pytest.raises(ConfigError):
            ad.sinusoidal_embed(0.5, 7)


@pytest.mark.parametrize("seed", SEEDS)
class TestGradients:
    def test_matmul(self, seed):
        rng = np.random.default_rng(seed)
        a = rng.standard_normal((3, 4))
        b = rng.standard_normal((4, 5))
        grad_check(lambda x, y: weighted_sum(ad.matmul(x, y), np.random.default_rng(0)),
                   [a, b])

    def test_matmul_batched(self, seed):
        rng = np.random.default_rng(seed)
        a = rng.standard_normal((2, 3, 4))
        b = rng.standard_normal((4, 5))
        grad_check(lambda x, y: weighted_sum(ad.matmul(x, y), np.random.default_rng(0)),
                   [a, b])

    def test_add_broadcast(self, seed):
        rng = np.random.default_rng(seed)
        grad_check(lambda x, y: weighted_sum(ad.add(x, y), np.random.default_rng(0)),
                   [rng.standard_normal((3, 5)), rng.standard_normal(5)])

    def test_mul(self, seed):
        rng = np.random.default_rng(seed)
        grad_check(lambda x, y: weighted_sum(ad.mul(x, y), np.random.default_rng(0)),
                   [rng.standard_normal((4, 3)), rng.standard_normal((4, 3))])

    def test_relu(self, seed):
        rng = np.random.default_rng(seed)
        x = rng.standard_normal((4, 6))
        x[np.abs(x) < 0.05] += 0.2  # keep away from the kink
        grad_check(lambda t: weighted_sum(ad.relu(t), np.random.default_rng(0)), [x])

    def test_log_exp(self, seed):
        rng = np.random.default_rng(seed)
        x = rng.uniform(0.5, 2.0, size=(3, 4))
        grad_check(lambda t: weighted_sum(ad.log(ad.exp(t)), np.random.default_rng(0)), [x])

    def test_softmax(self, seed):
        rng = np.random.default_rng(seed)
        grad_check(lambda t: weighted_sum(ad.softmax(t), np.random.default_rng(0)),
                   [rng.standard_normal((3, 6))])

    def test_softmax_canonical(self, seed):
        rng = np.random.default_rng(seed)
        grad_check(lambda t: weighted_sum(ad.softmax(t, canonical=True),
                                          np.random.default_rng(0)),
                   [rng.standard_normal((3, 6))])

    def test_layer_norm(self, seed):
        rng = np.random.default_rng(seed)
        x = rng.standard_normal((3, 8))
        g = rng.standard_normal(8)
        b = rng.standard_normal(8)
        grad_check(lambda t, gg, bb: weighted_sum(ad.layer_norm(t, gg, bb),
                                                  np.random.default_rng(0)),
                   [x, g, b])

    def test_conv1d(self, seed):
        rng = np.random.default_rng(seed)
        x = rng.standard_normal((2, 3, 8))
        w = rng.standard_normal((4, 3, 3))
        b = rng.standard_normal(4)
        grad_check(lambda xx, ww, bb: weighted_sum(
            ad.conv1d(xx, ww, bb, stride=2, padding=1), np.random.default_rng(0)),
            [x, w, b], tol=1e-3)

    def test_max_pool(self, seed):
        rng = np.random.default_rng(seed)
        x = rng.standard_normal((2, 5, 4))
        grad_check(lambda t: weighted_sum(ad.max_pool_valid(t, np.array([3, 5])),
                                          np.random.default_rng(0)), [x])

    def test_attention(self, seed):
        rng = np.random.default_rng(seed)
        dim, tokens = 8, 4
        x = rng.standard_normal((tokens, dim))
        mats = [rng.standard_normal((dim, dim)) * 0.5 for _ in range(4)]

        def run(t, wq, wk, wv, wo):
            out = ad.multi_head_attention(t, t, t, 2, wq, wk, wv, wo)
            return weighted_sum(out, np.random.default_rng(0))

        grad_check(run, [x, *mats], tol=1e-3)

    def test_mean_sum_slice_concat_transpose_reshape(self, seed):
        rng = np.random.default_rng(seed)
        x = rng.standard_normal((3, 4, 2))

        def run(t):
            t = ad.transpose(t, (1, 0, 2))
            t = ad.reshape(t, (4, 6))
            t = ad.concat([t, ad.scale(t, 0.5)], axis=1)
            t = ad.slice_(t, (slice(0, 3), slice(None)))
            return ad.mean_(ad.sum_(t, axis=1))

        grad_check(run, [x])


class TestAdam:
    def test_zero_gradient_no_change(self):
        store = ParamStore()
        w = store.add("w", np.ones(4))
        before = w.data.copy()
        w.grad = np.zeros(4, dtype=np.float32)
        adam_step(store, lr=0.1)
        assert np.array_equal(w.data, before)

    def test_first_step_is_signed_lr(self):
        store = ParamStore()
        w = store.add("w", np.zeros(3))
        w.grad = np.array([0.5, -2.0, 1e-3], dtype=np.float32)
        adam_step(store, lr=0.01, eps=1e-8)
        assert np.allclose(w.data, [-0.01, 0.01, -0.01], atol=1e-5)

    def test_quadratic_bowl_converges(self):
        rng = np.random.default_rng(0)
        store = ParamStore()
        w = store.add("w", rng.standard_normal(5))
        for _ in range(500):
            loss = ad.sum_(ad.mul(w, w))
            loss.backward()
            adam_step(store, lr=0.05)
        assert np.linalg.norm(w.data) < 1e-3

    def test_nan_gradient_names_parameter(self):
        store = ParamStore()
        w = store.add("layer.w", np.ones(2))
        w.grad = np.array([np.nan, 0.0], dtype=np.float32)
        with pytest.raises(TrainingError, match="layer.w"):
            adam_step(store, lr=0.1)


class TestCheckpoint:
    def test_roundtrip_with_moments(self, tmp_path):
        rng = np.random.default_rng(0)
        store = ParamStore()
        store.add("a.w", rng.standard_normal((3, 4)))
        store.add("a.b", rng.standard_normal(4))
        store["a.w"].grad = rng.standard_normal((3, 4)).astype(np.float32)
        store["a.b"].grad = rng.standard_normal(4).astype(np.float32)
        adam_step(store, lr=1e-3)
        path = tmp_path / "model.ckpt"
        save_checkpoint(path, store, extra={"d_model": 64})
        back, extra = load_checkpoint(path)
        assert extra == {"d_model": 64}
        assert back.step == store.step
        assert back.names() == store.names()
        for name in store.names():
            assert np.array_equal(back[name].data, store[name].data)
            assert np.array_equal(back.m[name], store.m[name])
            assert np.array_equal(back.v[name], store.v[name])

    def test_truncated_blob_rejected(self, tmp_path):
        store = ParamStore()
        store.add("w", np.ones((4, 4)))
        path = tmp_path / "model.ckpt"
        save_checkpoint(path, store)
        raw = path.read_bytes()
        path.write_bytes(raw[:-8])
        from flowplan.errors import CheckpointError
        with pytest.raises(CheckpointError):
            load_checkpoint(path)
