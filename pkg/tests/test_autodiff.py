import numpy as np
import pytest

from aliaskg import autodiff as ad
from aliaskg.autodiff import Parameter, Tensor
from aliaskg.optim import (adamw_step, checkpoint_hash, dumps_checkpoint, load_checkpoint,
                           loads_checkpoint, save_checkpoint)

from gradcheck import check


def P(rng, *shape, lo=-1.0, hi=1.0):
    return Parameter(rng.uniform(lo, hi, size=shape))


def _weights(rng, shape):
    # a fixed random projection turns any tensor output into a scalar
    return Tensor(rng.normal(size=shape))


def _scalar(out, w):
    return ad.sum_(ad.mul(out, w))


OPS = {
    "add": lambda r, n, d: ([P(r, n, d), P(r, d)], lambda a, b: a + b),
    "sub": lambda r, n, d: ([P(r, n, d), P(r, n, d)], lambda a, b: a - b),
    "mul": lambda r, n, d: ([P(r, n, d), P(r, n, 1)], lambda a, b: a * b),
    "div": lambda r, n, d: ([P(r, n, d), P(r, n, 1, lo=0.5, hi=2.0)], lambda a, b: a / b),
    "matmul": lambda r, n, d: ([P(r, n, d), P(r, d, 3)], lambda a, b: a @ b),
    "matvec": lambda r, n, d: ([P(r, d), P(r, d, n)], lambda a, b: a @ b),
    "concat": lambda r, n, d: ([P(r, n, d), P(r, n, 2)], lambda a, b: ad.concat([a, b])),
    "sigmoid": lambda r, n, d: ([P(r, n, d, lo=-3, hi=3)], ad.sigmoid),
    "tanh": lambda r, n, d: ([P(r, n, d, lo=-3, hi=3)], ad.tanh),
    "mean": lambda r, n, d: ([P(r, n, d)], lambda a: ad.mean(a, axis=0)),
    "max": lambda r, n, d: ([P(r, n, d)], lambda a: ad.max_(a, axis=0)),
    "scale": lambda r, n, d: ([P(r, n, d)], lambda a: ad.scale(a, -2.5)),
    "take": lambda r, n, d: ([P(r, n, d)], lambda a: ad.take(a, [0, n - 1, 0])),
    "segment_sum": lambda r, n, d: ([P(r, n, d)],
                                    lambda a: ad.segment_sum(a, np.arange(n) % 2, 3)),
    "reshape": lambda r, n, d: ([P(r, n, d)], lambda a: ad.reshape(a, (-1,))),
}


@pytest.mark.parametrize("op", sorted(OPS))
@pytest.mark.parametrize("seed", range(7))
def test_op_gradients(op, seed):
    rng = np.random.default_rng(seed)
    n, d = int(rng.integers(2, 6)), int(rng.integers(1, 5))
    leaves, fn = OPS[op](rng, n, d)
    w = _weights(rng, fn(*[Tensor(p.data) for p in leaves]).shape)
    assert check(lambda: _scalar(fn(*leaves), w), leaves) < 1e-4


@pytest.mark.parametrize("seed", range(10))
def test_loss_gradients(seed):
    rng = np.random.default_rng(100 + seed)
    n = int(rng.integers(2, 8))
    u, v = P(rng, n), P(rng, n)
    assert check(lambda: ad.cosine_similarity(u, v), [u, v]) < 1e-4
    assert check(lambda: ad.mse(u, v), [u, v]) < 1e-4
    pred = P(rng, n, lo=0.05, hi=0.95)
    target = (rng.random(n) < 0.5).astype(float)
    assert check(lambda: ad.binary_cross_entropy(pred, target), [pred]) < 1e-4
    a, b = P(rng, 1), P(rng, 1)
    gamma = float(abs(a.data[0] - b.data[0])) + 0.3
    assert check(lambda: ad.margin_hinge(ad.reshape(a, ()), ad.reshape(b, ()), gamma),
                 [a, b]) < 1e-4


class TestOpValues:
    def test_cosine_self(self):
        v = np.random.default_rng(0).normal(size=7)
        assert ad.cosine_similarity(v, v).item() == pytest.approx(1.0)

    def test_cosine_zero_vector(self):
        u = Parameter(np.zeros(4))
        v = Parameter(np.ones(4))
        c = ad.cosine_similarity(u, v)
        assert c.item() == 0.0
        c.backward()
        assert not u.grad.any() and not v.grad.any()

    def test_margin_hinge(self):
        assert ad.margin_hinge(0.9, 0.9, 0.1).item() == pytest.approx(0.1)
        assert ad.margin_hinge(1.0, 0.5, 0.1).item() == 0.0
        assert ad.margin_hinge(0.6, 0.5, 0.1).item() == pytest.approx(0.0, abs=1e-15)

    def test_bce_at_target(self):
        t = np.array([0.0, 1.0, 1.0, 0.0, 1.0])
        n = t.size
        assert ad.binary_cross_entropy(t, t).item() * n <= n * 1.2e-7

    def test_bce_half(self):
        assert ad.binary_cross_entropy(np.full(3, 0.5), np.ones(3)).item() == \
            pytest.approx(np.log(2.0))

    def test_no_nan_when_saturated(self):
        x = Parameter(np.array([-800.0, 800.0]))
        loss = ad.binary_cross_entropy(ad.sigmoid(x), np.array([1.0, 0.0]))
        loss.backward()
        assert np.isfinite(loss.item()) and np.isfinite(x.grad).all()

    def test_shape_errors_name_op(self):
        with pytest.raises(ad.ShapeError, match="matmul.*\\(2, 3\\).*\\(2, 3\\)"):
            ad.matmul(np.ones((2, 3)), np.ones((2, 3)))
        with pytest.raises(ad.ShapeError, match="add"):
            ad.add(np.ones(3), np.ones(4))
        with pytest.raises(ad.ShapeError, match="cosine"):
            ad.cosine_similarity(np.ones(3), np.ones(4))


class TestBackward:
    def test_square(self):
        x = Parameter(np.array(3.0))
        (x * x).backward()
        assert x.grad == pytest.approx(6.0)

    def test_mse_closed_form(self):
        rng = np.random.default_rng(1)
        u = Parameter(rng.normal(size=6))
        v = rng.normal(size=6)
        ad.mse(u, v).backward()
        np.testing.assert_allclose(u.grad, 2 * (u.data - v) / 6, rtol=1e-12)

    def test_non_scalar_rejected(self):
        with pytest.raises(ad.ShapeError):
            (Parameter(np.ones(3)) * 2.0).backward()

    def test_gradients_accumulate(self):
        x = Parameter(np.array(2.0))
        (x * x).backward()
        (x * x).backward()
        assert x.grad == pytest.approx(8.0)
        x.zero_grad()
        assert x.grad == 0.0

    def test_no_grad_records_nothing(self):
        x = Parameter(np.ones(2))
        with ad.no_grad():
            y = x * 3.0
        assert y._parents == ()

    def test_shared_subexpression(self):
        x = Parameter(np.array(1.5))
        y = ad.sigmoid(x)
        ad.sum_(y * y + y).backward()
        s = 1 / (1 + np.exp(-1.5))
        assert x.grad == pytest.approx((2 * s + 1) * s * (1 - s))


class TestAdamW:
    def test_zero_gradient_no_decay(self):
        p = Parameter(np.array([1.0, -2.0]))
        adamw_step([p], lr=0.1)
        np.testing.assert_array_equal(p.data, [1.0, -2.0])

    def test_one_step_by_hand(self):
        p = Parameter(np.array(1.0))
        p.grad[...] = 1.0
        adamw_step([p], lr=0.1, beta1=0.9, beta2=0.999, weight_decay=0.0)
        # m_hat = 1, v_hat = 1  ->  theta = 1 - 0.1 * 1 / (1 + 1e-8)
        assert p.data == pytest.approx(1.0 - 0.1 / (1.0 + 1e-8), abs=1e-15)
        assert p.step == 1 and p.grad == 0.0

    def test_decoupled_weight_decay(self):
        p = Parameter(np.array(2.0))
        adamw_step([p], lr=0.1, weight_decay=0.5)
        assert p.data == pytest.approx(2.0 * (1 - 0.05))

    def test_deterministic(self):
        def run():
            rng = np.random.default_rng(3)
            p = Parameter(rng.normal(size=(4, 3)))
            t = rng.normal(size=(4, 3))
            for _ in range(25):
                ad.mse(p, t).backward()
                adamw_step([p], lr=0.05, weight_decay=0.01)
            return p.data.tobytes()

        assert run() == run()


class TestCheckpoint:
    def test_roundtrip(self, tmp_path):
        rng = np.random.default_rng(0)
        arrays = {"rel_emb": rng.normal(size=(3, 4)), "fe.b0": rng.normal(size=4),
                  "scalar": np.array(2.5)}
        save_checkpoint(tmp_path / "c.ckpt", arrays)
        back = load_checkpoint(tmp_path / "c.ckpt")
        assert list(back) == list(arrays)
        for k in arrays:
            np.testing.assert_array_equal(back[k], arrays[k])

    def test_layout(self):
        raw = dumps_checkpoint({"ab": np.array([[1.0, 2.0]])})
        assert raw[:4] == b"AKGP"
        assert int.from_bytes(raw[4:8], "little") == 1
        assert int.from_bytes(raw[8:12], "little") == 1
        assert int.from_bytes(raw[12:16], "little") == 2 and raw[16:18] == b"ab"
        assert int.from_bytes(raw[18:22], "little") == 2
        assert np.frombuffer(raw[38:], "<f8").tolist() == [1.0, 2.0]

    def test_bad_magic(self):
        with pytest.raises(ValueError):
            loads_checkpoint(b"XXXX" + bytes(8))

    def test_hash_stable(self):
        a = {"x": np.arange(3.0)}
        assert checkpoint_hash(a) == checkpoint_hash({"x": np.arange(3.0)})
