import numpy as np
import pytest

from oracles import central_diff, conv2d_oracle, max_rel_err
from stdo.errors import NumericsError, ShapeError
from stdo.nn import (
    conv2d_backward,
    conv2d_forward,
    l1_loss,
    pixel_shuffle,
    pixel_unshuffle,
    relu,
    relu_backward,
)


class TestConvForward:
    def test_identity_kernel(self, rng):
        x = rng.random((2, 3, 5, 5)).astype(np.float32)
        w = np.zeros((3, 3, 1, 1), dtype=np.float32)
        for c in range(3):
            w[c, c, 0, 0] = 1.0
        out = conv2d_forward(x, w, np.zeros(3), pad=0)
        np.testing.assert_array_equal(out, x)

    def test_ones_kernel_counts_taps(self):
        x = np.ones((1, 1, 4, 4), dtype=np.float32)
        w = np.ones((1, 1, 3, 3), dtype=np.float32)
        out = conv2d_forward(x, w, np.zeros(1), pad=1)
        assert out[0, 0, 1, 1] == 9.0
        assert out[0, 0, 1, 2] == 9.0
        assert out[0, 0, 0, 0] == 4.0
        assert out[0, 0, 0, 3] == 4.0
        assert out[0, 0, 3, 3] == 4.0
        assert out[0, 0, 0, 1] == 6.0

    def test_matches_oracle_seeded_case(self, rng):
        x = rng.standard_normal((1, 2, 5, 5)).astype(np.float32)
        w = rng.standard_normal((3, 2, 3, 3)).astype(np.float32)
        b = rng.standard_normal(3).astype(np.float32)
        out = conv2d_forward(x, w, b, pad=1)
        ref = conv2d_oracle(x, w, b, pad=1)
        assert np.abs(out - ref).max() <= 1e-5

    def test_matches_oracle_100_randomized(self, rng):
        for _ in range(100):
            n = int(rng.integers(1, 3))
            cin = int(rng.integers(1, 5))
            cout = int(rng.integers(1, 5))
            h = int(rng.integers(1, 9))
            w = int(rng.integers(1, 9))
            k = int(rng.choice([1, 3, 5]))
            x = rng.uniform(-1, 1, (n, cin, h, w)).astype(np.float32)
            wt = rng.uniform(-1, 1, (cout, cin, k, k)).astype(np.float32)
            b = rng.uniform(-1, 1, cout).astype(np.float32)
            out = conv2d_forward(x, wt, b, pad=(k - 1) // 2)
            ref = conv2d_oracle(x, wt, b, pad=(k - 1) // 2)
            assert np.abs(out - ref).max() <= 1e-5

    def test_shape_and_finite_errors(self, rng):
        x = rng.random((1, 2, 4, 4)).astype(np.float32)
        w = rng.random((3, 2, 3, 3)).astype(np.float32)
        with pytest.raises(ShapeError):
            conv2d_forward(x, w, np.zeros(3), pad=0)  # pad must be 1
        with pytest.raises(ShapeError):
            conv2d_forward(x[:, :1], w, np.zeros(3), pad=1)  # channel mismatch
        with pytest.raises(ShapeError):
            conv2d_forward(x, w, np.zeros(2), pad=1)  # bias length
        bad = x.copy()
        bad[0, 0, 0, 0] = np.nan
        with pytest.raises(NumericsError):
            conv2d_forward(bad, w, np.zeros(3), pad=1)


class TestConvBackward:
    def test_zero_cotangent(self, rng):
        x = rng.random((1, 2, 4, 4)).astype(np.float32)
        w = rng.random((2, 2, 3, 3)).astype(np.float32)
        gx, gw, gb = conv2d_backward(x, w, np.zeros((1, 2, 4, 4), dtype=np.float32))
        assert not gx.any() and not gw.any() and not gb.any()

    def test_identity_kernel_passes_grad(self, rng):
        x = rng.random((1, 1, 4, 4)).astype(np.float32)
        w = np.ones((1, 1, 1, 1), dtype=np.float32)
        g = rng.random((1, 1, 4, 4)).astype(np.float32)
        gx, _, _ = conv2d_backward(x, w, g)
        np.testing.assert_array_equal(gx, g)

    def test_matches_finite_differences(self, rng):
        # float64 probes isolate truncation error from float noise
        x = rng.uniform(-1, 1, (2, 2, 5, 5))
        w = rng.uniform(-1, 1, (3, 2, 3, 3))
        b = rng.uniform(-1, 1, 3)
        g = rng.uniform(-1, 1, (2, 3, 5, 5))

        def objective():
            return float(np.sum(conv2d_forward(x, w, b, pad=1) * g))

        gx, gw, gb = conv2d_backward(x, w, g)
        assert max_rel_err(gx, central_diff(objective, x)) < 1e-3
        assert max_rel_err(gw, central_diff(objective, w)) < 1e-3
        assert max_rel_err(gb, central_diff(objective, b)) < 1e-3
        np.testing.assert_allclose(gb, g.sum(axis=(0, 2, 3)), rtol=1e-12)

    def test_shape_mismatch(self, rng):
        x = rng.random((1, 2, 4, 4)).astype(np.float32)
        w = rng.random((2, 2, 3, 3)).astype(np.float32)
        with pytest.raises(ShapeError):
            conv2d_backward(x, w, np.zeros((1, 2, 5, 5), dtype=np.float32))


class TestRelu:
    def test_elementwise(self):
        x = np.array([-1.0, 0.0, 2.0], dtype=np.float32).reshape(1, 1, 1, 3)
        np.testing.assert_array_equal(relu(x).ravel(), [0.0, 0.0, 2.0])

    def test_all_negative(self):
        x = -np.ones((1, 2, 3, 3), dtype=np.float32)
        g = np.ones_like(x)
        assert not relu(x).any()
        assert not relu_backward(g, x).any()

    def test_grad_zero_at_kink(self):
        x = np.zeros((1, 1, 1, 1), dtype=np.float32)
        g = np.ones_like(x)
        assert relu_backward(g, x)[0, 0, 0, 0] == 0.0

    def test_matches_finite_differences_away_from_kink(self, rng):
        x = rng.uniform(-1, 1, (2, 2, 4, 4))
        x[np.abs(x) < 1e-2] = 0.5  # keep probes clear of the kink
        g = rng.uniform(-1, 1, x.shape)

        def objective():
            return float(np.sum(relu(x) * g))

        assert max_rel_err(relu_backward(g, x), central_diff(objective, x)) < 1e-3


class TestPixelShuffle:
    def test_definitional_r2(self):
        x = np.array([1.0, 2.0, 3.0, 4.0], dtype=np.float32).reshape(1, 4, 1, 1)
        out = pixel_shuffle(x, 2)
        assert out.shape == (1, 1, 2, 2)
        np.testing.assert_array_equal(out[0, 0], [[1.0, 2.0], [3.0, 4.0]])

    def test_r1_identity(self, rng):
        x = rng.random((2, 3, 4, 4)).astype(np.float32)
        np.testing.assert_array_equal(pixel_shuffle(x, 1), x)

    def test_bijection_bit_exact(self, rng):
        for r in (1, 2, 3, 4):
            x = rng.random((2, 3 * r * r, 5, 4)).astype(np.float32)
            np.testing.assert_array_equal(pixel_unshuffle(pixel_shuffle(x, r), r), x)
            y = rng.random((2, 3, 5 * r, 4 * r)).astype(np.float32)
            np.testing.assert_array_equal(pixel_shuffle(pixel_unshuffle(y, r), r), y)

    def test_channel_divisibility_error(self, rng):
        with pytest.raises(ShapeError):
            pixel_shuffle(rng.random((1, 6, 2, 2)).astype(np.float32), 2)


class TestL1Loss:
    def test_equal_inputs(self, rng):
        x = rng.random((1, 3, 4, 4)).astype(np.float32)
        loss, grad = l1_loss(x, x.copy())
        assert loss == 0.0
        assert not grad.any()

    def test_hand_arithmetic(self):
        pred = np.array([1.0, 3.0], dtype=np.float32).reshape(1, 1, 1, 2)
        target = np.zeros_like(pred)
        loss, grad = l1_loss(pred, target)
        assert loss == 2.0
        np.testing.assert_array_equal(grad.ravel(), [0.5, 0.5])

    def test_matches_finite_differences(self, rng):
        pred = rng.uniform(-1, 1, (2, 2, 3, 3))
        target = rng.uniform(-1, 1, pred.shape)
        # keep probes away from the |.| kink
        tight = np.abs(pred - target) < 1e-2
        pred[tight] += 0.05

        def objective():
            return l1_loss(pred, target)[0]

        _, grad = l1_loss(pred, target)
        assert max_rel_err(grad, central_diff(objective, pred, h=1e-4), floor=1e-6) < 1e-3

    def test_shape_mismatch(self, rng):
        with pytest.raises(ShapeError):
            l1_loss(
                rng.random((1, 1, 2, 2)).astype(np.float32),
                rng.random((1, 1, 2, 3)).astype(np.float32),
            )
