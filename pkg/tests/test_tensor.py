"""Tensor core: ops, autodiff, optimizers, determinism."""

import numpy as np
import pytest

from inrstore import tensor as T
from inrstore.errors import ContractError, ShapeMismatchError, TapeConsumedError
from inrstore.gradcheck import check_case, standard_op_cases
from inrstore.optim import Adam, AdamW
from inrstore.rng import rng_stream
from inrstore.tensor import Tensor, no_grad, parameter


class TestLinear:
    def test_identity(self):
        x = Tensor([[1.0, 2.0]])
        out = T.linear(x, Tensor(np.eye(2, dtype=np.float32)), Tensor(np.zeros(2, np.float32)))
        np.testing.assert_array_equal(out.data, [[1.0, 2.0]])

    def test_zero_weights_pass_bias(self):
        x = Tensor([[3.0, 4.0]])
        out = T.linear(x, Tensor(np.zeros((2, 2), np.float32)), Tensor([5.0, 6.0]))
        np.testing.assert_array_equal(out.data, [[5.0, 6.0]])

    def test_matches_scalar_loop(self):
        rng = rng_stream(0, "linear-oracle")
        x = rng.normal(size=(2, 3)).astype(np.float32)
        w = rng.normal(size=(3, 2)).astype(np.float32)
        b = rng.normal(size=2).astype(np.float32)
        out = T.linear(Tensor(x), Tensor(w), Tensor(b)).data
        expected = np.zeros((2, 2), dtype=np.float64)
        for i in range(2):
            for o in range(2):
                acc = float(b[o])
                for j in range(3):
                    acc += float(x[i, j]) * float(w[j, o])
                expected[i, o] = acc
        np.testing.assert_allclose(out, expected, rtol=1e-5)

    def test_dim_mismatch(self):
        with pytest.raises(ShapeMismatchError):
            T.linear(Tensor(np.ones((2, 3))), Tensor(np.ones((2, 3))), Tensor(np.ones(3)))


class TestConv3dDown:
    def test_window_sum(self):
        x = Tensor(np.ones((1, 2, 2, 2), np.float32))
        k = Tensor(np.ones((2, 1, 2, 2, 2), np.float32))
        b = Tensor(np.zeros(2, np.float32))
        out = T.conv3d_down(x, k, b).data
        np.testing.assert_array_equal(out.reshape(-1), [8.0, 8.0])

    def test_zero_input_passes_bias(self):
        x = Tensor(np.zeros((1, 4, 4, 4), np.float32))
        k = Tensor(np.ones((2, 1, 2, 2, 2), np.float32))
        b = Tensor(np.array([1.5, -2.5], np.float32))
        out = T.conv3d_down(x, k, b).data
        assert np.all(out[0] == np.float32(1.5))
        assert np.all(out[1] == np.float32(-2.5))

    def test_matches_six_loop_oracle(self):
        rng = rng_stream(0, "conv-oracle")
        x = rng.normal(size=(8, 4, 4, 4)).astype(np.float32)
        k = rng.normal(size=(16, 8, 2, 2, 2)).astype(np.float32)
        b = rng.normal(size=16).astype(np.float32)
        out = T.conv3d_down(Tensor(x), Tensor(k), Tensor(b)).data
        expected = np.zeros((16, 2, 2, 2), dtype=np.float64)
        for o in range(16):
            for i in range(2):
                for j in range(2):
                    for l in range(2):
                        acc = float(b[o])
                        for c in range(8):
                            for a in range(2):
                                for bb in range(2):
                                    for cc in range(2):
                                        acc += float(x[c, 2 * i + a, 2 * j + bb, 2 * l + cc]) * float(
                                            k[o, c, a, bb, cc]
                                        )
                        expected[o, i, j, l] = acc
        np.testing.assert_allclose(out, expected, rtol=2e-4, atol=1e-4)

    def test_odd_spatial_size_rejected(self):
        with pytest.raises(ShapeMismatchError):
            T.conv3d_down(
                Tensor(np.zeros((1, 3, 3, 3), np.float32)),
                Tensor(np.zeros((2, 1, 2, 2, 2), np.float32)),
                Tensor(np.zeros(2, np.float32)),
            )


class TestBackward:
    def test_square_gradient(self):
        x = parameter(np.array([3.0]), dtype=np.float64)
        T.square(x).backward()
        np.testing.assert_allclose(x.grad, [6.0])

    def test_sin_gradient_at_zero(self):
        x = parameter(np.array([0.0]), dtype=np.float64)
        T.sin(x).backward()
        np.testing.assert_allclose(x.grad, [1.0])

    def test_non_scalar_rejected(self):
        x = parameter(np.ones(3))
        with pytest.raises(ContractError):
            T.square(x).backward()

    def test_second_backward_rejected(self):
        x = parameter(np.array([2.0]))
        y = T.square(x)
        y.backward()
        with pytest.raises(TapeConsumedError):
            y.backward()

    def test_consumed_intermediate_rejected(self):
        x = parameter(np.array([2.0]))
        y = T.square(x)
        T.tsum(y).backward()
        with pytest.raises(TapeConsumedError):
            T.tsum(T.square(y)).backward()

    def test_mlp_loss_matches_finite_differences(self):
        rng = rng_stream(7, "mlp-fd")
        w1 = parameter(rng.normal(size=(3, 8)), dtype=np.float64)
        b1 = parameter(rng.normal(size=8), dtype=np.float64)
        w2 = parameter(rng.normal(size=(8, 1)), dtype=np.float64)
        b2 = parameter(rng.normal(size=1), dtype=np.float64)
        x = Tensor(rng.normal(size=(5, 3)))
        target = Tensor(rng.normal(size=(5, 1)))

        def build():
            h = T.relu(T.linear(x, w1, b1))
            out = T.linear(h, w2, b2)
            return T.tmean(T.square(T.sub(out, target)))

        worst = check_case(build, [w1, b1, w2, b2])
        assert worst < 1e-4

    def test_no_grad_blocks_recording(self):
        x = parameter(np.ones(3))
        with no_grad():
            y = T.square(x)
        assert not y.requires_grad
        assert y._parents == ()


class TestGradcheckAllOps:
    @pytest.mark.parametrize("idx,name", [
        (i, name) for i, (name, _, _) in enumerate(standard_op_cases(rng_stream(0, "enum")))
    ])
    def test_op(self, idx, name):
        worst = 0.0
        for trial in range(5):
            cases = standard_op_cases(rng_stream(trial, "gradcheck", name))
            cname, build, params = cases[idx]
            assert cname == name
            worst = max(worst, check_case(build, params))
        assert worst < 1e-4, f"{name}: rel err {worst}"


class TestOptimizers:
    def test_zero_grad_zero_decay_unchanged(self):
        p = parameter(np.array([1.0, -2.0], np.float32))
        opt = Adam([p], lr=1e-3)
        p.grad = np.zeros(2, dtype=np.float32)
        opt.step()
        np.testing.assert_array_equal(p.data, [1.0, -2.0])

    def test_first_step_magnitude_is_lr(self):
        rng = rng_stream(1, "adam")
        g = rng.normal(size=16).astype(np.float32)
        g[np.abs(g) < 1e-2] = 0.5
        p = parameter(np.zeros(16, np.float32))
        opt = Adam([p], lr=1e-3)
        p.grad = g.copy()
        opt.step()
        np.testing.assert_allclose(p.data, -1e-3 * np.sign(g), rtol=1e-4, atol=1e-7)

    def test_adamw_minus_adam_equals_decoupled_decay(self):
        rng = rng_stream(2, "adamw")
        init = rng.normal(size=32).astype(np.float32)
        g = rng.normal(size=32).astype(np.float32)
        lr, wd = 1e-4, 1e-2
        p1 = parameter(init.copy())
        p2 = parameter(init.copy())
        a = Adam([p1], lr=lr)
        aw = AdamW([p2], lr=lr, weight_decay=wd)
        p1.grad = g.copy()
        p2.grad = g.copy()
        a.step()
        aw.step()
        expected_diff = init - init * np.float32(1.0 - lr * wd)
        # exact in real arithmetic; float32 leaves one ulp of the param scale
        np.testing.assert_allclose(
            p1.data - p2.data, expected_diff, rtol=1e-5, atol=2 * np.abs(init).max() * 2**-24
        )

    def test_grad_shape_mismatch(self):
        p = parameter(np.zeros(3, np.float32))
        opt = Adam([p])
        p.grad = np.zeros(4, dtype=np.float32)
        with pytest.raises(ShapeMismatchError):
            opt.step()

    def test_step_counter_increases(self):
        p = parameter(np.zeros(2, np.float32))
        opt = Adam([p])
        for expect in (1, 2, 3):
            p.grad = np.ones(2, dtype=np.float32)
            opt.step()
            assert opt.step_count == expect


class TestDeterminism:
    def test_identical_seeds_bit_identical(self):
        def run():
            rng = rng_stream(5, "det")
            w = parameter(rng.normal(size=(4, 4)).astype(np.float32))
            opt = Adam([w], lr=1e-3)
            for _ in range(5):
                x = Tensor(rng.normal(size=(8, 4)).astype(np.float32))
                loss = T.tmean(T.square(T.matmul(x, w)))
                opt.zero_grad()
                loss.backward()
                opt.step()
            return w.data.copy()

        a, b = run(), run()
        assert np.array_equal(a, b)
