"""Kernel contract tests: worked examples, oracles, and determinism."""

import numpy as np
import pytest

from convreuse import ops
from convreuse.errors import ShapeMismatchError
from convreuse.tensor import OpCounter, Tensor, conv_macs, dense_macs

from fdcheck import conv2d_reference, spaced_values


class TestConv2dForward:
    def test_all_ones_3x3_kernel(self):
        x = Tensor(np.ones((1, 1, 4, 4), np.float32))
        w = Tensor(np.ones((1, 1, 3, 3), np.float32))
        b = Tensor(np.zeros(1, np.float32))
        y = ops.conv2d_forward(x, w, b)
        assert y.shape == (1, 1, 2, 2)
        assert np.all(y.data == 9.0)

    def test_identity_kernel(self):
        rng = np.random.default_rng(7)
        x = Tensor(rng.standard_normal((2, 1, 5, 6), dtype=np.float32))
        w = Tensor(np.ones((1, 1, 1, 1), np.float32))
        b = Tensor(np.zeros(1, np.float32))
        y = ops.conv2d_forward(x, w, b)
        np.testing.assert_array_equal(y.data, x.data)

    def test_matches_naive_loop_reference(self):
        rng = np.random.default_rng(42)
        x = rng.standard_normal((2, 3, 8, 8)).astype(np.float32)
        w = rng.standard_normal((4, 3, 3, 3)).astype(np.float32)
        b = rng.standard_normal(4).astype(np.float32)
        y = ops.conv2d_forward(Tensor(x), Tensor(w), Tensor(b))
        ref = conv2d_reference(x, w, b)
        assert y.shape == (2, 4, 6, 6)
        np.testing.assert_allclose(y.data, ref, atol=1e-5)

    @pytest.mark.parametrize("seed", range(10))
    def test_reference_match_across_geometries(self, seed):
        rng = np.random.default_rng(seed)
        n, c, f = (int(v) for v in rng.integers(1, 4, size=3))
        k = int(rng.integers(1, 4))
        h = int(rng.integers(k, k + 5))
        w_ = int(rng.integers(k, k + 5))
        x = rng.standard_normal((n, c, h, w_)).astype(np.float32)
        w = rng.standard_normal((f, c, k, k)).astype(np.float32)
        b = rng.standard_normal(f).astype(np.float32)
        y = ops.conv2d_forward(Tensor(x), Tensor(w), Tensor(b))
        np.testing.assert_allclose(y.data, conv2d_reference(x, w, b), atol=1e-5)

    def test_shape_mismatch_names_dimensions(self):
        x = Tensor(np.zeros((1, 2, 4, 4), np.float32))
        w = Tensor(np.zeros((1, 3, 3, 3), np.float32))
        b = Tensor(np.zeros(1, np.float32))
        with pytest.raises(ShapeMismatchError, match="channels 2 != weight channels 3"):
            ops.conv2d_forward(x, w, b)

    def test_kernel_larger_than_input(self):
        x = Tensor(np.zeros((1, 1, 2, 2), np.float32))
        w = Tensor(np.zeros((1, 1, 3, 3), np.float32))
        b = Tensor(np.zeros(1, np.float32))
        with pytest.raises(ShapeMismatchError):
            ops.conv2d_forward(x, w, b)

    def test_forward_is_deterministic(self):
        rng = np.random.default_rng(3)
        x = Tensor(rng.standard_normal((3, 3, 10, 10)).astype(np.float32))
        w = Tensor(rng.standard_normal((5, 3, 3, 3)).astype(np.float32))
        b = Tensor(rng.standard_normal(5).astype(np.float32))
        y1 = ops.conv2d_forward(x, w, b)
        y2 = ops.conv2d_forward(x, w, b)
        assert np.array_equal(y1.data, y2.data)

    def test_mac_count(self):
        counter = OpCounter()
        x = Tensor(np.zeros((2, 3, 8, 8), np.float32))
        w = Tensor(np.zeros((4, 3, 3, 3), np.float32))
        b = Tensor(np.zeros(4, np.float32))
        ops.conv2d_forward(x, w, b, counter)
        assert counter.forward_macs == 2 * 4 * 3 * 9 * 6 * 6
        assert counter.forward_macs == conv_macs(2, 3, 4, 3, 6, 6)


class TestConv2dBackward:
    def test_zero_upstream_gradient(self):
        rng = np.random.default_rng(0)
        x = Tensor(rng.standard_normal((2, 2, 5, 5)).astype(np.float32))
        w = Tensor(rng.standard_normal((3, 2, 3, 3)).astype(np.float32))
        dy = Tensor(np.zeros((2, 3, 3, 3), np.float32))
        dx, dw, db = ops.conv2d_backward(x, w, dy)
        assert not dx.data.any() and not dw.data.any() and not db.data.any()

    def test_scalar_product_rule(self):
        x = Tensor(np.full((1, 1, 1, 1), 2.5, np.float32))
        w = Tensor(np.full((1, 1, 1, 1), -1.5, np.float32))
        dy = Tensor(np.full((1, 1, 1, 1), 3.0, np.float32))
        dx, dw, db = ops.conv2d_backward(x, w, dy)
        assert dw.data.item() == pytest.approx(2.5 * 3.0)
        assert dx.data.item() == pytest.approx(-1.5 * 3.0)
        assert db.data.item() == pytest.approx(3.0)

    def test_upstream_shape_checked(self):
        x = Tensor(np.zeros((1, 1, 5, 5), np.float32))
        w = Tensor(np.zeros((1, 1, 3, 3), np.float32))
        dy = Tensor(np.zeros((1, 1, 2, 2), np.float32))
        with pytest.raises(ShapeMismatchError):
            ops.conv2d_backward(x, w, dy)

    def test_need_dx_false_skips_dx_and_its_macs(self):
        rng = np.random.default_rng(1)
        x = Tensor(rng.standard_normal((2, 2, 5, 5)).astype(np.float32))
        w = Tensor(rng.standard_normal((3, 2, 3, 3)).astype(np.float32))
        dy = Tensor(rng.standard_normal((2, 3, 3, 3)).astype(np.float32))
        full, partial = OpCounter(), OpCounter()
        dx, _, _ = ops.conv2d_backward(x, w, dy, full, need_dx=True)
        nodx, _, _ = ops.conv2d_backward(x, w, dy, partial, need_dx=False)
        assert dx is not None and nodx is None
        assert full.backward_macs == 2 * conv_macs(2, 2, 3, 3, 3, 3)
        assert partial.backward_macs == conv_macs(2, 2, 3, 3, 3, 3)


class TestMaxPool:
    def test_single_window(self):
        x = Tensor(np.array([[1, 2], [3, 4]], np.float32).reshape(1, 1, 2, 2))
        y, idx = ops.maxpool2_forward(x)
        assert y.data.item() == 4.0
        assert idx.item() == 3  # row-major offset of element (1, 1)

    def test_constant_input_tie_break(self):
        x = Tensor(np.full((1, 2, 4, 4), 7.0, np.float32))
        y, idx = ops.maxpool2_forward(x)
        assert np.all(y.data == 7.0)
        assert np.all(idx == 0)

    def test_odd_trailing_row_col_dropped(self):
        x = Tensor(np.arange(25, dtype=np.float32).reshape(1, 1, 5, 5))
        y, idx = ops.maxpool2_forward(x)
        assert y.shape == (1, 1, 2, 2)
        # windows never see row/col 4
        assert y.data.max() == 18.0

    def test_input_too_small(self):
        with pytest.raises(ShapeMismatchError):
            ops.maxpool2_forward(Tensor(np.zeros((1, 1, 1, 4), np.float32)))

    def test_backward_routes_to_argmax(self):
        rng = np.random.default_rng(5)
        x = Tensor(spaced_values(rng, (1, 1, 4, 4)))
        y, idx = ops.maxpool2_forward(x)
        dy = Tensor(np.ones_like(y.data))
        dx = ops.maxpool2_backward(idx, dy, x.shape)
        assert dx.shape == x.shape
        assert (dx.data != 0).sum() == 4
        assert dx.data.sum() == 4.0
        # the nonzeros sit exactly at each window's max position
        for ho in range(2):
            for wo in range(2):
                window = x.data[0, 0, 2 * ho:2 * ho + 2, 2 * wo:2 * wo + 2]
                dwin = dx.data[0, 0, 2 * ho:2 * ho + 2, 2 * wo:2 * wo + 2]
                assert dwin.reshape(-1)[window.reshape(-1).argmax()] == 1.0

    def test_backward_zero_grad(self):
        x = Tensor(np.arange(16, dtype=np.float32).reshape(1, 1, 4, 4))
        y, idx = ops.maxpool2_forward(x)
        dx = ops.maxpool2_backward(idx, Tensor(np.zeros_like(y.data)), x.shape)
        assert not dx.data.any()

    def test_backward_rejects_bad_index(self):
        idx = np.full((1, 1, 1, 1), 5, np.uint8)
        dy = Tensor(np.ones((1, 1, 1, 1), np.float32))
        with pytest.raises(ShapeMismatchError, match="out of range"):
            ops.maxpool2_backward(idx, dy, (1, 1, 2, 2))


class TestRelu:
    def test_forward(self):
        y = ops.relu(Tensor(np.array([-1.0, 0.0, 2.0], np.float32)))
        np.testing.assert_array_equal(y.data, [0.0, 0.0, 2.0])

    def test_backward_zero_convention(self):
        x = Tensor(np.array([-1.0, 0.0, 2.0], np.float32))
        dx = ops.relu_backward(x, Tensor(np.array([5.0, 5.0, 5.0], np.float32)))
        np.testing.assert_array_equal(dx.data, [0.0, 0.0, 5.0])


class TestDense:
    def test_identity_weight(self):
        x = Tensor(np.random.default_rng(0).standard_normal((3, 4)).astype(np.float32))
        w = Tensor(np.eye(4, dtype=np.float32))
        b = Tensor(np.zeros(4, np.float32))
        y = ops.dense_forward(x, w, b)
        np.testing.assert_array_equal(y.data, x.data)

    def test_worked_example(self):
        x = Tensor(np.array([[1.0, 2.0]], np.float32))
        w = Tensor(np.array([[3.0], [4.0]], np.float32))
        b = Tensor(np.array([5.0], np.float32))
        y = ops.dense_forward(x, w, b)
        assert y.data.item() == 16.0

    def test_dimension_mismatch(self):
        with pytest.raises(ShapeMismatchError, match="inner dims"):
            ops.dense_forward(Tensor(np.zeros((1, 3), np.float32)),
                              Tensor(np.zeros((4, 2), np.float32)),
                              Tensor(np.zeros(2, np.float32)))

    def test_backward_shapes_and_macs(self):
        rng = np.random.default_rng(2)
        x = Tensor(rng.standard_normal((5, 3)).astype(np.float32))
        w = Tensor(rng.standard_normal((3, 4)).astype(np.float32))
        dy = Tensor(rng.standard_normal((5, 4)).astype(np.float32))
        counter = OpCounter()
        dx, dw, db = ops.dense_backward(x, w, dy, counter)
        assert dx.shape == x.shape and dw.shape == w.shape and db.shape == (4,)
        assert counter.backward_macs == 2 * dense_macs(5, 3, 4)

    def test_forward_macs(self):
        counter = OpCounter()
        ops.dense_forward(Tensor(np.zeros((5, 3), np.float32)),
                          Tensor(np.zeros((3, 4), np.float32)),
                          Tensor(np.zeros(4, np.float32)), counter)
        assert counter.forward_macs == dense_macs(5, 3, 4)


class TestSoftmaxXent:
    def test_uniform_logits(self):
        loss, _ = ops.softmax_xent(Tensor(np.zeros((4, 10), np.float32)),
                                   np.array([0, 3, 5, 9]))
        assert loss == pytest.approx(np.log(10.0), rel=1e-6)

    def test_near_one_hot(self):
        logits = np.zeros((1, 10), np.float32)
        logits[0, 0] = 20.0
        loss, _ = ops.softmax_xent(Tensor(logits), np.array([0]))
        assert loss == pytest.approx(0.0, abs=1e-6)

    def test_gradient_rows_sum_to_zero(self):
        rng = np.random.default_rng(11)
        logits = Tensor(rng.standard_normal((8, 10)).astype(np.float32))
        labels = rng.integers(0, 10, size=8)
        _, dlogits = ops.softmax_xent(logits, labels)
        np.testing.assert_allclose(dlogits.data.sum(axis=1), 0.0, atol=1e-6)

    def test_label_out_of_range(self):
        with pytest.raises(ShapeMismatchError, match=r"\[0, 10\)"):
            ops.softmax_xent(Tensor(np.zeros((1, 10), np.float32)), np.array([10]))


class TestSgdStep:
    def test_worked_example(self):
        p = Tensor(np.array([1.0], np.float32))
        ops.sgd_step(p, Tensor(np.array([0.5], np.float32)), 0.01)
        assert p.data.item() == pytest.approx(0.995)

    def test_zero_grad_is_bit_exact_noop(self):
        rng = np.random.default_rng(4)
        before = rng.standard_normal(17).astype(np.float32)
        p = Tensor(before.copy())
        ops.sgd_step(p, Tensor(np.zeros(17, np.float32)), 0.1)
        assert np.array_equal(p.data, before)

    def test_two_steps_closed_form(self):
        p = Tensor(np.array([2.0], np.float32))
        for _ in range(2):
            ops.sgd_step(p, Tensor(p.data.copy()), 0.1)
        assert p.data.item() == pytest.approx(2.0 * 0.9 ** 2, rel=1e-6)

    def test_counts_param_updates(self):
        counter = OpCounter()
        p = Tensor(np.zeros((3, 4), np.float32))
        ops.sgd_step(p, Tensor(np.zeros((3, 4), np.float32)), 0.1, counter)
        assert counter.param_updates == 12

    def test_shape_mismatch(self):
        with pytest.raises(ShapeMismatchError):
            ops.sgd_step(Tensor(np.zeros(3, np.float32)),
                         Tensor(np.zeros(4, np.float32)), 0.1)


class TestTensorInvariants:
    def test_outputs_stay_float32_and_contiguous(self):
        rng = np.random.default_rng(9)
        x = Tensor(rng.standard_normal((2, 3, 8, 8)).astype(np.float32))
        w = Tensor(rng.standard_normal((4, 3, 3, 3)).astype(np.float32))
        b = Tensor(rng.standard_normal(4).astype(np.float32))
        y = ops.conv2d_forward(x, w, b)
        assert y.data.dtype == np.float32 and y.data.flags.c_contiguous
        pooled, _ = ops.maxpool2_forward(y)
        assert pooled.data.dtype == np.float32
        assert pooled.all_finite()

    def test_grad_shape_checked(self):
        with pytest.raises(ShapeMismatchError):
            Tensor(np.zeros(3, np.float32), grad=np.zeros(4, np.float32))

    def test_counter_monotonic_within_use(self):
        counter = OpCounter()
        x = Tensor(np.zeros((1, 3, 8, 8), np.float32))
        w = Tensor(np.zeros((2, 3, 3, 3), np.float32))
        b = Tensor(np.zeros(2, np.float32))
        seen = []
        for _ in range(3):
            ops.conv2d_forward(x, w, b, counter)
            seen.append(counter.forward_macs)
        assert seen == sorted(seen) and seen[0] > 0
