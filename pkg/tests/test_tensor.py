# Standard library includes
import unittest

# Internal library includes
from aaunet import ops
from aaunet.tensor import (Tensor, GraphNode, Parameter, backward, no_grad, precision,
        get_default_dtype, set_debug)
from aaunet.utils.gradcheck import (check_op, check_block, check_gradients, relative_error,
        run_gradcheck_suite, _op_cases)
from aaunet.errors import ShapeError, NonFiniteError

# External library includes
import numpy as np

def leaf(values, dtype=np.float64):
    arr = np.asarray(values, dtype=dtype)
    while arr.ndim < 4:
        arr = arr[np.newaxis]
    return GraphNode(Tensor(arr, dtype=dtype), requires_grad=True)

def grid(*rows):
    return np.array(rows, dtype=np.float64)[np.newaxis, np.newaxis]

def conv_oracle(x, w, padding, dilation=1, stride=1):
    n, c, h, wd = x.shape
    out_c, _, k, _ = w.shape
    ho = (h + 2 * padding - dilation * (k - 1) - 1) // stride + 1
    wo = (wd + 2 * padding - dilation * (k - 1) - 1) // stride + 1
    out = np.zeros((n, out_c, ho, wo))
    for b in range(n):
        for o in range(out_c):
            for i in range(ho):
                for j in range(wo):
                    total = 0.0
                    for ci in range(c):
                        for u in range(k):
                            for v in range(k):
                                y = i * stride - padding + u * dilation
                                xx = j * stride - padding + v * dilation
                                if 0 <= y < h and 0 <= xx < wd:
                                    total += w[o, ci, u, v] * x[b, ci, y, xx]
                    out[b, o, i, j] = total
    return out

class TensorTest(unittest.TestCase):
    def test_default_dtype(self):
        self.assertEqual(get_default_dtype(), np.float32)
        self.assertEqual(Tensor(np.zeros((1, 1, 2, 2))).dtype, np.float32)
        with precision(np.float64):
            self.assertEqual(Tensor(np.zeros((1, 1, 2, 2))).dtype, np.float64)
        self.assertEqual(get_default_dtype(), np.float32)

    def test_rank_and_extents(self):
        with self.assertRaises(ShapeError) as cm:
            Tensor(np.zeros((2, 2)))
        self.assertEqual(cm.exception.dimension, "rank")
        with self.assertRaises(ShapeError):
            Tensor(np.zeros((1, 0, 2, 2)))

    def test_read_only(self):
        t = Tensor(np.ones((1, 1, 2, 2)))
        with self.assertRaises(ValueError):
            t.data[0, 0, 0, 0] = 5
        copy = t.numpy()
        copy[0, 0, 0, 0] = 5
        self.assertEqual(t.data[0, 0, 0, 0], 1)

    def test_checksum_stable(self):
        a = Tensor(np.arange(4).reshape(1, 1, 2, 2))
        b = Tensor(np.arange(4).reshape(1, 1, 2, 2))
        c = Tensor(np.arange(4).reshape(1, 1, 4, 1))
        self.assertEqual(a.checksum(), b.checksum())
        self.assertNotEqual(a.checksum(), c.checksum())

    def test_parameter_assign(self):
        p = Parameter("w", np.zeros((1, 1, 2, 2)))
        p.assign(np.ones((1, 1, 2, 2)))
        self.assertTrue(np.all(p.value == 1))
        with self.assertRaises(ShapeError):
            p.assign(np.ones((1, 1, 3, 3)))

    def test_debug_nan_check(self):
        x = leaf([[np.nan, 1.0]])
        set_debug(True)
        try:
            with self.assertRaises(NonFiniteError):
                ops.add(x, x)
        finally:
            set_debug(False)
        ops.add(x, x)

class OpsTest(unittest.TestCase):
    def test_conv_scalar_scaling(self):
        out = ops.conv2d(grid([1, 2], [3, 4]), np.full((1, 1, 1, 1), 2.0),
                np.zeros((1, 1, 1, 1)))
        np.testing.assert_array_equal(out.data[0, 0], [[2, 4], [6, 8]])

    def test_conv_sliding_window_sum(self):
        out = ops.conv2d(grid([1, 2], [3, 4]), np.ones((1, 1, 3, 3)), padding=1)
        np.testing.assert_allclose(out.data[0, 0], np.full((2, 2), 10.0))

    def test_conv_dilated_same_size(self):
        for h, w in [(7, 7), (9, 12), (16, 5)]:
            out = ops.conv2d(np.ones((1, 2, h, w)), np.ones((3, 2, 3, 3)),
                    padding=3, dilation=3)
            self.assertEqual(out.shape, (1, 3, h, w))

    def test_conv_matches_loop_oracle(self):
        rng = np.random.default_rng(0)
        with precision(np.float64):
            for padding, dilation, stride in [(1, 1, 1), (2, 1, 1), (3, 3, 1), (1, 1, 2)]:
                x = rng.standard_normal((2, 3, 7, 6))
                w = rng.standard_normal((4, 3, 3, 3))
                out = ops.conv2d(x, w, padding=padding, dilation=dilation, stride=stride)
                np.testing.assert_allclose(out.data, conv_oracle(x, w, padding, dilation,
                    stride), atol=1e-12)

    def test_conv_shape_errors(self):
        with self.assertRaises(ShapeError) as cm:
            ops.conv2d(np.ones((1, 2, 4, 4)), np.ones((1, 3, 3, 3)), padding=1)
        self.assertEqual(cm.exception.dimension, "channels")
        with self.assertRaises(ShapeError):
            ops.conv2d(np.ones((1, 1, 2, 2)), np.ones((1, 1, 5, 5)))

    def test_max_pool(self):
        x = leaf(grid([1, 2], [3, 4]))
        out = ops.max_pool_2x2(x)
        self.assertEqual(out.data.ravel().tolist(), [4])
        backward(ops.sum_all(out))
        np.testing.assert_array_equal(x.grad[0, 0], [[0, 0], [0, 1]])

    def test_max_pool_constant_and_odd(self):
        out = ops.max_pool_2x2(np.full((1, 2, 4, 6), 3.0))
        self.assertEqual(out.shape, (1, 2, 2, 3))
        self.assertTrue(np.all(out.data == 3.0))
        with self.assertRaises(ShapeError):
            ops.max_pool_2x2(np.ones((1, 1, 3, 4)))

    def test_upsample(self):
        x = leaf(grid([1, 2], [3, 4]))
        out = ops.upsample_nearest_2x(x)
        np.testing.assert_array_equal(out.data[0, 0], [[1, 1, 2, 2], [1, 1, 2, 2],
            [3, 3, 4, 4], [3, 3, 4, 4]])
        backward(ops.sum_all(out))
        np.testing.assert_array_equal(x.grad, np.full((1, 1, 2, 2), 4.0))
        const = np.full((1, 3, 4, 4), 0.25)
        round_trip = ops.max_pool_2x2(ops.upsample_nearest_2x(const))
        np.testing.assert_array_equal(round_trip.data, const)

    def test_concat_and_slice(self):
        a = leaf(np.random.default_rng(1).standard_normal((2, 3, 4, 4)))
        b = leaf(np.zeros((2, 5, 4, 4)))
        out = ops.concat_channels(a, b)
        self.assertEqual(out.shape, (2, 8, 4, 4))
        np.testing.assert_array_equal(ops.slice_channels(out, 0, 3).data, a.data)
        backward(ops.sum_all(out))
        np.testing.assert_array_equal(a.grad, np.ones(a.shape))
        with self.assertRaises(ShapeError):
            ops.concat_channels(np.ones((1, 1, 2, 2)), np.ones((1, 1, 2, 4)))

    def test_elementwise(self):
        self.assertEqual(ops.sigmoid(np.zeros((1, 1, 1, 1))).data.item(), 0.5)
        self.assertAlmostEqual(ops.one_minus(np.full((1, 1, 1, 1), 0.3)).data.item(), 0.7,
                places=6)
        out = ops.relu(grid([-2.0, 3.0]))
        np.testing.assert_array_equal(out.data[0, 0], [[0, 3]])
        x = leaf(grid([1.0, 2.0]))
        np.testing.assert_array_equal(ops.add(x, x).data[0, 0], [[2, 4]])
        np.testing.assert_array_equal(ops.mul(x, x).data[0, 0], [[1, 4]])

    def test_broadcast_mul(self):
        rng = np.random.default_rng(2)
        features = rng.standard_normal((2, 3, 4, 5))
        np.testing.assert_allclose(ops.broadcast_mul(np.ones((2, 3, 1, 1)),
            features).data, features, rtol=1e-6)
        self.assertTrue(np.all(ops.broadcast_mul(np.zeros((2, 1, 4, 5)),
            features).data == 0))
        m = rng.random((2, 3, 1, 1))
        out = ops.broadcast_mul(m, np.full((2, 3, 4, 5), 1.5)).data
        for n in range(2):
            for c in range(3):
                self.assertTrue(np.allclose(out[n, c], m[n, c, 0, 0] * 1.5))
        with self.assertRaises(ShapeError):
            ops.broadcast_mul(np.ones((2, 2, 1, 1)), features)

    def test_global_average_pool(self):
        x = leaf(grid([1, 2], [3, 4]))
        out = ops.global_average_pool(x)
        self.assertEqual(out.data.item(), 2.5)
        backward(ops.sum_all(out))
        np.testing.assert_allclose(x.grad, np.full((1, 1, 2, 2), 0.25))
        const = ops.global_average_pool(np.full((1, 2, 3, 3), 7.0))
        np.testing.assert_allclose(const.data.ravel(), [7.0, 7.0])

    def test_sigmoid_saturation(self):
        for dtype in (np.float32, np.float64):
            with self.subTest(dtype=dtype), precision(dtype):
                out = ops.sigmoid(np.array([-800.0, -20.0, 20.0, 800.0]).reshape(1, 1, 2, 2))
                self.assertEqual(out.data.dtype, dtype)
                self.assertTrue(np.all(out.data > 0) and np.all(out.data < 1))
                self.assertLess(out.data[0, 0, 0, 0], 1e-8)
                self.assertGreater(out.data[0, 0, 1, 1], 1 - 1e-6)

    def test_conv_linearity(self):
        rng = np.random.default_rng(5)
        a, b = 1.7, -0.6
        with precision(np.float64):
            for k, padding, dilation in [(3, 1, 1), (5, 2, 1), (3, 3, 3), (3, 2, 2), (1, 0, 1)]:
                with self.subTest(k=k, dilation=dilation):
                    x, y = rng.standard_normal((2, 2, 3, 7, 6))
                    w, v = rng.standard_normal((2, 4, 3, k, k))

                    def conv(input, weight):
                        return ops.conv2d(input, weight, padding=padding,
                                dilation=dilation).data

                    np.testing.assert_allclose(conv(a * x + b * y, w),
                            a * conv(x, w) + b * conv(y, w), atol=1e-12)
                    np.testing.assert_allclose(conv(x, a * w + b * v),
                            a * conv(x, w) + b * conv(x, v), atol=1e-12)

    def test_conv_size_preservation(self):
        sizes = [(2 ** e, 2 ** e) for e in range(1, 9)] + [(32, 48), (12, 20)]
        for k, padding, dilation in [(3, 1, 1), (5, 2, 1), (3, 3, 3), (3, 2, 2), (1, 0, 1)]:
            for h, w in sizes:
                with self.subTest(k=k, dilation=dilation, h=h, w=w):
                    out = ops.conv2d(np.zeros((1, 2, h, w)), np.zeros((3, 2, k, k)),
                            padding=padding, dilation=dilation)
                    self.assertEqual(out.shape, (1, 3, h, w))

class BackwardTest(unittest.TestCase):
    def test_linear(self):
        x = leaf(np.random.default_rng(0).standard_normal((1, 2, 3, 3)))
        backward(ops.sum_all(ops.scale(x, 2)))
        np.testing.assert_array_equal(x.grad, np.full(x.shape, 2.0))

    def test_sigmoid_at_zero(self):
        x = leaf(np.zeros((1, 1, 1, 1)))
        backward(ops.sigmoid(x))
        self.assertAlmostEqual(x.grad.item(), 0.25)

    def test_reused_node_accumulates(self):
        x = leaf(grid([1.0, -2.0]))
        backward(ops.sum_all(ops.mul(x, x)))
        np.testing.assert_allclose(x.grad[0, 0], [[2.0, -4.0]])

    def test_needs_scalar(self):
        x = leaf(np.ones((1, 1, 2, 2)))
        with self.assertRaises(ShapeError):
            backward(ops.relu(x))

    def test_no_grad_detaches(self):
        x = leaf(np.ones((1, 1, 2, 2)))
        with no_grad():
            out = ops.sum_all(ops.relu(x))
        self.assertFalse(out.requires_grad)
        self.assertEqual(out.parents, ())

class GradcheckTest(unittest.TestCase):
    def test_relative_error(self):
        self.assertEqual(relative_error(1.0, 1.0), 0.0)
        self.assertAlmostEqual(relative_error(1.0, 1.1), 0.1 / 1.1)
        self.assertAlmostEqual(relative_error(0.0, 1e-6, floor=1e-3), 1e-3)

    def test_every_op(self):
        rng = np.random.default_rng(0)
        for name, op, inputs in _op_cases(rng):
            with self.subTest(op=name):
                result = check_op(name, op, inputs)
                self.assertTrue(result.passed, result)
                self.assertGreater(result.checked, 0)

    def test_bce_near_clamp_boundary(self):
        eps = 1e-3
        target = np.array([1.0, 0.0, 1.0, 0.0]).reshape(1, 1, 2, 2)
        # just inside and just outside [eps, 1 - eps]
        pred = leaf(np.array([eps * 1.5, 1 - eps * 1.5, eps * 0.5, 1 - eps * 0.5]
            ).reshape(1, 1, 2, 2))
        result = check_gradients(lambda: ops.binary_cross_entropy(pred, target,
            clamp_eps=eps), [pred], name="bce_clamp", eps=1e-7)
        self.assertTrue(result.passed, result)

    def test_detects_wrong_gradient(self):
        x = leaf(np.random.default_rng(3).standard_normal((1, 2, 3, 3)))

        def broken(input):
            node = ops.scale(input, 3.0)
            return GraphNode.from_op(node.data, [x], "broken",
                    lambda grad: (grad * 2.0,))

        result = check_gradients(lambda: broken(x), [x], name="broken")
        self.assertFalse(result.passed)

    def test_kinks_are_replaced(self):
        result = check_block("plain_conv", seed=0)
        self.assertTrue(result.passed, result)
        self.assertLessEqual(result.max_error, 1e-6)
        x = leaf(np.array([-1e-6, 2e-6, 0.5, -0.5]).reshape(1, 1, 2, 2))
        result = check_gradients(lambda: ops.relu(x), [x], name="relu_at_kink")
        self.assertEqual(result.skipped, 2)
        self.assertEqual(result.checked, 2)
        self.assertFalse(result.passed)

    def test_suite_passes(self):
        for seed in (0, 1, 2):
            with self.subTest(seed=seed):
                failed = [r for r in run_gradcheck_suite(seed) if not r.passed]
                self.assertEqual(failed, [])

if __name__ == "__main__":
    unittest.main()
