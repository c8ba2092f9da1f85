"""Differentiation engine and optimizer tests."""

import numpy as np
import pytest

from wsee import diffcore as dc


def numeric_grads(f, arrays, h=1e-6):
    """Central finite differences of a scalar function of several arrays."""
    out = []
    for k, a in enumerate(arrays):
        g = np.zeros_like(a)
        it = np.nditer(a, flags=["multi_index"])
        for _ in it:
            idx = it.multi_index
            step = h * max(abs(a[idx]), 1e-3)
            up = [x.copy() for x in arrays]
            dn = [x.copy() for x in arrays]
            up[k][idx] += step
            dn[k][idx] -= step
            g[idx] = (f(up) - f(dn)) / (2 * step)
        out.append(g)
    return out


def check_gradients(build, arrays, rtol=1e-5):
    """Compare backward() against finite differences of the same graph."""
    params = [dc.parameter(a.copy()) for a in arrays]
    loss = build(params)
    dc.backward(loss)

    def value(xs):
        return float(build([dc.constant(x) for x in xs]).value[0, 0])

    for p, g in zip(params, numeric_grads(value, arrays)):
        np.testing.assert_allclose(p.grad, g, rtol=rtol, atol=1e-7)


def scalarizer(rng, shape):
    """Random fixed weighting that turns a matrix output into a scalar."""
    w = dc.constant(rng.normal(size=shape))

    def apply(t):
        return dc.reduce_sum(dc.hadamard(t, w))

    return apply


class TestPrimitiveValues:
    def test_relu(self):
        t = dc.relu(dc.constant([[-1.0, 2.0]]))
        assert np.array_equal(t.value, [[0.0, 2.0]])

    def test_clamp_inside_and_outside(self):
        x = dc.parameter([[0.5, 1.5]])
        y = dc.reduce_sum(dc.clamp(x, 0.0, 1.0))
        dc.backward(y)
        assert np.array_equal(y._parents[0].value, [[0.5, 1.0]])
        assert np.array_equal(x.grad, [[1.0, 0.0]])

    def test_relu_gradient_at_positive_point(self):
        x = dc.parameter([[2.0]])
        dc.backward(dc.reduce_sum(dc.relu(x)))
        assert x.grad[0, 0] == 1.0

    def test_relu_gradient_zero_at_kink(self):
        x = dc.parameter([[0.0]])
        dc.backward(dc.reduce_sum(dc.relu(x)))
        assert x.grad[0, 0] == 0.0

    def test_clamp_gradient_zero_at_boundary(self):
        x = dc.parameter([[0.0, 1.0]])
        dc.backward(dc.reduce_sum(dc.clamp(x, 0.0, 1.0)))
        assert np.array_equal(x.grad, [[0.0, 0.0]])

    def test_huber_piecewise_values(self):
        a = dc.constant([[0.5, 2.0]])
        b = dc.constant([[0.0, 0.0]])
        h = dc.huber(a, b, delta=1.0)
        assert h.value[0, 0] == pytest.approx(0.125)
        assert h.value[0, 1] == pytest.approx(1.5)

    def test_shape_mismatch_rejected(self):
        with pytest.raises(ValueError):
            dc.add(dc.constant(np.ones((2, 2))), dc.constant(np.ones((2, 3))))
        with pytest.raises(ValueError):
            dc.matmul(dc.constant(np.ones((2, 2))), dc.constant(np.ones((3, 2))))

    def test_non_finite_inputs_rejected(self):
        with pytest.raises(ValueError):
            dc.constant([[np.nan]])
        with pytest.raises(ValueError):
            dc.parameter([[np.inf, 1.0]])

    def test_inputs_not_mutated(self):
        a = dc.constant([[1.0, -2.0]])
        before = a.value.copy()
        dc.relu(a)
        dc.clamp(a, -1.0, 1.0)
        dc.neg(a)
        assert np.array_equal(a.value, before)


class TestPrimitiveGradients:
    def test_matmul(self):
        rng = np.random.default_rng(0)
        for _ in range(10):
            out = scalarizer(rng, (3, 2))
            check_gradients(lambda ps: out(dc.matmul(ps[0], ps[1])),
                            [rng.normal(size=(3, 4)), rng.normal(size=(4, 2))])

    def test_elementwise_binary(self):
        rng = np.random.default_rng(1)
        for op in (dc.add, dc.sub, dc.hadamard):
            for _ in range(5):
                out = scalarizer(rng, (3, 3))
                check_gradients(lambda ps, op=op: out(op(ps[0], ps[1])),
                                [rng.normal(size=(3, 3)), rng.normal(size=(3, 3))])

    def test_huber_both_sides(self):
        rng = np.random.default_rng(2)
        for _ in range(10):
            # keep residuals away from the quadratic/linear switch at |r|=1
            a = rng.normal(size=(4, 2))
            b = a - rng.choice([-1, 1], size=(4, 2)) * rng.uniform(0.2, 0.8, size=(4, 2))
            b[0] = a[0] - rng.choice([-1, 1], size=2) * rng.uniform(1.2, 2.0, size=2)
            out = scalarizer(rng, (4, 2))
            check_gradients(lambda ps: out(dc.huber(ps[0], ps[1], delta=1.0)), [a, b])

    def test_unary_smooth(self):
        rng = np.random.default_rng(3)
        for _ in range(5):
            pos = rng.uniform(0.2, 3.0, size=(3, 3))
            out = scalarizer(rng, (3, 3))
            check_gradients(lambda ps: out(dc.log(ps[0])), [pos])
            check_gradients(lambda ps: out(dc.reciprocal(ps[0])), [pos])
            check_gradients(lambda ps: out(dc.neg(ps[0])), [rng.normal(size=(3, 3))])
            check_gradients(lambda ps: out(dc.scalar_mul(-1.7, ps[0])),
                            [rng.normal(size=(3, 3))])

    def test_relu_away_from_kink(self):
        rng = np.random.default_rng(4)
        for _ in range(10):
            x = rng.uniform(0.2, 1.5, size=(3, 3)) * rng.choice([-1, 1], size=(3, 3))
            out = scalarizer(rng, (3, 3))
            check_gradients(lambda ps: out(dc.relu(ps[0])), [x])

    def test_clamp_scalar_and_array_bounds(self):
        rng = np.random.default_rng(5)
        for _ in range(10):
            x = rng.uniform(-1.2, 1.5, size=(3, 3))
            x[np.abs(x + 0.5) < 1e-2] += 0.05  # margin from lo
            x[np.abs(x - 0.8) < 1e-2] += 0.05  # margin from hi
            out = scalarizer(rng, (3, 3))
            check_gradients(lambda ps: out(dc.clamp(ps[0], -0.5, 0.8)), [x])
            lo = np.full((3, 3), -0.5)
            hi = rng.uniform(0.7, 0.9, size=(3, 3))
            hi[np.abs(hi - x) < 1e-2] += 0.05
            check_gradients(lambda ps: out(dc.clamp(ps[0], lo, hi)), [x])

    def test_structural_ops(self):
        rng = np.random.default_rng(6)
        out_wide = scalarizer(rng, (3, 6))
        check_gradients(
            lambda ps: out_wide(dc.row_concat(ps[0], ps[1], ps[2])),
            [rng.normal(size=(3, 1)), rng.normal(size=(3, 2)), rng.normal(size=(3, 3))])
        out_slice = scalarizer(rng, (3, 2))
        check_gradients(lambda ps: out_slice(dc.slice_cols(ps[0], 1, 3)),
                        [rng.normal(size=(3, 4))])
        out_rect = scalarizer(rng, (2, 6))
        check_gradients(lambda ps: out_rect(dc.reshape(ps[0], 2, 6)),
                        [rng.normal(size=(3, 4))])
        out_bias = scalarizer(rng, (4, 3))
        check_gradients(lambda ps: out_bias(dc.add_rowvec(ps[0], ps[1])),
                        [rng.normal(size=(4, 3)), rng.normal(size=(1, 3))])

    def test_reductions(self):
        rng = np.random.default_rng(7)
        check_gradients(lambda ps: dc.reduce_mean(ps[0]), [rng.normal(size=(4, 5))])
        check_gradients(lambda ps: dc.reduce_sum(ps[0]), [rng.normal(size=(4, 5))])

    def test_composite_graphs(self):
        rng = np.random.default_rng(8)
        S = rng.uniform(0.1, 1.0, size=(4, 4))
        for seed in range(20):
            r = np.random.default_rng(seed)
            x = r.uniform(0.2, 1.0, size=(4, 2))
            w1 = r.normal(size=(2, 3))
            w2 = r.normal(size=(3, 1))
            out = scalarizer(r, (4, 1))

            def build(ps):
                h = dc.relu(dc.matmul(dc.matmul(dc.constant(S), ps[0]), ps[1]))
                y = dc.clamp(dc.matmul(h, ps[2]), 0.0, 5.0)
                return out(y)

            check_gradients(build, [x, w1, w2], rtol=1e-4)


class TestBackwardSemantics:
    def test_linear_map_gradient_is_column_sums(self):
        A = np.array([[1.0, 2.0], [3.0, 4.0], [5.0, 6.0]])
        x = dc.parameter(np.ones((2, 1)))
        dc.backward(dc.reduce_sum(dc.matmul(dc.constant(A), x)))
        assert np.allclose(x.grad[:, 0], A.sum(axis=0))

    def test_backward_is_linear_in_the_loss(self):
        rng = np.random.default_rng(9)
        a = rng.normal(size=(3, 3))
        x = dc.parameter(a)

        def l1(t):
            return dc.reduce_sum(dc.hadamard(t, t))

        def l2(t):
            return dc.reduce_mean(dc.scalar_mul(3.0, t))

        dc.backward(l1(x))
        g1 = x.grad.copy()
        dc.zero_grads([x])
        dc.backward(l2(x))
        g2 = x.grad.copy()
        dc.zero_grads([x])
        dc.backward(dc.add(l1(x), l2(x)))
        assert np.allclose(x.grad, g1 + g2, rtol=1e-12)

    def test_gradients_accumulate_across_graphs(self):
        x = dc.parameter(np.ones((2, 2)))
        dc.backward(dc.reduce_sum(x))
        dc.backward(dc.reduce_mean(x))
        assert np.allclose(x.grad, 1.0 + 0.25)

    def test_unreachable_parameter_has_no_gradient(self):
        x = dc.parameter(np.ones((2, 2)))
        y = dc.parameter(np.ones((2, 2)))
        dc.backward(dc.reduce_sum(x))
        assert y.grad is None

    def test_repeated_backward_rejected(self):
        loss = dc.reduce_sum(dc.parameter(np.ones((2, 2))))
        dc.backward(loss)
        with pytest.raises(RuntimeError):
            dc.backward(loss)

    def test_non_scalar_loss_rejected(self):
        with pytest.raises(ValueError):
            dc.backward(dc.parameter(np.ones((2, 2))))

    def test_diamond_graph_accumulates_both_paths(self):
        x = dc.parameter(np.full((2, 2), 0.5))
        a = dc.scalar_mul(2.0, x)
        loss = dc.reduce_sum(dc.add(a, dc.hadamard(x, x)))
        dc.backward(loss)
        assert np.allclose(x.grad, 2.0 + 2 * 0.5)


class TestAdam:
    def test_zero_gradient_no_motion(self):
        p = dc.parameter(np.full((2, 2), 3.0))
        state = dc.AdamState.for_params([p])
        dc.adam_step([p], [np.zeros((2, 2))], state, lr=0.1)
        assert np.array_equal(p.value, np.full((2, 2), 3.0))

    def test_first_step_closed_form(self):
        g = np.array([[0.3, -2.0]])
        theta0 = np.array([[1.0, 1.0]])
        p = dc.parameter(theta0.copy())
        state = dc.AdamState.for_params([p])
        dc.adam_step([p], [g.copy()], state, lr=0.01)
        expected = theta0 - 0.01 * g / (np.abs(g) + 1e-8)
        np.testing.assert_allclose(p.value, expected, rtol=1e-12)

    def test_constant_gradient_update_approaches_lr(self):
        p = dc.parameter(np.zeros((1, 1)))
        g = np.array([[0.7]])
        state = dc.AdamState.for_params([p])
        prev = p.value.copy()
        for _ in range(500):
            prev = p.value.copy()
            dc.adam_step([p], [g], state, lr=1e-3)
        assert abs(prev[0, 0] - p.value[0, 0]) == pytest.approx(1e-3, rel=0.02)

    def test_l2_term_shrinks_weights(self):
        p = dc.parameter(np.array([[10.0]]))
        state = dc.AdamState.for_params([p], weight_decay=1e-2)
        dc.adam_step([p], [np.zeros((1, 1))], state, lr=0.1)
        assert p.value[0, 0] < 10.0

    def test_misaligned_inputs_rejected(self):
        p = dc.parameter(np.ones((1, 1)))
        state = dc.AdamState.for_params([p])
        with pytest.raises(ValueError):
            dc.adam_step([p], [], state, lr=0.1)


class TestCheckpoint:
    def test_roundtrip_bit_exact(self, tmp_path):
        rng = np.random.default_rng(10)
        tensors = {
            "w1": rng.normal(size=(3, 4)),
            "w2": np.array([[1e-300, 1e300], [0.0, -1.5]]),
        }
        meta = {"blocks": 3, "variant": "gcn"}
        path = tmp_path / "ckpt.npz"
        dc.save_checkpoint(path, tensors, meta)
        loaded, meta2 = dc.load_checkpoint(path)
        assert list(loaded.keys()) == ["w1", "w2"]
        for k in tensors:
            assert np.array_equal(loaded[k], tensors[k])
        assert meta2 == meta

    def test_unknown_format_rejected(self, tmp_path):
        path = tmp_path / "bad.npz"
        import json

        np.savez(path, header=json.dumps({"format_version": 99, "names": [], "meta": {}}))
        with pytest.raises(ValueError):
            dc.load_checkpoint(path)
