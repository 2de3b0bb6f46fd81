"""Tensor engine: op semantics, frozen oracle values, gradient checks."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from painforge import tensor as T
from painforge.errors import (DimensionError, LabelError, NumericError,
                              ParameterError)
from painforge.rng import keyed_rng
from painforge.tensor import (Tensor, cross_entropy, dropout, gelu, gradcheck,
                              kl_temperature, layer_norm, matmul, mse, relu,
                              softmax)

# Values computed by standalone scalar scripts before the engine existed.
KL_ORACLE_T1 = 0.13081203594113697
KL_ORACLE_T4 = 0.14945786501204283


class TestMatmul:
    def test_identity(self):
        a = np.array([[1.0, 2.0], [3.0, 4.0]])
        out = matmul(Tensor(np.eye(2)), Tensor(a))
        assert np.array_equal(out.data, a)

    def test_hand_product(self):
        out = matmul(Tensor([[1.0, 2.0], [3.0, 4.0]]),
                     Tensor([[5.0, 6.0], [7.0, 8.0]]))
        assert np.array_equal(out.data, [[19.0, 22.0], [43.0, 50.0]])

    def test_shape_mismatch_names_both_shapes(self):
        with pytest.raises(DimensionError) as err:
            matmul(Tensor(np.zeros((2, 3))), Tensor(np.zeros((2, 3))))
        assert "(2, 3)" in str(err.value)

    def test_batched_broadcast(self):
        q = np.random.default_rng(0).normal(size=(6, 4))
        p = np.random.default_rng(1).normal(size=(2, 4, 5))
        out = matmul(Tensor(q), Tensor(p))
        assert out.shape == (2, 6, 5)
        assert np.allclose(out.data, q @ p)


class TestSoftmax:
    def test_symmetry(self):
        out = softmax(Tensor([0.0, 0.0]))
        assert np.allclose(out.data, [0.5, 0.5])

    def test_closed_form(self):
        out = softmax(Tensor([np.log(2.0), 0.0]))
        assert np.allclose(out.data, [2.0 / 3.0, 1.0 / 3.0], atol=1e-12)

    def test_stability_under_shift(self):
        out = softmax(Tensor([1000.0, 1000.0]))
        assert np.allclose(out.data, [0.5, 0.5])

    def test_rows_sum_to_one_with_large_shifts(self):
        rng = np.random.default_rng(3)
        for shift in (0.0, 1e4, -1e4):
            x = rng.normal(size=(5, 9)) + shift
            out = softmax(Tensor(x), axis=-1)
            assert np.all(np.abs(out.data.sum(axis=-1) - 1.0) < 1e-6)
            assert np.all(out.data > 0.0)

    def test_nan_input_rejected(self):
        with pytest.raises(NumericError):
            Tensor([np.nan, 0.0])


class TestLayerNorm:
    def test_constant_row_is_zero(self):
        out = layer_norm(Tensor([[4.0, 4.0, 4.0]]), Tensor(np.ones(3)),
                         Tensor(np.zeros(3)))
        assert np.allclose(out.data, 0.0)

    def test_two_point_row(self):
        out = layer_norm(Tensor([[1.0, 3.0]]), Tensor(np.ones(2)),
                         Tensor(np.zeros(2)), eps=1e-15)
        assert np.allclose(out.data, [[-1.0, 1.0]], atol=1e-6)

    def test_affine(self):
        out = layer_norm(Tensor([[1.0, 3.0]]), Tensor(2 * np.ones(2)),
                         Tensor(np.ones(2)), eps=1e-15)
        assert np.allclose(out.data, [[-1.0, 3.0]], atol=1e-6)

    def test_mismatched_affine_shape(self):
        with pytest.raises(DimensionError):
            layer_norm(Tensor([[1.0, 2.0]]), Tensor(np.ones(3)), Tensor(np.zeros(3)))


class TestActivations:
    def test_relu_definition(self):
        out = relu(Tensor([-2.0, 3.0]))
        assert np.array_equal(out.data, [0.0, 3.0])

    def test_gelu_zero(self):
        assert gelu(Tensor([0.0])).data[0] == 0.0

    def test_gelu_large_positive_is_identity(self):
        assert np.isclose(gelu(Tensor([10.0])).data[0], 10.0)

    def test_dropout_eval_is_bit_exact(self):
        x = Tensor(np.random.default_rng(0).normal(size=(4, 5)))
        out = dropout(x, 0.5, training=False)
        assert np.array_equal(out.data, x.data)

    def test_dropout_bad_probability(self):
        with pytest.raises(ParameterError):
            dropout(Tensor([1.0]), 1.0, training=True, rng=keyed_rng(0))
        with pytest.raises(ParameterError):
            dropout(Tensor([1.0]), -0.1, training=True, rng=keyed_rng(0))

    def test_dropout_training_rescales_survivors(self):
        x = Tensor(np.ones(10000))
        out = dropout(x, 0.25, training=True, rng=keyed_rng(1, 2, 3))
        survivors = out.data[out.data != 0.0]
        assert np.allclose(survivors, 1.0 / 0.75)
        assert abs(survivors.size / 10000 - 0.75) < 0.03

    def test_dropout_same_key_same_mask(self):
        x = Tensor(np.ones(64))
        a = dropout(x, 0.5, training=True, rng=keyed_rng(9, 1, 4))
        b = dropout(x, 0.5, training=True, rng=keyed_rng(9, 1, 4))
        assert np.array_equal(a.data, b.data)


class TestCrossEntropy:
    def test_uniform_logits(self):
        out = cross_entropy(Tensor(np.zeros((3, 17))), np.array([0, 5, 16]))
        assert np.isclose(out.item(), np.log(17.0), atol=1e-12)

    def test_saturated_correct_class(self):
        logits = np.zeros((1, 4))
        logits[0, 2] = 1e4
        assert cross_entropy(Tensor(logits), np.array([2])).item() < 1e-8

    def test_out_of_range_label(self):
        with pytest.raises(LabelError) as err:
            cross_entropy(Tensor(np.zeros((2, 17))), np.array([3, 17]))
        assert "17" in str(err.value) and "index 1" in str(err.value)


class TestKLTemperature:
    def test_identical_is_exactly_zero(self):
        rng = np.random.default_rng(5)
        z = rng.normal(size=(4, 7)) * 3
        for temp in (0.5, 1.0, 4.0):
            assert kl_temperature(Tensor(z), Tensor(z.copy()), temp).item() == 0.0

    def test_hand_case_t1(self):
        out = kl_temperature(Tensor([[np.log(3.0), 0.0]]), Tensor([[0.0, 0.0]]), 1.0)
        assert np.isclose(out.item(), KL_ORACLE_T1, atol=1e-12)

    def test_hand_case_t4(self):
        out = kl_temperature(Tensor([[np.log(3.0), 0.0]]), Tensor([[0.0, 0.0]]), 4.0)
        assert np.isclose(out.item(), KL_ORACLE_T4, atol=1e-12)

    def test_teacher_receives_no_gradient(self):
        z_t = Tensor(np.random.default_rng(0).normal(size=(2, 5)), requires_grad=True)
        z_s = Tensor(np.random.default_rng(1).normal(size=(2, 5)), requires_grad=True)
        kl_temperature(z_t, z_s, 4.0).backward()
        assert z_t.grad is None
        assert z_s.grad is not None and np.any(z_s.grad != 0)

    def test_bad_temperature(self):
        with pytest.raises(ParameterError):
            kl_temperature(Tensor([[0.0, 1.0]]), Tensor([[0.0, 1.0]]), 0.0)

    @settings(max_examples=60, deadline=None)
    @given(st.lists(st.floats(-15, 15), min_size=2, max_size=6),
           st.lists(st.floats(-15, 15), min_size=2, max_size=6),
           st.floats(0.25, 8.0))
    def test_nonnegative(self, a, b, temp):
        n = min(len(a), len(b))
        out = kl_temperature(Tensor([a[:n]]), Tensor([b[:n]]), temp)
        assert out.item() >= -1e-12


class TestMSE:
    def test_identical(self):
        x = Tensor(np.arange(6.0).reshape(2, 3))
        assert mse(x, Tensor(x.data.copy())).item() == 0.0

    def test_hand_case(self):
        assert mse(Tensor([0.0, 2.0]), Tensor([1.0, 0.0])).item() == 2.5

    def test_scalars(self):
        assert mse(Tensor(3.0), Tensor(1.0)).item() == 4.0

    def test_shape_mismatch(self):
        with pytest.raises(DimensionError):
            mse(Tensor([1.0, 2.0]), Tensor([[1.0, 2.0]]))


class TestGradcheck:
    def test_linear_is_exact(self):
        err = gradcheck(lambda x: T.tsum(3.0 * x), Tensor(np.random.default_rng(0).normal(size=7)))
        assert err <= 1e-10

    def test_every_op_at_random_points(self):
        rng = np.random.default_rng(42)
        b_const = Tensor(rng.normal(size=(4, 3)))
        w_const = Tensor(rng.random((2, 3)) + 0.5)
        w6 = Tensor(rng.random(6) + 0.5)
        gamma = Tensor(rng.random(6) + 0.5)
        beta = Tensor(rng.normal(size=6))
        labels = np.array([1, 3])
        z_teacher = Tensor(rng.normal(size=(2, 6)))
        targets = Tensor(rng.normal(size=(2, 6)))

        cases = {
            "add": lambda x: T.tsum((x + b_const.data[0, 0]) * w6),
            "mul": lambda x: T.tsum(x * w6),
            "div": lambda x: T.tsum(x / (w6 + 1.0)),
            "power": lambda x: T.tsum((x * x + 1.0) ** 0.5),
            "exp": lambda x: T.tsum(T.exp(0.3 * x)),
            "matmul": lambda x: T.tsum((x @ b_const) * w_const),
            "sum_axis": lambda x: T.tsum(T.tsum(x.reshape(2, 3), axis=1) ** 2),
            "mean": lambda x: T.tmean(x * x),
            "softmax": lambda x: T.tsum(softmax(x.reshape(2, 3), -1) * w_const),
            "log_softmax": lambda x: T.tsum(T.log_softmax(x.reshape(2, 3), -1) * w_const),
            "layer_norm": lambda x: T.tsum(layer_norm(x.reshape(1, 6), gamma, beta) * w6),
            "relu": lambda x: T.tsum(relu(x) * w6),
            "gelu": lambda x: T.tsum(gelu(x) * w6),
            "dropout": lambda x: T.tsum(
                dropout(x, 0.4, training=True, rng=keyed_rng(3, 1, 7)) * w6),
            "cross_entropy": lambda x: cross_entropy(x.reshape(2, 3), np.array([0, 2])),
            "kl_student": lambda x: kl_temperature(z_teacher, x.reshape(2, 6), 4.0),
            "mse": lambda x: mse(x.reshape(2, 6), targets),
            "concat": lambda x: T.tsum(T.concat([x.reshape(2, 3), w_const], axis=0) ** 2),
            "getitem": lambda x: T.tsum(x[1:5] * w6.data[0]),
            "broadcast": lambda x: T.tsum(T.broadcast_to(x.reshape(1, 6), (3, 6)) * 0.7),
        }
        worst = {}
        for trial in range(10):
            for name, f in cases.items():
                size = 8 if name == "matmul" else (12 if name in
                                                   ("kl_student", "mse") else 6)
                point = rng.normal(size=size if name != "matmul" else (2, 4))
                if name == "relu":
                    point = point + np.sign(point) * 0.2  # keep off the kink
                err = gradcheck(f, Tensor(point), h=1e-5)
                worst[name] = max(worst.get(name, 0.0), err)
        for name, err in worst.items():
            assert err < 1e-4, f"{name}: max rel err {err}"

    def test_zero_size_rejected(self):
        with pytest.raises(DimensionError):
            Tensor(np.zeros((0, 3)))


class TestBackwardMechanics:
    def test_grad_accumulates_over_shared_use(self):
        x = Tensor([2.0], requires_grad=True)
        y = x * x + x * 3.0
        y.backward(np.ones(1))
        assert np.allclose(x.grad, [7.0])  # 2x + 3

    def test_backward_needs_scalar(self):
        x = Tensor([1.0, 2.0], requires_grad=True)
        with pytest.raises(DimensionError):
            (x * 2.0).backward()

    def test_detach_stops_gradient(self):
        x = Tensor([1.0, 2.0], requires_grad=True)
        T.tsum(x.detach() * 2.0 + x).backward()
        assert np.allclose(x.grad, [1.0, 1.0])

    def test_eval_graph_not_built(self):
        x = Tensor([1.0, 2.0])
        out = x * 2.0 + 1.0
        assert out._parents == () and out._backward_fn is None
