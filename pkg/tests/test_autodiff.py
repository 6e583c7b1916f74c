import numpy as np
import pytest

from logicrec import autodiff as ad
from logicrec.autodiff import Tape, Tensor, apply_primitive, backward, no_grad
from logicrec.errors import ContractError, DomainError
from logicrec.gradcheck import finite_difference_check


def t(data, grad=False, dtype=np.float64):
    return Tensor(np.asarray(data, dtype=dtype), requires_grad=grad)


class TestForwardValues:
    def test_relu_kink_and_identity(self):
        out = ad.relu(t([-2.0, 0.0, 3.0]))
        np.testing.assert_array_equal(out.data, [0.0, 0.0, 3.0])

    def test_sigmoid_symmetry_point(self):
        assert ad.sigmoid(t([0.0])).data[0] == 0.5

    def test_cosine_orthogonal(self):
        assert ad.cosine_similarity(t([1.0, 0.0]), t([0.0, 1.0])).data == 0.0

    def test_softmax_equal_logits(self):
        np.testing.assert_array_equal(
            ad.softmax_rows(t([[0.0, 0.0]])).data, [[0.5, 0.5]])

    def test_matmul_matches_numpy(self):
        rng = np.random.default_rng(0)
        a, b = rng.standard_normal((4, 5)), rng.standard_normal((5, 2))
        np.testing.assert_allclose(ad.matmul(t(a), t(b)).data, a @ b, rtol=1e-15)

    def test_log_positive_only(self):
        with pytest.raises(DomainError):
            ad.log(t([1.0, 0.0]))

    def test_cosine_zero_norm_rejected(self):
        with pytest.raises(DomainError):
            ad.cosine_similarity(t([0.0, 0.0]), t([1.0, 0.0]))


class TestShapeContracts:
    def test_matmul_mismatch_names_primitive_and_shapes(self):
        with pytest.raises(ContractError, match=r"matmul.*\(2, 3\).*\(2, 3\)"):
            ad.matmul(t(np.ones((2, 3))), t(np.ones((2, 3))))

    def test_add_mismatch(self):
        with pytest.raises(ContractError, match="add"):
            ad.add(t(np.ones((2, 3))), t(np.ones((3, 2))))

    def test_mul_requires_same_shape(self):
        with pytest.raises(ContractError, match="elementwise_mul"):
            ad.mul(t(np.ones((2, 3))), t(np.ones(3)))

    def test_gather_out_of_bounds(self):
        with pytest.raises(ContractError, match="gather"):
            ad.gather(t(np.ones((4, 2))), [0, 4])

    def test_mixed_dtypes_rejected(self):
        a = Tensor(np.ones(3, dtype=np.float32))
        b = Tensor(np.ones(3, dtype=np.float64))
        with pytest.raises(ContractError, match="dtype"):
            ad.add(a, b)

    def test_unknown_primitive(self):
        with pytest.raises(ContractError, match="unknown primitive"):
            apply_primitive("conv2d", [t([1.0])])


class TestBackward:
    def test_sum_gradient_is_ones(self):
        x = t([1.0, -2.0, 5.0], grad=True)
        with Tape() as tape:
            loss = ad.reduce_sum(x)
        backward(loss, tape)
        np.testing.assert_array_equal(x.grad, [1.0, 1.0, 1.0])

    def test_square_gradient(self):
        x = t([3.0], grad=True)
        with Tape() as tape:
            loss = ad.reduce_sum(ad.mul(x, x))
        backward(loss, tape)
        np.testing.assert_array_equal(x.grad, [6.0])

    def test_two_layer_relu_perceptron_matches_finite_differences(self):
        # spec example: random 2-layer ReLU net, d=5, checked against the
        # central-difference oracle at float64
        def builder():
            rng = np.random.default_rng(42)
            w1 = Tensor(rng.standard_normal((5, 5)), requires_grad=True, name="w1")
            b1 = Tensor(rng.standard_normal(5), requires_grad=True, name="b1")
            w2 = Tensor(rng.standard_normal((5, 1)), requires_grad=True, name="w2")
            x = Tensor(rng.standard_normal((3, 5)))

            def forward():
                h = ad.relu(ad.add(ad.matmul(x, w1), b1))
                return ad.reduce_sum(ad.matmul(h, w2))

            return {"w1": w1, "b1": b1, "w2": w2}, forward

        assert finite_difference_check(builder, epsilon=1e-5) < 1e-4

    def test_non_scalar_loss_rejected(self):
        x = t([1.0, 2.0], grad=True)
        with Tape() as tape:
            y = ad.mul(x, x)
        with pytest.raises(ContractError, match="scalar"):
            backward(y, tape)

    def test_tape_reuse_rejected(self):
        x = t([1.0], grad=True)
        with Tape() as tape:
            loss = ad.reduce_sum(x)
        backward(loss, tape)
        with pytest.raises(ContractError, match="consumed"):
            backward(loss, tape)

    def test_unreachable_parameter_gets_zeros(self):
        x = t([1.0, 2.0], grad=True)
        unused = Tensor(np.ones(4), requires_grad=True, name="unused")
        with Tape() as tape:
            loss = ad.reduce_sum(x)
        grads = backward(loss, tape, params={"x": x, "unused": unused})
        np.testing.assert_array_equal(unused.grad, np.zeros(4))
        assert unused.tid in grads

    def test_shared_input_accumulates(self):
        x = t([2.0, 3.0], grad=True)
        with Tape() as tape:
            loss = ad.reduce_sum(ad.add(ad.mul(x, x), x))  # x^2 + x
        backward(loss, tape)
        np.testing.assert_allclose(x.grad, [5.0, 7.0], rtol=1e-15)

    def test_no_grad_suppresses_recording(self):
        x = t([1.0], grad=True)
        with Tape() as tape:
            with no_grad():
                y = ad.mul(x, x)
        assert len(tape) == 0
        assert not y.requires_grad


class TestInvariants:
    @pytest.mark.parametrize("seed", range(5))
    def test_softmax_rows_sum_to_one(self, seed):
        rng = np.random.default_rng(seed)
        x = t(rng.standard_normal((6, 9)) * 30)
        out = ad.softmax_rows(x).data
        np.testing.assert_allclose(out.sum(axis=-1), np.ones(6), atol=1e-12)
        assert ((out > 0) & (out < 1)).all()

    @pytest.mark.parametrize("seed", range(5))
    def test_cosine_bounded(self, seed):
        rng = np.random.default_rng(seed)
        a, b = rng.standard_normal((7, 4)), rng.standard_normal((7, 4))
        out = ad.cosine_similarity(t(a), t(b)).data
        assert (np.abs(out) <= 1 + 1e-12).all()

    def test_replay_is_bit_identical(self):
        rng = np.random.default_rng(3)
        x = t(rng.standard_normal((4, 4)), grad=True)
        w = t(rng.standard_normal((4, 4)), grad=True)

        def run():
            with Tape():
                return ad.reduce_sum(ad.tanh(ad.matmul(x, w))).data.tobytes()

        assert run() == run()

    @pytest.mark.parametrize("seed", range(8))
    def test_random_shape_gradients(self, seed):
        # random shapes <= 16 across the dense primitives, kink-safe inputs
        def builder():
            rng = np.random.default_rng([90, seed])
            m, k, n = (int(v) for v in rng.integers(1, 17, size=3))
            a = Tensor(rng.standard_normal((m, k)), requires_grad=True, name="a")
            b = Tensor(rng.standard_normal((k, n)), requires_grad=True, name="b")
            x = rng.standard_normal((m, n))
            x[np.abs(x) < 1e-3] = 0.5
            c = Tensor(x, requires_grad=True, name="c")
            w = rng.standard_normal((m, n))

            def forward():
                h = ad.softmax_rows(ad.tanh(ad.add(ad.matmul(a, b), ad.relu(c))))
                weighted = ad.mul(h, Tensor(w))
                return ad.reduce_sum(weighted)

            return {"a": a, "b": b, "c": c}, forward

        assert finite_difference_check(builder, epsilon=1e-5) < 1e-4
