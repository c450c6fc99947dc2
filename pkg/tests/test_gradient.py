import numpy as np
import pytest

from app.core.gradient import finite_difference_gradient, max_relative_error
from app.core.layers import LayerSpec, Mode
from app.core.model import InstanceClassifierConfig, ModelParams, bag_gradient
from app.core.pooling import PoolingConfig
from app.core.rng import Rng
from app.errors import OracleError


class TestFiniteDifferences:

    def test_square(self):
        grad = finite_difference_gradient(lambda x: float(x[0] ** 2), np.array([3.0]), 1e-5)
        np.testing.assert_allclose(grad, [6.0], atol=1e-6)

    def test_constant(self):
        grad = finite_difference_gradient(lambda x: 4.2, np.ones((2, 3)))
        np.testing.assert_array_equal(grad, np.zeros((2, 3)))

    def test_point_is_not_modified(self):
        at = np.array([1.0, 2.0])
        finite_difference_gradient(lambda x: float(np.sum(x ** 3)), at)
        np.testing.assert_array_equal(at, [1.0, 2.0])

    def test_non_finite_value(self):
        with pytest.raises(OracleError):
            finite_difference_gradient(lambda x: float(np.log(x[0])), np.array([0.0]), 1e-5)

    @pytest.mark.parametrize("h", [0.0, -1e-5])
    def test_step_must_be_positive(self, h):
        with pytest.raises(ValueError):
            finite_difference_gradient(lambda x: 0.0, np.ones(1), h)


class TestRelativeError:

    def test_small_values_use_absolute_error(self):
        assert max_relative_error(np.array([0.001]), np.array([0.0])) == pytest.approx(0.001)

    def test_large_values_are_relative(self):
        assert max_relative_error(np.array([101.0]), np.array([100.0])) == pytest.approx(0.01)


def test_two_layer_net_nll_matches_backprop(make_bag):
    model = InstanceClassifierConfig(
        (LayerSpec.affine(12, 3), LayerSpec.of("sigmoid"), LayerSpec.affine(3, 1), LayerSpec.of("sigmoid")),
        (3, 2, 2),
    )
    params = ModelParams.initialize(model, Rng(4))
    bag = make_bag(k=3, size=2, label=1)
    pooling = PoolingConfig("nor")

    _, grads = bag_gradient(params, model, pooling, bag, 1, None, Mode.EVAL)
    numeric = finite_difference_gradient(
        lambda v: bag_gradient(params.with_vector(v), model, pooling, bag, 1, None, Mode.EVAL)[0],
        params.to_vector(),
    )
    assert max_relative_error(grads.to_vector(), numeric) <= 1e-4
