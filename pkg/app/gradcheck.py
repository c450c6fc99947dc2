import logging

import numpy as np

from dataclasses import dataclass

from app.core.gradient import finite_difference_gradient, max_relative_error
from app.core.layers import LayerKind, LayerSpec, Mode, layer_backward, layer_forward
from app.core.model import InstanceClassifierConfig, ModelParams, bag_gradient
from app.core.pooling import PoolingConfig, PoolingKind, pool, pool_grad
from app.core.rng import Rng
from app.data.bags import Bag, Patch
from app.errors import ConfigurationError


logger = logging.getLogger(__name__)


TOLERANCE = 1e-4
STEP = 1e-5

POOLING_OPS = ("nor", "isr", "lse", "max")
LAYER_OPS = tuple(kind.value for kind in LayerKind)
BAG_OP = "bag"
ALL_OPS = POOLING_OPS + LAYER_OPS + (BAG_OP,)
DEFAULT_OPS = ("nor", "isr", "lse") + LAYER_OPS + (BAG_OP,)


@dataclass(frozen=True)
class CheckResult:
    """
    Outcome of one gradient check.

    Attributes:
        component (str): Operator, layer kind or "bag[<pooling>]".
        max_rel_error (float): Worst error over all points and coordinates.
        passed (bool): max_rel_error within tolerance.
    """

    component: str
    max_rel_error: float
    passed: bool


def _pooling_error(config: PoolingConfig, generator: np.random.Generator) -> float:
    k = int(generator.integers(1, 33))
    z = generator.uniform(0.05, 0.95, size=k)
    analytic = pool_grad(config, z)
    numeric = finite_difference_gradient(lambda v: pool(config, v), z, STEP)
    return max_relative_error(analytic, numeric)


def _random_layer(kind: LayerKind, generator: np.random.Generator) -> tuple[LayerSpec, tuple[int, ...]]:
    """
    A layer of `kind` with a random compatible instance shape (<= 8x8 spatial, <= 4 channels).
    """
    channels = int(generator.integers(1, 5))
    height, width = (int(d) for d in generator.integers(2, 9, size=2))
    if kind == LayerKind.CONV2D:
        kernel = int(generator.integers(1, min(height, width, 3) + 1))
        return LayerSpec.conv2d(channels, int(generator.integers(1, 5)), kernel), (channels, height, width)
    if kind == LayerKind.AFFINE:
        features = channels * height * width
        return LayerSpec.affine(features, int(generator.integers(1, 5))), (channels, height, width)
    if kind == LayerKind.DROPOUT:
        return LayerSpec.dropout(float(generator.uniform(0.1, 0.9))), (channels, height, width)
    return LayerSpec.of(kind), (channels, height, width)


def _layer_error(kind: LayerKind, generator: np.random.Generator, rng: Rng) -> float:
    spec, shape = _random_layer(kind, generator)
    n = int(generator.integers(1, 4))
    x = generator.normal(size=(n,) + shape)
    if kind == LayerKind.RELU:
        # Keep inputs off the kink at 0.
        x = np.sign(x) * (0.1 + np.abs(x))
    elif kind == LayerKind.MAXPOOL2X2:
        # Distinct, well-separated values so no window has a near tie.
        x = (generator.permutation(x.size).reshape(x.shape) + generator.uniform(0.0, 0.5, size=x.shape)) * 0.1
    params = [generator.normal(size=s) for s in spec.param_shapes]
    out_shape = (n,) + spec.output_shape(shape)
    projection = generator.normal(size=out_shape)
    dropout_rng = rng.derive("mask")

    def loss(x_: np.ndarray, params_: list[np.ndarray]) -> float:
        out, _ = layer_forward(spec, params_, x_, Mode.TRAIN, dropout_rng)
        return float(np.sum(out * projection))

    _, cache = layer_forward(spec, params, x, Mode.TRAIN, dropout_rng)
    grad_input, param_grads = layer_backward(spec, cache, projection)

    error = max_relative_error(grad_input, finite_difference_gradient(lambda v: loss(v, params), x, STEP))
    for slot, grad in enumerate(param_grads):
        def f(v, slot=slot):
            return loss(x, [v if i == slot else p for i, p in enumerate(params)])

        error = max(error, max_relative_error(grad, finite_difference_gradient(f, params[slot], STEP)))
    return error


def tiny_classifier() -> InstanceClassifierConfig:
    """
    A small smooth conv network (121 parameters) for the end-to-end check.

    relu and maxpool2x2 are checked per layer only.
    """
    layers = (
        LayerSpec.conv2d(2, 2, 2),
        LayerSpec.of("sigmoid"),
        LayerSpec.affine(32, 3),
        LayerSpec.of("sigmoid"),
        LayerSpec.dropout(0.5),
        LayerSpec.affine(3, 1),
        LayerSpec.of("sigmoid"),
    )
    return InstanceClassifierConfig(layers, (2, 5, 5))


def _bag_error(pooling: PoolingConfig, model: InstanceClassifierConfig, generator: np.random.Generator, rng: Rng) -> float:
    params = ModelParams.initialize(model, rng.derive("init"))
    k = int(generator.integers(1, 7))
    c, h, w = model.input_shape
    patches = tuple(
        Patch(pixels=generator.integers(0, 256, size=(h, w, c), dtype=np.uint8), row=0, col=i) for i in range(k)
    )
    bag = Bag("gradcheck", int(generator.integers(0, 2)), patches)
    dropout_rng = rng.derive("dropout")

    _, grads = bag_gradient(params, model, pooling, bag, bag.label, dropout_rng)

    def loss(vector: np.ndarray) -> float:
        value, _ = bag_gradient(params.with_vector(vector), model, pooling, bag, bag.label, dropout_rng)
        return value

    numeric = finite_difference_gradient(loss, params.to_vector(), STEP)
    return max_relative_error(grads.to_vector(), numeric)


def run_gradcheck(ops: tuple[str, ...] | None = None, r: float = 10.0, seed: int = 0, points: int = 100) -> list[CheckResult]:
    """
    Compare analytic gradients with central finite differences.

    Args:
        ops (tuple[str]): Components to check; pooling operators, layer kinds
            and "bag" (end-to-end bag gradient, once per selected NOR/ISR/LSE
            operator, NOR when none is selected).
        r (float): LSE sharpness.
        seed (int): Seed of the random evaluation points.
        points (int): Random points per component.

    Returns:
        list[CheckResult]: One result per checked component, in `ops` order.

    Raises:
        ConfigurationError: On an unknown component or a non-positive point count.
    """
    ops = tuple(ops) if ops else DEFAULT_OPS
    unknown = [op for op in ops if op not in ALL_OPS]
    if unknown:
        raise ConfigurationError(f"Unknown gradcheck component(s) {unknown}, expected any of {{{','.join(ALL_OPS)}}}")
    if points < 1:
        raise ConfigurationError(f"points must be >= 1, got {points}")

    root = Rng(seed).derive("gradcheck")
    results = []

    def record(component: str, errors: list[float]):
        worst = max(errors)
        passed = bool(worst <= TOLERANCE)
        logger.info(f"{component}: max relative error {worst:.3e} ({'ok' if passed else 'FAILED'})")
        results.append(CheckResult(component, worst, passed))

    for op in ops:
        generator = root.derive(op).generator()
        if op in POOLING_OPS:
            config = PoolingConfig(op, r=r)
            record(op, [_pooling_error(config, generator) for _ in range(points)])
        elif op in LAYER_OPS:
            kind = LayerKind(op)
            record(op, [_layer_error(kind, generator, root.derive(op, i)) for i in range(points)])
        else:
            model = tiny_classifier()
            kinds = [name for name in ops if name in ("nor", "isr", "lse")] or ["nor"]
            for kind in kinds:
                pooling = PoolingConfig(PoolingKind(kind), r=r)
                record(
                    f"bag[{kind}]",
                    [_bag_error(pooling, model, generator, root.derive(BAG_OP, kind, i)) for i in range(points)],
                )
    return results
