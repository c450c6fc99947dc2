import math
import logging

import numpy as np

from dataclasses import dataclass, field

from app.core.rng import Rng
from app.core.layers import LayerKind, LayerSpec, LayerCache, Mode, layer_forward, layer_backward
from app.core.pooling import PoolingConfig, pool, pool_grad
from app.data.bags import Bag, to_tensor
from app.errors import ConfigurationError, DomainError


logger = logging.getLogger(__name__)

PARAM_SLOTS = ("weight", "bias")


def param_name(index: int, slot: int) -> str:
    return f"layer{index}.{PARAM_SLOTS[slot]}"


@dataclass(frozen=True)
class InstanceClassifierConfig:
    """
    Architecture of the shared instance classifier.

    Attributes:
        layers (tuple[LayerSpec]): Ordered layer chain, ending in sigmoid over one unit.
        input_shape (tuple[int, int, int]): Patch tensor shape (channels, height, width).
    """

    layers: tuple[LayerSpec, ...]
    input_shape: tuple[int, int, int]

    def __post_init__(self):
        object.__setattr__(self, "layers", tuple(self.layers))
        object.__setattr__(self, "input_shape", tuple(int(d) for d in self.input_shape))
        self.shapes()
        if not self.layers or self.layers[-1].kind != LayerKind.SIGMOID or self.shapes()[-1] != (1,):
            raise ConfigurationError("The instance classifier must end with a sigmoid over a single unit")

    def shapes(self) -> list[tuple[int, ...]]:
        """
        Per-instance activation shapes, input first, shape-checking the chain.
        """
        shapes = [self.input_shape]
        for index, spec in enumerate(self.layers):
            shapes.append(spec.output_shape(shapes[-1], index))
        return shapes

    @property
    def num_params(self) -> int:
        return sum(math.prod(shape) for spec in self.layers for shape in spec.param_shapes)

    @classmethod
    def default(
        cls,
        input_shape: tuple[int, int, int] = (3, 96, 96),
        conv_channels: tuple[int, ...] = (16, 32, 32),
        conv_kernels: tuple[int, ...] = (5, 3, 3),
        hidden_units: int = 128,
        dropout: float = 0.5,
    ) -> "InstanceClassifierConfig":
        """
        Convolution blocks (conv, relu, maxpool2x2) followed by
        affine -> relu -> dropout -> affine -> sigmoid.
        """
        if len(conv_channels) != len(conv_kernels):
            raise ConfigurationError("conv_channels and conv_kernels must have the same length")
        layers = []
        shape = tuple(input_shape)
        channels = shape[0]
        for out_channels, kernel in zip(conv_channels, conv_kernels):
            block = [LayerSpec.conv2d(channels, out_channels, kernel), LayerSpec.of("relu"), LayerSpec.of("maxpool2x2")]
            for spec in block:
                shape = spec.output_shape(shape, len(layers))
                layers.append(spec)
            channels = out_channels
        layers += [
            LayerSpec.affine(math.prod(shape), hidden_units),
            LayerSpec.of("relu"),
            LayerSpec.dropout(dropout),
            LayerSpec.affine(hidden_units, 1),
            LayerSpec.of("sigmoid"),
        ]
        return cls(tuple(layers), tuple(input_shape))

    def to_dict(self) -> dict:
        return {
            "input_shape": list(self.input_shape),
            "layers": [spec.to_dict() for spec in self.layers],
        }

    @classmethod
    def from_dict(cls, raw: dict) -> "InstanceClassifierConfig":
        return cls(
            layers=tuple(LayerSpec.from_dict(layer) for layer in raw["layers"]),
            input_shape=tuple(raw["input_shape"]),
        )


@dataclass
class ModelParams:
    """
    Learnable weights, one (weight, bias) pair per parametric layer.

    Attributes:
        tensors (dict[str, np.ndarray]): Float64 tensors keyed 'layer{i}.weight' / 'layer{i}.bias',
            in layer order.
        version (int): Incremented by every optimizer step.
    """

    tensors: dict[str, np.ndarray] = field(default_factory=dict)
    version: int = 0

    def layer(self, index: int, spec: LayerSpec) -> list[np.ndarray]:
        return [self.tensors[param_name(index, slot)] for slot in range(len(spec.param_shapes))]

    @classmethod
    def zeros(cls, config: InstanceClassifierConfig) -> "ModelParams":
        tensors = {}
        for index, spec in enumerate(config.layers):
            for slot, shape in enumerate(spec.param_shapes):
                tensors[param_name(index, slot)] = np.zeros(shape)
        return cls(tensors)

    @classmethod
    def initialize(cls, config: InstanceClassifierConfig, rng: Rng) -> "ModelParams":
        """
        Glorot-uniform weights in +-sqrt(6 / (fan_in + fan_out)), zero biases.
        """
        generator = rng.generator()
        params = cls.zeros(config)
        for index, spec in enumerate(config.layers):
            if not spec.param_shapes:
                continue
            shape = spec.param_shapes[0]
            receptive = math.prod(shape[2:])
            fan_in, fan_out = shape[1] * receptive, shape[0] * receptive
            limit = math.sqrt(6.0 / (fan_in + fan_out))
            params.tensors[param_name(index, 0)] = generator.uniform(-limit, limit, size=shape)
        return params

    def zeros_like(self) -> "ModelParams":
        return ModelParams({name: np.zeros_like(t) for name, t in self.tensors.items()}, self.version)

    def copy(self) -> "ModelParams":
        return ModelParams({name: t.copy() for name, t in self.tensors.items()}, self.version)

    def to_vector(self) -> np.ndarray:
        if not self.tensors:
            return np.zeros(0)
        return np.concatenate([t.ravel() for t in self.tensors.values()])

    def with_vector(self, vector: np.ndarray) -> "ModelParams":
        """
        Copy of these params with values taken from a flat vector (same order as to_vector).
        """
        tensors, offset = {}, 0
        for name, t in self.tensors.items():
            tensors[name] = np.asarray(vector[offset:offset + t.size], dtype=np.float64).reshape(t.shape).copy()
            offset += t.size
        return ModelParams(tensors, self.version)

    def is_finite(self) -> bool:
        return all(np.all(np.isfinite(t)) for t in self.tensors.values())


@dataclass(frozen=True)
class BagPrediction:
    """
    Bag probability together with the per-patch scores it was pooled from.

    Attributes:
        bag_id (str): Source bag.
        theta (float): Pooled probability of y = 1.
        instance_scores (np.ndarray): z_k in bag patch order.
        coordinates (tuple): (row, col) grid position of each patch.
    """

    bag_id: str
    theta: float
    instance_scores: np.ndarray
    coordinates: tuple[tuple[int, int], ...]


def forward(
    params: ModelParams,
    config: InstanceClassifierConfig,
    x: np.ndarray,
    mode: Mode,
    rng: Rng | None = None,
) -> tuple[np.ndarray, list[LayerCache]]:
    """
    Run the shared network over a stack of instances.

    Args:
        params (ModelParams): Network weights.
        config (InstanceClassifierConfig): Architecture.
        x (np.ndarray): Instances shaped (N, C, H, W), pixel values in [0, 1].
        mode (Mode): TRAIN enables dropout.
        rng (Rng): Dropout stream, required in TRAIN mode.

    Returns:
        tuple: (scores shaped (N,), per-layer caches).
    """
    if x.ndim != len(config.input_shape) + 1 or x.shape[1:] != config.input_shape:
        raise ConfigurationError(f"Instances shaped {x.shape[1:]} do not match input shape {config.input_shape}")
    caches = []
    out = x
    for index, spec in enumerate(config.layers):
        layer_rng = rng.derive("dropout", index) if rng is not None else None
        out, cache = layer_forward(spec, params.layer(index, spec), out, mode, layer_rng, index)
        caches.append(cache)
    return out[:, 0], caches


def backward(
    params: ModelParams,
    config: InstanceClassifierConfig,
    caches: list[LayerCache],
    upstream: np.ndarray,
) -> ModelParams:
    """
    Backpropagate per-instance score gradients; parameter gradients of all
    instances accumulate into the shared tensors.
    """
    grads = params.zeros_like()
    grad = np.asarray(upstream, dtype=np.float64).reshape(-1, 1)
    for index in reversed(range(len(config.layers))):
        spec = config.layers[index]
        grad, param_grads = layer_backward(spec, caches[index], grad, input_grad=index > 0)
        for slot, g in enumerate(param_grads):
            grads.tensors[param_name(index, slot)] = g
    return grads


def instance_score(
    params: ModelParams,
    config: InstanceClassifierConfig,
    patch: np.ndarray,
    mode: Mode = Mode.EVAL,
    rng: Rng | None = None,
) -> float:
    """
    Score z = f_psi(x) of a single patch tensor shaped like config.input_shape.
    """
    scores, _ = forward(params, config, np.asarray(patch, dtype=np.float64)[None], mode, rng)
    return float(scores[0])


def bag_probability(
    params: ModelParams,
    config: InstanceClassifierConfig,
    pooling: PoolingConfig,
    bag: Bag,
    mode: Mode = Mode.EVAL,
    rng: Rng | None = None,
) -> BagPrediction:
    """
    theta(X_K) = g(f_psi(x_1), ..., f_psi(x_K)) for one bag.
    """
    if not bag.patches:
        raise DomainError(f"Bag '{bag.bag_id}' has no patches")
    scores, _ = forward(params, config, bag.to_tensor(), mode, rng)
    return BagPrediction(
        bag_id=bag.bag_id,
        theta=pool(pooling, scores),
        instance_scores=scores,
        coordinates=tuple((p.row, p.col) for p in bag.patches),
    )


def _check_label(y: int):
    if y not in (0, 1):
        raise DomainError(f"Bag label must be 0 or 1, got {y}")


def nll_loss(theta: float, y: int, epsilon: float = 1e-7) -> float:
    """
    Bernoulli negative log-likelihood of label y under probability theta.

    theta is clamped to [epsilon, 1 - epsilon] so the loss stays finite.
    """
    _check_label(y)
    theta = min(max(float(theta), epsilon), 1.0 - epsilon)
    return float(-(y * np.log(theta) + (1 - y) * np.log1p(-theta)))


def nll_grad(theta: float, y: int, epsilon: float = 1e-7) -> float:
    """
    dLoss/dtheta, evaluated at the clamped theta.
    """
    _check_label(y)
    theta = min(max(float(theta), epsilon), 1.0 - epsilon)
    return float(-y / theta + (1 - y) / (1.0 - theta))


def bag_gradient(
    params: ModelParams,
    config: InstanceClassifierConfig,
    pooling: PoolingConfig,
    bag: Bag,
    y: int,
    rng: Rng | None,
    mode: Mode = Mode.TRAIN,
) -> tuple[float, ModelParams]:
    """
    Loss of one bag and its gradient w.r.t. every network parameter.

    The chain runs loss -> pooling -> each of the K instance forwards,
    whose parameter gradients sum into the shared tensors.

    Returns:
        tuple: (loss, gradients shaped like params).
    """
    _check_label(y)
    if not bag.patches:
        raise DomainError(f"Bag '{bag.bag_id}' has no patches")
    scores, caches = forward(params, config, bag.to_tensor(), mode, rng)
    theta = pool(pooling, scores)
    loss = nll_loss(theta, y, pooling.epsilon)
    upstream = pool_grad(pooling, scores, nll_grad(theta, y, pooling.epsilon))
    return loss, backward(params, config, caches, upstream)
