import math

import numpy as np
import scipy.special

from enum import Enum
from dataclasses import dataclass, asdict
from typing import Sequence
from numpy.lib.stride_tricks import sliding_window_view

from app.core.rng import Rng
from app.errors import ConfigurationError, InternalError


class LayerKind(str, Enum):
    CONV2D = "conv2d"
    MAXPOOL2X2 = "maxpool2x2"
    AFFINE = "affine"
    RELU = "relu"
    SIGMOID = "sigmoid"
    DROPOUT = "dropout"


class Mode(str, Enum):
    TRAIN = "train"
    EVAL = "eval"


@dataclass(frozen=True)
class LayerSpec:
    """
    Declarative description of one layer of the instance classifier.

    Only the fields relevant to `kind` are used; the rest stay at zero.
    Shapes exclude the leading instance axis: every layer consumes and
    produces arrays shaped (N, *instance_shape).

    Attributes:
        kind (LayerKind): Layer type.
        in_channels (int): conv2d input channels.
        out_channels (int): conv2d output channels.
        kernel (int): conv2d square kernel size (stride 1, no padding).
        in_features (int): affine input units (the input is flattened).
        out_features (int): affine output units.
        rate (float): dropout probability p in [0, 1).
    """

    kind: LayerKind
    in_channels: int = 0
    out_channels: int = 0
    kernel: int = 0
    in_features: int = 0
    out_features: int = 0
    rate: float = 0.0

    def __post_init__(self):
        try:
            object.__setattr__(self, "kind", LayerKind(self.kind))
        except ValueError:
            raise ConfigurationError(f"Unknown layer kind '{self.kind}'") from None
        if self.kind == LayerKind.CONV2D and min(self.in_channels, self.out_channels, self.kernel) < 1:
            raise ConfigurationError(f"conv2d needs positive channels and kernel: {self}")
        if self.kind == LayerKind.AFFINE and min(self.in_features, self.out_features) < 1:
            raise ConfigurationError(f"affine needs positive unit counts: {self}")
        if self.kind == LayerKind.DROPOUT and not 0.0 <= self.rate < 1.0:
            raise ConfigurationError(f"dropout rate must lie in [0, 1), got {self.rate}")

    @classmethod
    def conv2d(cls, in_channels: int, out_channels: int, kernel: int) -> "LayerSpec":
        return cls(LayerKind.CONV2D, in_channels=in_channels, out_channels=out_channels, kernel=kernel)

    @classmethod
    def affine(cls, in_features: int, out_features: int) -> "LayerSpec":
        return cls(LayerKind.AFFINE, in_features=in_features, out_features=out_features)

    @classmethod
    def dropout(cls, rate: float) -> "LayerSpec":
        return cls(LayerKind.DROPOUT, rate=rate)

    @classmethod
    def of(cls, kind: str) -> "LayerSpec":
        return cls(LayerKind(kind))

    @property
    def param_shapes(self) -> list[tuple[int, ...]]:
        """
        Shapes of (weight, bias) for parametric layers, empty otherwise.
        """
        if self.kind == LayerKind.CONV2D:
            k = self.kernel
            return [(self.out_channels, self.in_channels, k, k), (self.out_channels,)]
        if self.kind == LayerKind.AFFINE:
            return [(self.out_features, self.in_features), (self.out_features,)]
        return []

    def output_shape(self, input_shape: tuple[int, ...], index: int = 0) -> tuple[int, ...]:
        """
        Infer the per-instance output shape, validating the input shape.

        Args:
            input_shape (tuple): Per-instance input shape.
            index (int): Layer position, used in error messages.

        Returns:
            tuple: Per-instance output shape.

        Raises:
            ConfigurationError: If the input shape does not fit this layer.
        """
        input_shape = tuple(int(d) for d in input_shape)
        if self.kind == LayerKind.CONV2D:
            k = self.kernel
            if len(input_shape) != 3 or input_shape[0] != self.in_channels or min(input_shape[1:]) < k:
                self._mismatch(index, f"({self.in_channels}, >={k}, >={k})", input_shape)
            return (self.out_channels, input_shape[1] - k + 1, input_shape[2] - k + 1)
        if self.kind == LayerKind.MAXPOOL2X2:
            if len(input_shape) != 3 or min(input_shape[1:]) < 2:
                self._mismatch(index, "(C, >=2, >=2)", input_shape)
            return (input_shape[0], input_shape[1] // 2, input_shape[2] // 2)
        if self.kind == LayerKind.AFFINE:
            if math.prod(input_shape) != self.in_features:
                self._mismatch(index, f"{self.in_features} features", input_shape)
            return (self.out_features,)
        return input_shape

    def _mismatch(self, index: int, expected: str, actual: tuple[int, ...]):
        raise ConfigurationError(
            f"Layer {index} ({self.kind.value}): expected input {expected}, got {actual}"
        )

    def to_dict(self) -> dict:
        raw = asdict(self)
        raw["kind"] = self.kind.value
        return {key: value for key, value in raw.items() if key == "kind" or value}

    @classmethod
    def from_dict(cls, raw: dict) -> "LayerSpec":
        return cls(**raw)


@dataclass(frozen=True)
class LayerCache:
    """
    Values a forward pass keeps for its backward pass.
    """

    kind: LayerKind
    input_shape: tuple[int, ...]
    tensors: tuple


def layer_forward(
    spec: LayerSpec,
    params: Sequence[np.ndarray],
    x: np.ndarray,
    mode: Mode,
    rng: Rng | None = None,
    index: int = 0,
) -> tuple[np.ndarray, LayerCache]:
    """
    Run one layer forward on a batch of instances.

    Args:
        spec (LayerSpec): Layer description.
        params (Sequence[np.ndarray]): (weight, bias) or empty.
        x (np.ndarray): Input shaped (N, *instance_shape), float64.
        mode (Mode): TRAIN enables dropout, EVAL makes it the identity.
        rng (Rng): Stream for the dropout mask (TRAIN only).
        index (int): Layer position, used in error messages.

    Returns:
        tuple: (output, cache for layer_backward).
    """
    spec.output_shape(x.shape[1:], index)
    _check_params(spec, params, index)
    n = x.shape[0]

    if spec.kind == LayerKind.CONV2D:
        weight, bias = params
        windows = sliding_window_view(x, (spec.kernel, spec.kernel), axis=(2, 3))
        # (N, C, Ho, Wo, k, k) x (O, C, k, k) -> (N, Ho, Wo, O)
        out = np.tensordot(windows, weight, axes=([1, 4, 5], [1, 2, 3]))
        out = out.transpose(0, 3, 1, 2) + bias[None, :, None, None]
        return out, LayerCache(spec.kind, x.shape, (windows, weight))

    if spec.kind == LayerKind.MAXPOOL2X2:
        c, h, w = x.shape[1:]
        ho, wo = h // 2, w // 2
        blocks = (
            x[:, :, :2 * ho, :2 * wo]
            .reshape(n, c, ho, 2, wo, 2)
            .transpose(0, 1, 2, 4, 3, 5)
            .reshape(n, c, ho, wo, 4)
        )
        # First maximum wins on ties.
        argmax = blocks.argmax(axis=-1)
        out = np.take_along_axis(blocks, argmax[..., None], axis=-1)[..., 0]
        return out, LayerCache(spec.kind, x.shape, (argmax,))

    if spec.kind == LayerKind.AFFINE:
        weight, bias = params
        flat = x.reshape(n, -1)
        return flat @ weight.T + bias, LayerCache(spec.kind, x.shape, (flat, weight))

    if spec.kind == LayerKind.RELU:
        return np.maximum(x, 0.0), LayerCache(spec.kind, x.shape, (x > 0.0,))

    if spec.kind == LayerKind.SIGMOID:
        out = scipy.special.expit(x)
        return out, LayerCache(spec.kind, x.shape, (out,))

    # Inverted dropout: survivors are scaled at train time, eval is the identity.
    if mode == Mode.EVAL or spec.rate == 0.0:
        return x.copy(), LayerCache(spec.kind, x.shape, (None,))
    if rng is None:
        raise InternalError(f"Layer {index} (dropout) needs an Rng in train mode")
    keep = rng.generator().random(x.shape) >= spec.rate
    scale = keep / (1.0 - spec.rate)
    return x * scale, LayerCache(spec.kind, x.shape, (scale,))


def layer_backward(
    spec: LayerSpec,
    cache: LayerCache,
    upstream: np.ndarray,
    input_grad: bool = True,
) -> tuple[np.ndarray | None, tuple[np.ndarray, ...]]:
    """
    Backpropagate through one layer.

    Args:
        spec (LayerSpec): Layer description used in the forward pass.
        cache (LayerCache): Cache returned by layer_forward.
        upstream (np.ndarray): Gradient w.r.t. the layer output.
        input_grad (bool): Whether the input gradient is needed; the first
            layer of a network skips it.

    Returns:
        tuple: (gradient w.r.t. the input or None, gradients w.r.t. the parameters).

    Raises:
        InternalError: If the cache does not belong to this layer kind or
            the upstream gradient has the wrong batch shape.
    """
    if cache.kind != spec.kind:
        raise InternalError(f"Cache of a {cache.kind.value} layer fed to a {spec.kind.value} backward")
    expected = (cache.input_shape[0],) + spec.output_shape(cache.input_shape[1:])
    if upstream.shape != expected:
        raise InternalError(f"Upstream gradient shape {upstream.shape} does not match {expected}")

    if spec.kind == LayerKind.CONV2D:
        windows, weight = cache.tensors
        k = spec.kernel
        grad_weight = np.tensordot(upstream, windows, axes=([0, 2, 3], [0, 2, 3]))
        grad_bias = upstream.sum(axis=(0, 2, 3))
        if not input_grad:
            return None, (grad_weight, grad_bias)
        # Full correlation of the upstream gradient with the flipped kernel.
        padded = np.pad(upstream, ((0, 0), (0, 0), (k - 1, k - 1), (k - 1, k - 1)))
        up_windows = sliding_window_view(padded, (k, k), axis=(2, 3))
        flipped = weight[:, :, ::-1, ::-1]
        grad_input = np.tensordot(up_windows, flipped, axes=([1, 4, 5], [0, 2, 3]))
        return grad_input.transpose(0, 3, 1, 2), (grad_weight, grad_bias)

    if spec.kind == LayerKind.MAXPOOL2X2:
        (argmax,) = cache.tensors
        n, c, h, w = cache.input_shape
        ho, wo = h // 2, w // 2
        routed = np.zeros((n, c, ho, wo, 4))
        np.put_along_axis(routed, argmax[..., None], upstream[..., None], axis=-1)
        grad_input = np.zeros(cache.input_shape)
        grad_input[:, :, :2 * ho, :2 * wo] = (
            routed.reshape(n, c, ho, wo, 2, 2)
            .transpose(0, 1, 2, 4, 3, 5)
            .reshape(n, c, 2 * ho, 2 * wo)
        )
        return grad_input, ()

    if spec.kind == LayerKind.AFFINE:
        flat, weight = cache.tensors
        if not input_grad:
            return None, (upstream.T @ flat, upstream.sum(axis=0))
        grad_input = (upstream @ weight).reshape(cache.input_shape)
        return grad_input, (upstream.T @ flat, upstream.sum(axis=0))

    if spec.kind == LayerKind.RELU:
        (positive,) = cache.tensors
        return upstream * positive, ()

    if spec.kind == LayerKind.SIGMOID:
        (out,) = cache.tensors
        return upstream * out * (1.0 - out), ()

    (scale,) = cache.tensors
    if scale is None:
        return upstream.copy(), ()
    return upstream * scale, ()


def _check_params(spec: LayerSpec, params: Sequence[np.ndarray], index: int):
    shapes = [tuple(p.shape) for p in params]
    if shapes != spec.param_shapes:
        raise ConfigurationError(
            f"Layer {index} ({spec.kind.value}): expected parameter shapes {spec.param_shapes}, got {shapes}"
        )
