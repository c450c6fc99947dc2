import numpy as np
import scipy.special

from enum import Enum
from dataclasses import dataclass

from app.errors import ConfigurationError, DomainError


class PoolingKind(str, Enum):
    MAX = "max"
    NOR = "nor"
    ISR = "isr"
    LSE = "lse"


@dataclass(frozen=True)
class PoolingConfig:
    """
    Permutation-invariant operator that turns instance scores into a bag probability.

    Attributes:
        kind (PoolingKind): max, nor (Noisy-Or), isr or lse (log-sum-exp).
        r (float): LSE sharpness, must be positive for LSE.
        epsilon (float): Clamp margin applied to scores before NOR/ISR and to
            theta inside the loss.
    """

    kind: PoolingKind = PoolingKind.NOR
    r: float = 10.0
    epsilon: float = 1e-7

    def __post_init__(self):
        kind = self.kind.lower() if isinstance(self.kind, str) and not isinstance(self.kind, PoolingKind) else self.kind
        try:
            object.__setattr__(self, "kind", PoolingKind(kind))
        except ValueError:
            choices = ",".join(k.value for k in PoolingKind)
            raise ConfigurationError(f"Unknown pooling '{self.kind}', expected one of {{{choices}}}") from None
        object.__setattr__(self, "r", float(self.r))
        object.__setattr__(self, "epsilon", float(self.epsilon))
        if self.kind == PoolingKind.LSE and not self.r > 0:
            raise ConfigurationError(f"LSE pooling needs r > 0, got {self.r}")
        if not 0.0 < self.epsilon <= 0.01:
            raise ConfigurationError(f"epsilon must lie in (0, 0.01], got {self.epsilon}")

    def to_dict(self) -> dict:
        return {"kind": self.kind.value, "r": self.r, "epsilon": self.epsilon}


def _scores(z) -> np.ndarray:
    z = np.asarray(z, dtype=np.float64).ravel()
    if z.size == 0:
        raise DomainError("Cannot pool an empty score vector")
    if not np.all((z >= 0.0) & (z <= 1.0)):
        raise DomainError("Instance scores must lie in [0, 1]")
    return z


def pool(config: PoolingConfig, z) -> float:
    """
    Combine instance scores into the bag probability theta.

    NOR and ISR work on scores clamped to [epsilon, 1 - epsilon]. NOR is
    evaluated in log space, LSE with the max-shift of logsumexp.

    Args:
        config (PoolingConfig): Operator selection.
        z (array-like): K >= 1 scores in [0, 1].

    Returns:
        float: theta in [0, 1].
    """
    z = _scores(z)

    if config.kind == PoolingKind.MAX:
        theta = z.max()
    elif config.kind == PoolingKind.NOR:
        zc = np.clip(z, config.epsilon, 1.0 - config.epsilon)
        theta = -np.expm1(np.sum(np.log1p(-zc)))
    elif config.kind == PoolingKind.ISR:
        zc = np.clip(z, config.epsilon, 1.0 - config.epsilon)
        s = np.sum(zc / (1.0 - zc))
        theta = s / (1.0 + s)
    else:
        theta = (scipy.special.logsumexp(config.r * z) - np.log(z.size)) / config.r
        # Rounding can push log-mean-exp a hair outside [min, max].
        theta = min(max(theta, z.min()), z.max())

    return float(np.clip(theta, 0.0, 1.0))


def pool_grad(config: PoolingConfig, z, upstream: float = 1.0) -> np.ndarray:
    """
    Gradient of theta w.r.t. each instance score, times `upstream`.

    Gradients are evaluated at the clamped scores. Max routes the whole
    gradient to the first maximizing index.

    Args:
        config (PoolingConfig): Operator selection.
        z (array-like): K >= 1 scores in [0, 1].
        upstream (float): dLoss/dtheta.

    Returns:
        np.ndarray: K per-score gradients.
    """
    z = _scores(z)

    if config.kind == PoolingKind.MAX:
        grad = np.zeros_like(z)
        grad[np.argmax(z)] = 1.0
    elif config.kind == PoolingKind.NOR:
        zc = np.clip(z, config.epsilon, 1.0 - config.epsilon)
        log_survival = np.log1p(-zc)
        grad = np.exp(np.sum(log_survival) - log_survival)
    elif config.kind == PoolingKind.ISR:
        zc = np.clip(z, config.epsilon, 1.0 - config.epsilon)
        s = np.sum(zc / (1.0 - zc))
        grad = 1.0 / ((1.0 + s) ** 2 * (1.0 - zc) ** 2)
    else:
        grad = scipy.special.softmax(config.r * z)

    return grad * upstream
