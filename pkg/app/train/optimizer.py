import abc

import numpy as np

from app.core.model import ModelParams


class Optimizer(abc.ABC):
    """
    Abstract base class for in-place parameter updates.

    Any concrete subclass must implement `update(name, param, grad)` for a
    single tensor; `step` applies weight decay and walks all tensors in order.

    Attributes:
        learning_rate (float): Step size.
        weight_decay (float): L2 coefficient added to every gradient.
    """

    def __init__(self, learning_rate: float, weight_decay: float = 0.0):
        self.learning_rate = learning_rate
        self.weight_decay = weight_decay

    def step(self, params: ModelParams, grads: ModelParams):
        """
        Update `params` in place from `grads` and bump the params version.
        """
        for name, param in params.tensors.items():
            grad = grads.tensors[name]
            if self.weight_decay:
                grad = grad + self.weight_decay * param
            self.update(name, param, grad)
        params.version += 1

    @abc.abstractmethod
    def update(self, name: str, param: np.ndarray, grad: np.ndarray):
        """
        Apply one update to a single tensor, in place.
        """
        pass


class SGDMomentum(Optimizer):
    """
    Heavy-ball SGD: v <- momentum * v + g, p <- p - lr * v.
    """

    def __init__(self, learning_rate: float, momentum: float = 0.9, weight_decay: float = 0.0):
        super().__init__(learning_rate, weight_decay)
        self.momentum = momentum
        self.velocity: dict[str, np.ndarray] = {}

    def update(self, name: str, param: np.ndarray, grad: np.ndarray):
        velocity = self.velocity.get(name)
        velocity = grad.copy() if velocity is None else self.momentum * velocity + grad
        self.velocity[name] = velocity
        param -= self.learning_rate * velocity


class Adam(Optimizer):
    """
    Adam with bias-corrected first and second moment estimates.
    """

    def __init__(
        self,
        learning_rate: float,
        beta1: float = 0.9,
        beta2: float = 0.999,
        eps: float = 1e-8,
        weight_decay: float = 0.0,
    ):
        super().__init__(learning_rate, weight_decay)
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.first: dict[str, np.ndarray] = {}
        self.second: dict[str, np.ndarray] = {}
        self.steps: dict[str, int] = {}

    def update(self, name: str, param: np.ndarray, grad: np.ndarray):
        t = self.steps.get(name, 0) + 1
        self.steps[name] = t
        m = self.beta1 * self.first.get(name, np.zeros_like(grad)) + (1.0 - self.beta1) * grad
        v = self.beta2 * self.second.get(name, np.zeros_like(grad)) + (1.0 - self.beta2) * grad * grad
        self.first[name], self.second[name] = m, v
        m_hat = m / (1.0 - self.beta1 ** t)
        v_hat = v / (1.0 - self.beta2 ** t)
        param -= self.learning_rate * m_hat / (np.sqrt(v_hat) + self.eps)
