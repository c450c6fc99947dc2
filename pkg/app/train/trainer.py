import math
import logging

import numpy as np

from enum import Enum
from dataclasses import dataclass, field, asdict

from app.augment import AugmentConfig, augment_bag
from app.core.layers import Mode
from app.core.model import InstanceClassifierConfig, ModelParams, bag_gradient, bag_probability, nll_loss
from app.core.pooling import PoolingConfig
from app.core.rng import Rng
from app.data.bags import Bag
from app.errors import ConfigurationError, DivergenceError, DomainError
from app.metrics import MetricsReport, auc, evaluate_predictions
from app.train.checkpoint import Checkpoint
from app.train.optimizer import Adam, Optimizer, SGDMomentum


logger = logging.getLogger(__name__)


class OptimizerKind(str, Enum):
    SGD_MOMENTUM = "sgd_momentum"
    ADAM = "adam"


@dataclass(frozen=True)
class TrainConfig:
    """
    Hyperparameters of one training run.

    Attributes:
        optimizer (OptimizerKind): adam or sgd_momentum.
        learning_rate (float): Constant step size, >= 0.
        momentum (float): sgd_momentum coefficient.
        beta1, beta2, adam_eps (float): Adam moment decay rates and denominator epsilon.
        weight_decay (float): L2 coefficient.
        max_epochs (int): Upper bound on epochs.
        patience (int): Epochs without validation-loss improvement before stopping.
        min_delta (float): Smallest validation-loss drop that resets the patience counter.
        batch_bags (int): Bags whose gradients are averaged per step.
        seed (int): Run seed; every random stream derives from it.
        pooling (PoolingConfig): Bag pooling operator.
        augment (AugmentConfig): Training-time augmentation.
    """

    optimizer: OptimizerKind = OptimizerKind.ADAM
    learning_rate: float = 1e-4
    momentum: float = 0.9
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    weight_decay: float = 5e-4
    max_epochs: int = 100
    patience: int = 10
    min_delta: float = 1e-3
    batch_bags: int = 1
    seed: int = 0
    pooling: PoolingConfig = field(default_factory=PoolingConfig)
    augment: AugmentConfig = field(default_factory=AugmentConfig)

    def __post_init__(self):
        try:
            object.__setattr__(self, "optimizer", OptimizerKind(self.optimizer))
        except ValueError:
            raise ConfigurationError(f"Unknown optimizer '{self.optimizer}', expected adam or sgd_momentum") from None
        # learning_rate = 0 is accepted as a degenerate run that leaves the weights untouched.
        if self.learning_rate < 0:
            raise ConfigurationError(f"learning_rate must be >= 0, got {self.learning_rate}")
        if self.max_epochs < 1 or self.patience < 1 or self.batch_bags < 1:
            raise ConfigurationError("max_epochs, patience and batch_bags must all be >= 1")
        if self.min_delta < 0:
            raise ConfigurationError(f"min_delta must be >= 0, got {self.min_delta}")

    def make_optimizer(self) -> Optimizer:
        if self.optimizer == OptimizerKind.SGD_MOMENTUM:
            return SGDMomentum(self.learning_rate, self.momentum, self.weight_decay)
        return Adam(self.learning_rate, self.beta1, self.beta2, self.adam_eps, self.weight_decay)

    def to_dict(self) -> dict:
        raw = asdict(self)
        raw["optimizer"] = self.optimizer.value
        raw["pooling"] = self.pooling.to_dict()
        raw["augment"] = self.augment.to_dict()
        return raw


@dataclass
class TrainHistory:
    """
    Per-epoch learning curves.

    Attributes:
        train_loss (list[float]): Mean training bag NLL per epoch.
        val_loss (list[float]): Mean validation bag NLL per epoch.
        val_auc (list[float | None]): Validation AUC per epoch (None if single-class).
        best_epoch (int): Epoch with minimal validation loss.
    """

    train_loss: list[float] = field(default_factory=list)
    val_loss: list[float] = field(default_factory=list)
    val_auc: list[float | None] = field(default_factory=list)
    best_epoch: int = 0

    def to_dict(self) -> dict:
        return asdict(self)


def predict_thetas(
    params: ModelParams,
    model: InstanceClassifierConfig,
    pooling: PoolingConfig,
    bags: list[Bag],
) -> np.ndarray:
    """
    Eval-mode bag probabilities in bag order (no dropout, no augmentation).
    """
    return np.array([bag_probability(params, model, pooling, bag, Mode.EVAL).theta for bag in bags])


def mean_nll(thetas: np.ndarray, labels: list[int], epsilon: float = 1e-7) -> float:
    return float(np.mean([nll_loss(theta, y, epsilon) for theta, y in zip(thetas, labels)]))


class Trainer:
    """
    Minimizes the mean bag NLL with early stopping on validation loss.

    Attributes:
        model (InstanceClassifierConfig): Architecture to train.
        config (TrainConfig): Hyperparameters.
        layout (dict): Data protocol recorded into the checkpoint.
    """

    def __init__(self, model: InstanceClassifierConfig, config: TrainConfig, layout: dict | None = None):
        self.model = model
        self.config = config
        self.layout = layout or {}
        self.rng = Rng(config.seed)

    def fit(self, train_bags: list[Bag], val_bags: list[Bag], params: ModelParams | None = None) -> tuple[Checkpoint, TrainHistory]:
        """
        Train until max_epochs or until validation loss has not dropped by
        `min_delta` for `patience` epochs.

        Returns:
            tuple: (checkpoint holding the best-validation weights, history).

        Raises:
            DomainError: If either bag list is empty.
            DivergenceError: If a loss becomes non-finite.
        """
        if not train_bags or not val_bags:
            raise DomainError("Training needs non-empty training and validation bag lists")

        config = self.config
        params = params.copy() if params is not None else ModelParams.initialize(self.model, self.rng.derive("init"))
        optimizer = config.make_optimizer()
        history = TrainHistory()
        best_params, best_loss, stale = params.copy(), math.inf, 0
        val_labels = [bag.label for bag in val_bags]

        logger.info(
            f"Training {self.model.num_params} parameters on {len(train_bags)} bag(s), "
            f"{len(val_bags)} validation bag(s), pooling={config.pooling.kind.value}"
        )
        for epoch in range(config.max_epochs):
            losses = self._run_epoch(epoch, params, optimizer, train_bags)

            thetas = predict_thetas(params, self.model, config.pooling, val_bags)
            val_loss = mean_nll(thetas, val_labels, config.pooling.epsilon)
            if not math.isfinite(val_loss):
                raise DivergenceError(epoch, "validation", val_loss)
            try:
                val_auc = auc(thetas, val_labels)
            except DomainError:
                val_auc = None

            history.train_loss.append(float(np.mean(losses)))
            history.val_loss.append(val_loss)
            history.val_auc.append(val_auc)
            auc_text = "n/a" if val_auc is None else f"{val_auc:.3f}"
            logger.info(
                f"Epoch {epoch}: train loss {history.train_loss[-1]:.4f}, "
                f"val loss {val_loss:.4f}, val AUC {auc_text}"
            )

            # Drops below min_delta still update the best weights but count as stale.
            improved = val_loss < best_loss - config.min_delta
            if val_loss < best_loss:
                best_params, best_loss = params.copy(), val_loss
                history.best_epoch = epoch
            stale = 0 if improved else stale + 1
            if stale >= config.patience:
                logger.info(f"Early stopping after epoch {epoch}; best epoch {history.best_epoch}")
                break

        checkpoint = Checkpoint(
            model=self.model,
            pooling=config.pooling,
            params=best_params,
            train=config.to_dict(),
            layout=dict(self.layout),
            best_epoch=history.best_epoch,
            best_val_loss=best_loss,
        )
        return checkpoint, history

    def _run_epoch(self, epoch: int, params: ModelParams, optimizer: Optimizer, bags: list[Bag]) -> list[float]:
        config = self.config
        order = self.rng.derive("shuffle", epoch).generator().permutation(len(bags))
        losses = []
        for start in range(0, len(order), config.batch_bags):
            batch = order[start:start + config.batch_bags]
            total = params.zeros_like()
            for index in batch:
                bag = bags[index]
                augmented = augment_bag(bag, config.augment, self.rng, epoch)
                loss, grads = bag_gradient(
                    params, self.model, config.pooling, augmented, bag.label,
                    self.rng.derive("dropout", epoch, bag.bag_id),
                )
                if not math.isfinite(loss):
                    raise DivergenceError(epoch, bag.bag_id, loss)
                logger.debug(f"Epoch {epoch} bag {bag.bag_id}: loss {loss:.5f}")
                losses.append(loss)
                for name, grad in grads.tensors.items():
                    total.tensors[name] += grad
            for name in total.tensors:
                total.tensors[name] /= len(batch)
            optimizer.step(params, total)
        return losses


def train_fold(
    train_bags: list[Bag],
    val_bags: list[Bag],
    config: TrainConfig,
    model: InstanceClassifierConfig,
    layout: dict | None = None,
    params: ModelParams | None = None,
) -> tuple[Checkpoint, TrainHistory]:
    return Trainer(model, config, layout).fit(train_bags, val_bags, params)


def evaluate(checkpoint: Checkpoint, bags: list[Bag], threshold: float = 0.5) -> tuple[np.ndarray, MetricsReport]:
    """
    Eval-mode thetas in bag order and their metrics at `threshold`.
    """
    if not bags:
        raise DomainError("Evaluation needs at least one bag")
    thetas = predict_thetas(checkpoint.params, checkpoint.model, checkpoint.pooling, bags)
    return thetas, evaluate_predictions(thetas, [bag.label for bag in bags], threshold)
