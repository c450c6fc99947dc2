import math

import numpy as np
import pytest

from app.augment import AugmentConfig
from app.core.layers import LayerSpec
from app.core.model import InstanceClassifierConfig, ModelParams
from app.core.pooling import PoolingConfig
from app.core.rng import Rng
from app.data.bags import Bag, Patch
from app.errors import ConfigurationError, DivergenceError, DomainError
from app.train import trainer
from app.train.checkpoint import Checkpoint, save
from app.train.trainer import Trainer, TrainConfig, evaluate, mean_nll, predict_thetas


@pytest.fixture
def bags(make_bag):
    return [make_bag(k=3, label=i % 2, bag_id=f"train_{i}") for i in range(6)]


@pytest.fixture
def val_bags(make_bag):
    return [make_bag(k=2, label=i % 2, bag_id=f"val_{i}") for i in range(4)]


def config(**kwargs) -> TrainConfig:
    base = {"learning_rate": 0.01, "max_epochs": 3, "patience": 5, "seed": 11, "augment": AugmentConfig(blur=False)}
    return TrainConfig(**{**base, **kwargs})


class TestTrainConfig:

    def test_defaults(self):
        default = TrainConfig()
        assert default.optimizer.value == "adam"
        assert (default.learning_rate, default.max_epochs, default.patience) == (1e-4, 100, 10)

    @pytest.mark.parametrize(
        "kwargs",
        [
            {"optimizer": "rmsprop"}, {"learning_rate": -1.0}, {"min_delta": -0.1},
            {"max_epochs": 0}, {"patience": 0}, {"batch_bags": 0},
        ],
    )
    def test_invalid(self, kwargs):
        with pytest.raises(ConfigurationError):
            TrainConfig(**kwargs)

    def test_to_dict_is_plain(self):
        raw = config(optimizer="sgd_momentum").to_dict()
        assert raw["optimizer"] == "sgd_momentum"
        assert raw["pooling"]["kind"] == "nor"
        assert raw["augment"]["blur"] is False


class TestTrainer:

    def test_zero_learning_rate_keeps_initial_weights(self, small_model, bags, val_bags):
        checkpoint, _ = Trainer(small_model, config(learning_rate=0.0, weight_decay=0.0)).fit(bags, val_bags)
        initial = ModelParams.initialize(small_model, Rng(11).derive("init"))
        np.testing.assert_array_equal(checkpoint.params.to_vector(), initial.to_vector())

    def test_reproducible(self, small_model, bags, val_bags):
        first, first_history = Trainer(small_model, config()).fit(bags, val_bags)
        second, second_history = Trainer(small_model, config()).fit(bags, val_bags)
        np.testing.assert_array_equal(first.params.to_vector(), second.params.to_vector())
        assert first_history.to_dict() == second_history.to_dict()

    def test_checkpoint_bytes_are_reproducible(self, small_model, bags, val_bags):
        first, _ = Trainer(small_model, config()).fit(bags, val_bags)
        second, _ = Trainer(small_model, config()).fit(bags, val_bags)
        assert save(first) == save(second)

    def test_small_steps_decrease_a_logistic_loss(self):
        model = InstanceClassifierConfig((LayerSpec.affine(3, 1), LayerSpec.of("sigmoid")), (3, 1, 1))
        bag = Bag("only", 1, (Patch(np.full((1, 1, 3), 200, dtype=np.uint8), 0, 0),))
        run = config(
            optimizer="sgd_momentum", momentum=0.0, weight_decay=0.0, learning_rate=0.1,
            max_epochs=20, patience=20, augment=AugmentConfig(enabled=False),
        )
        _, history = Trainer(model, run).fit([bag], [bag])
        assert all(b <= a for a, b in zip(history.train_loss, history.train_loss[1:]))
        assert history.train_loss[-1] < history.train_loss[0]

    def test_seed_changes_the_run(self, small_model, bags, val_bags):
        first, _ = Trainer(small_model, config(seed=1)).fit(bags, val_bags)
        second, _ = Trainer(small_model, config(seed=2)).fit(bags, val_bags)
        assert not np.array_equal(first.params.to_vector(), second.params.to_vector())

    def test_history_and_best_epoch(self, small_model, bags, val_bags):
        checkpoint, history = Trainer(small_model, config(max_epochs=4)).fit(bags, val_bags)
        assert len(history.train_loss) == len(history.val_loss) == len(history.val_auc) == 4
        assert history.best_epoch == int(np.argmin(history.val_loss))
        assert checkpoint.best_epoch == history.best_epoch
        assert checkpoint.best_val_loss == min(history.val_loss)

    def test_best_weights_reproduce_best_validation_loss(self, small_model, bags, val_bags):
        checkpoint, history = Trainer(small_model, config(max_epochs=4)).fit(bags, val_bags)
        thetas = predict_thetas(checkpoint.params, small_model, checkpoint.pooling, val_bags)
        assert mean_nll(thetas, [b.label for b in val_bags]) == pytest.approx(checkpoint.best_val_loss, abs=1e-12)

    def test_early_stopping(self, small_model, bags, val_bags):
        # No learning means no improvement after the first epoch.
        _, history = Trainer(small_model, config(learning_rate=0.0, max_epochs=20, patience=2)).fit(bags, val_bags)
        assert len(history.val_loss) == 3
        assert history.best_epoch == 0

    def test_small_improvements_count_as_stale(self, small_model, bags, val_bags, monkeypatch):
        losses = iter([1.0, 0.9995, 0.999, 0.9985, 0.5, 0.4999])
        monkeypatch.setattr(trainer, "mean_nll", lambda thetas, labels, epsilon: next(losses))
        _, history = Trainer(small_model, config(max_epochs=6, patience=3, min_delta=1e-3)).fit(bags, val_bags)
        assert history.val_loss == [1.0, 0.9995, 0.999, 0.9985]
        assert history.best_epoch == 3

    def test_divergence_names_epoch_and_bag(self, small_model, bags, val_bags, monkeypatch):
        def diverging(params, *args, **kwargs):
            return math.nan, params.zeros_like()

        monkeypatch.setattr(trainer, "bag_gradient", diverging)
        with pytest.raises(DivergenceError) as info:
            Trainer(small_model, config()).fit(bags, val_bags)
        assert info.value.epoch == 0
        assert info.value.bag_id in {bag.bag_id for bag in bags}
        assert info.value.bag_id in str(info.value)

    def test_batches_of_bags(self, small_model, bags, val_bags):
        checkpoint, history = Trainer(small_model, config(batch_bags=4, optimizer="sgd_momentum")).fit(bags, val_bags)
        assert len(history.train_loss) == 3
        assert checkpoint.params.is_finite()

    def test_empty_bag_lists(self, small_model, bags):
        with pytest.raises(DomainError):
            Trainer(small_model, config()).fit([], bags)
        with pytest.raises(DomainError):
            Trainer(small_model, config()).fit(bags, [])

    def test_checkpoint_records_run(self, small_model, bags, val_bags):
        layout = {"patch_size": 8, "subimage_size": 64}
        checkpoint, _ = Trainer(small_model, config(pooling=PoolingConfig("isr")), layout).fit(bags, val_bags)
        assert checkpoint.pooling.kind.value == "isr"
        assert checkpoint.layout == layout
        assert checkpoint.train["seed"] == 11


class TestEvaluate:

    def test_zero_model(self, small_model, val_bags):
        checkpoint = Checkpoint(small_model, PoolingConfig("max"), ModelParams.zeros(small_model))
        thetas, report = evaluate(checkpoint, val_bags)
        np.testing.assert_array_equal(thetas, 0.5)
        assert report.tp == 2 and report.fp == 2
        assert report.auc == 0.5

    def test_zero_model_nor_pairs(self, small_model, make_bag):
        bags = [make_bag(k=2, label=y, bag_id=f"b{i}") for i, y in enumerate([1, 0, 0, 1, 1])]
        checkpoint = Checkpoint(small_model, PoolingConfig("nor"), ModelParams.zeros(small_model))
        thetas, report = evaluate(checkpoint, bags)
        np.testing.assert_allclose(thetas, 0.75, atol=1e-12)
        assert report.accuracy == pytest.approx(0.6)

    def test_evaluation_is_deterministic(self, small_model, small_params, val_bags):
        checkpoint = Checkpoint(small_model, PoolingConfig("lse"), small_params)
        np.testing.assert_array_equal(evaluate(checkpoint, val_bags)[0], evaluate(checkpoint, val_bags)[0])

    def test_empty(self, small_model):
        with pytest.raises(DomainError):
            evaluate(Checkpoint(small_model, PoolingConfig(), ModelParams.zeros(small_model)), [])
