import logging
from dataclasses import asdict

import numpy as np

from alphaforge import grad_engine as ge
from alphaforge.checkpoint import ModelCheckpoint
from alphaforge.errors import DatasetError, NumericalError
from alphaforge.models import Cnn1D, DualTaskMLP, LinearSVR

logger = logging.getLogger(__name__)


def rmse(pred, target):
    return float(np.sqrt(np.mean((np.asarray(pred) - np.asarray(target)) ** 2)))


class TrainingManager:
    """
    Runs the epoch loop for the neural models
    Handles mini-batching, the optimizer, LR plateaus and early stopping
    """

    def __init__(self, config):
        self.config = config
        self.history = []
        self.best_epoch = None
        self.best_val_rmse = np.inf
        self.best_state = None
        self.stopped_early = False
        self.training_complete = False

    def fit(self, model, train, validation, rng, dropout_rng=None):
        """
        Train `model` in place and leave it holding the best-validation-epoch parameters
        `rng` shuffles the batches; dropout masks come from `dropout_rng` (default `rng`)
        """
        dropout_rng = rng if dropout_rng is None else dropout_rng
        config = self.config
        optimizer = ge.Adam(model.parameters(), lr=config.lr, weight_decay=config.weight_decay,
                            decoupled=config.decoupled_weight_decay)
        scheduler = ge.PlateauScheduler(optimizer, factor=config.scheduler_factor,
                                        patience=config.scheduler_patience, min_delta=config.scheduler_min_delta)

        for epoch in range(config.max_epochs):
            train_loss = self._run_epoch(model, train, epoch, optimizer, rng, dropout_rng)
            val_rmse = self._validation_rmse(model, validation)
            if not np.isfinite(val_rmse):
                raise NumericalError(f"non-finite validation RMSE at epoch {epoch}")
            self.history.append({"epoch": epoch, "train_loss": train_loss, "val_rmse": val_rmse,
                                 "lr": optimizer.lr})

            if val_rmse < self.best_val_rmse:
                self.best_val_rmse = val_rmse
                self.best_epoch = epoch
                self.best_state = model.state_dict()
            scheduler.step(val_rmse)

            logger.debug("epoch %d: train loss %.6g, val RMSE %.6g, lr %.3g",
                         epoch, train_loss, val_rmse, optimizer.lr)
            if epoch - self.best_epoch >= config.early_stop_patience:
                self.stopped_early = True
                logger.info("Early stopping at epoch %d (best epoch %d, val RMSE %.6g)",
                            epoch, self.best_epoch, self.best_val_rmse)
                break

        model.load_state_dict(self.best_state)
        self.training_complete = True
        return model

    def _run_epoch(self, model, train, epoch, optimizer, rng, dropout_rng):
        config = self.config
        order = rng.permutation(len(train.y))
        total, seen = 0.0, 0
        for batch, start in enumerate(range(0, len(order), config.batch_size)):
            idx = order[start:start + config.batch_size]
            optimizer.zero_grad()
            loss, _, _ = model.loss(train.X[idx], train.y[idx], train.label_up[idx],
                                    cls_weight=config.cls_weight, training=True, rng=dropout_rng)
            value = loss.item()
            if not np.isfinite(value):
                raise NumericalError(f"non-finite loss at epoch {epoch}, batch {batch}")
            loss.backward()
            ge.clip_grad_norm(model.parameters(), config.clip_norm)
            optimizer.step()
            total += value * len(idx)
            seen += len(idx)
        return total / seen

    def _validation_rmse(self, model, validation):
        return rmse(model.predict(validation.X), validation.y)

    def summary(self):
        return {
            "best_epoch": self.best_epoch,
            "best_val_rmse": self.best_val_rmse,
            "epochs_run": len(self.history),
            "stopped_early": self.stopped_early,
        }


def _split(dataset):
    train, validation = dataset.train(), dataset.validation()
    if len(train) == 0 or len(validation) == 0:
        raise DatasetError("training needs non-empty train and validation splits")
    return train, validation


def _generators(seed):
    """Independent (init, shuffle, dropout) streams spawned from one seed"""
    return tuple(np.random.Generator(np.random.PCG64(child)) for child in np.random.SeedSequence(seed).spawn(3))


def _train_neural(model_cls, dataset, config, init="xavier", **model_kwargs):
    train, validation = _split(dataset)
    init_rng, shuffle_rng, dropout_rng = _generators(config.seed)
    model = model_cls(dataset.n_features, rng=init_rng, init=init, **model_kwargs)
    manager = TrainingManager(config)
    manager.fit(model, train, validation, shuffle_rng, dropout_rng)
    metrics = manager.summary()
    metrics["train_rmse"] = rmse(model.predict(train.X), train.y)
    logger.info("Trained %s: best epoch %d of %d, val RMSE %.6g",
                model.kind, metrics["best_epoch"], metrics["epochs_run"], metrics["best_val_rmse"])
    return ModelCheckpoint(model.kind, dataset.factor_names, model.state_dict(),
                           config=_snapshot(config, model), seed=config.seed, metrics=metrics)


def _snapshot(config, model):
    return {"training": asdict(config), "model": model.config()}


def train_dual_mlp(dataset, config, init="xavier"):
    return _train_neural(DualTaskMLP, dataset, config, init=init, dropout=config.dropout)


def train_cnn(dataset, config, init="xavier"):
    return _train_neural(Cnn1D, dataset, config, init=init)


def train_svr(dataset, config):
    train = dataset.train()
    if len(train) == 0:
        raise DatasetError("training needs a non-empty train split")
    model = LinearSVR(dataset.n_features, C=config.svr_c, epsilon=config.svr_epsilon,
                      standardize_target=config.svr_standardize_target)
    model.fit(train.X, train.y, n_iter=config.svr_iterations, step0=config.svr_step)
    metrics = {"objective": model.objective_value, "train_rmse": rmse(model.predict(train.X), train.y)}
    validation = dataset.validation()
    if len(validation):
        metrics["best_val_rmse"] = rmse(model.predict(validation.X), validation.y)
    return ModelCheckpoint(model.kind, dataset.factor_names, model.state_dict(),
                           config=_snapshot(config, model), seed=config.seed, metrics=metrics)


TRAINERS = {"mlp": train_dual_mlp, "cnn": train_cnn, "svr": train_svr}


def train_model(kind, dataset, config):
    try:
        trainer = TRAINERS[kind]
    except KeyError:
        raise ValueError(f"unknown model kind {kind}") from None
    return trainer(dataset, config)
