"""Fine-tuning loop: cross-entropy loss, SGD and Adam updates, curve logging.

The optimizer steps are pure functions over name->tensor mappings so they
can be checked against scalar recurrences directly.  Shuffling is reseeded
per epoch from (seed, epoch), and dropout noise from (seed, epoch, 1), so a
(data, hyperparameters, seed) triple reproduces the same learning curve.
"""

from __future__ import annotations

import csv
import logging
import math
import os
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ParameterError, TrainingError, ValidationError
from .network.layers import softmax
from .network.model import Network
from .seeding import derive_rng

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class Hyperparameters:
    """Training configuration; defaults follow the studied setup
    (Adam, learning rate 5e-6, batch size 50, 50 epochs)."""

    optimizer: str = "adam"
    learning_rate: float = 0.000005
    batch_size: int = 50
    epochs: int = 50
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    seed: int = 0

    def validate(self) -> None:
        if self.optimizer not in ("adam", "sgd"):
            raise ParameterError(f"optimizer must be 'adam' or 'sgd', got {self.optimizer!r}")
        if self.learning_rate <= 0:
            raise ParameterError(f"learning_rate must be > 0, got {self.learning_rate}")
        if self.batch_size <= 0:
            raise ParameterError(f"batch_size must be > 0, got {self.batch_size}")
        if self.epochs <= 0:
            raise ParameterError(f"epochs must be > 0, got {self.epochs}")
        if not 0 < self.adam_beta1 < 1 or not 0 < self.adam_beta2 < 1:
            raise ParameterError("adam betas must lie strictly between 0 and 1")
        if self.adam_eps <= 0:
            raise ParameterError(f"adam_eps must be > 0, got {self.adam_eps}")

    @property
    def display_name(self) -> str:
        return {"adam": "Adam", "sgd": "SGD"}[self.optimizer]


@dataclass
class OptimizerState:
    """Step counter plus Adam first/second moment accumulators."""

    t: int = 0
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)

    @classmethod
    def init(cls, params: dict[str, np.ndarray]) -> "OptimizerState":
        return cls(t=0,
                   m={k: np.zeros_like(p) for k, p in params.items()},
                   v={k: np.zeros_like(p) for k, p in params.items()})


def cross_entropy_loss(logits: np.ndarray, targets: np.ndarray) -> tuple[float, np.ndarray]:
    """Mean cross-entropy over the batch and its gradient w.r.t. the logits.

    loss = -(1/B) sum log softmax(logits)[target];
    gradient = (softmax - one_hot) / B.
    """
    logits = np.asarray(logits)
    targets = np.asarray(targets)
    b, k = logits.shape
    if targets.shape != (b,):
        raise ParameterError(f"targets must have shape ({b},), got {targets.shape}")
    if targets.min() < 0 or targets.max() >= k:
        raise ParameterError(f"targets must lie in [0, {k}), got range "
                             f"[{targets.min()}, {targets.max()}]")
    shifted = logits - logits.max(axis=1, keepdims=True)
    log_norm = np.log(np.exp(shifted).sum(axis=1))
    loss = float(np.mean(log_norm - shifted[np.arange(b), targets]))
    grad = softmax(logits)
    grad[np.arange(b), targets] -= 1.0
    grad /= b
    return loss, grad.astype(logits.dtype, copy=False)


def _check_shapes(params: dict, grads: dict) -> None:
    if set(params) != set(grads):
        raise ParameterError(f"parameter/gradient name mismatch: "
                             f"{sorted(set(params) ^ set(grads))}")
    for name in params:
        if params[name].shape != grads[name].shape:
            raise ParameterError(f"gradient for {name!r} has shape {grads[name].shape}, "
                                 f"parameter has {params[name].shape}")


def sgd_step(params: dict[str, np.ndarray], grads: dict[str, np.ndarray],
             lr: float) -> dict[str, np.ndarray]:
    """Plain gradient descent: theta <- theta - lr * grad, elementwise."""
    if lr <= 0:
        raise ParameterError(f"lr must be > 0, got {lr}")
    _check_shapes(params, grads)
    return {name: params[name] - lr * grads[name] for name in params}


def adam_step(params: dict[str, np.ndarray], grads: dict[str, np.ndarray],
              state: OptimizerState, hp: Hyperparameters
              ) -> tuple[dict[str, np.ndarray], OptimizerState]:
    """Bias-corrected Adam update.

    m <- b1*m + (1-b1)*g;  v <- b2*v + (1-b2)*g^2;
    mhat = m/(1-b1^t);  vhat = v/(1-b2^t);
    theta <- theta - lr * mhat / (sqrt(vhat) + eps),  with t freshly incremented.
    """
    _check_shapes(params, grads)
    for name, g in grads.items():
        if not np.all(np.isfinite(g)):
            raise TrainingError(f"non-finite gradient in tensor {name!r} at step {state.t + 1}")
    t = state.t + 1
    b1, b2 = hp.adam_beta1, hp.adam_beta2
    new_params = {}
    new_m = {}
    new_v = {}
    for name in params:
        g = grads[name]
        m = b1 * state.m[name] + (1.0 - b1) * g
        v = b2 * state.v[name] + (1.0 - b2) * np.square(g)
        mhat = m / (1.0 - b1 ** t)
        vhat = v / (1.0 - b2 ** t)
        new_params[name] = params[name] - hp.learning_rate * mhat / (np.sqrt(vhat) + hp.adam_eps)
        new_m[name] = m
        new_v[name] = v
    return new_params, OptimizerState(t=t, m=new_m, v=new_v)


@dataclass
class EpochStats:
    epoch: int
    train_loss: float
    train_accuracy: float
    val_loss: float
    val_accuracy: float


@dataclass
class LearningCurve:
    """Per-epoch train/validation loss and accuracy."""

    entries: list[EpochStats] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.entries)

    def write_csv(self, path: str | os.PathLike) -> None:
        path = Path(path)
        tmp = path.with_name(path.name + ".tmp")
        with open(tmp, "w", newline="") as f:
            writer = csv.writer(f)
            writer.writerow(["epoch", "train_loss", "train_acc", "val_loss", "val_acc"])
            for e in self.entries:
                writer.writerow([e.epoch, repr(e.train_loss), repr(e.train_accuracy),
                                 repr(e.val_loss), repr(e.val_accuracy)])
        os.replace(tmp, path)


class ArrayDataset:
    """In-memory dataset: preprocessed images (N, C, S, S) plus class indices."""

    def __init__(self, images: np.ndarray, targets: np.ndarray):
        images = np.asarray(images)
        targets = np.asarray(targets, dtype=np.int64)
        if images.ndim != 4 or len(images) != len(targets):
            raise ParameterError(f"need (N, C, H, W) images and N targets, got "
                                 f"{images.shape} and {targets.shape}")
        self.images = images
        self.targets = targets

    def __len__(self) -> int:
        return len(self.targets)

    @property
    def labels(self) -> np.ndarray:
        return self.targets

    def batch(self, indices: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        return self.images[indices], self.targets[indices]


@dataclass
class EpochEval:
    loss: float
    accuracy: float
    predictions: np.ndarray
    probabilities: np.ndarray


def evaluate_epoch(network, dataset, batch_size: int = 50) -> EpochEval:
    """Inference-mode pass: mean loss, argmax accuracy, per-image scores."""
    n = len(dataset)
    if n == 0:
        raise ParameterError("cannot evaluate an empty dataset")
    probs = []
    losses = []
    targets = []
    for start in range(0, n, batch_size):
        idx = np.arange(start, min(start + batch_size, n))
        x, y = dataset.batch(idx)
        logits, _ = network.forward(x, train=False)
        loss, _ = cross_entropy_loss(logits, y)
        losses.append(loss * len(idx))
        probs.append(softmax(np.asarray(logits, dtype=np.float64)))
        targets.append(y)
    probabilities = np.concatenate(probs)
    y_all = np.concatenate(targets)
    predictions = probabilities.argmax(axis=1)
    return EpochEval(loss=float(sum(losses) / n),
                     accuracy=float(np.mean(predictions == y_all)),
                     predictions=predictions,
                     probabilities=probabilities)


@dataclass
class TrainResult:
    network: Network
    curve: LearningCurve
    best_epoch: int
    best_val_accuracy: float
    best_checkpoint_path: Path | None = None
    final_checkpoint_path: Path | None = None


def steps_per_epoch(n_train: int, batch_size: int) -> int:
    return math.ceil(n_train / batch_size)


def train(network: Network, train_set, val_set, hp: Hyperparameters,
          checkpoint_dir: str | os.PathLike | None = None,
          on_epoch=None) -> TrainResult:
    """Fine-tune ``network`` in place over ``hp.epochs`` epochs.

    Each epoch reshuffles the training set (seeded by epoch), walks batches
    of ``hp.batch_size`` (final short batch included), then measures train
    and validation loss/accuracy in inference mode.  The best-validation-
    accuracy checkpoint and the final model are written when
    ``checkpoint_dir`` is given.  ``on_epoch`` receives each EpochStats.
    """
    from .network.checkpoint import save_checkpoint

    hp.validate()
    if len(train_set) == 0 or len(val_set) == 0:
        raise ParameterError("train and validation sets must be non-empty")
    present = np.unique(train_set.labels)
    if len(present) != network.spec.num_classes or present.min() < 0 \
            or present.max() >= network.spec.num_classes:
        raise ValidationError(
            f"training set covers classes {present.tolist()} but the network head "
            f"has width {network.spec.num_classes}; every class must be present")

    state = OptimizerState.init(network.params) if hp.optimizer == "adam" else OptimizerState()
    curve = LearningCurve()
    best_epoch = 0
    best_val_accuracy = -1.0
    best_path = final_path = None
    if checkpoint_dir is not None:
        checkpoint_dir = Path(checkpoint_dir)
        checkpoint_dir.mkdir(parents=True, exist_ok=True)
        best_path = checkpoint_dir / "best.ckpt"
        final_path = checkpoint_dir / "final.ckpt"

    n = len(train_set)
    for epoch in range(1, hp.epochs + 1):
        started = time.monotonic()
        order = derive_rng(hp.seed, epoch).permutation(n)
        dropout_rng = derive_rng(hp.seed, epoch, 1)
        for step, start in enumerate(range(0, n, hp.batch_size)):
            x, y = train_set.batch(order[start:start + hp.batch_size])
            logits, cache = network.forward(x, train=True, rng=dropout_rng)
            loss, dlogits = cross_entropy_loss(logits, y)
            if not math.isfinite(loss):
                raise TrainingError(f"non-finite loss {loss} at epoch {epoch}, "
                                    f"batch {step + 1} (lr={hp.learning_rate})")
            grads = network.backward(cache, dlogits)
            if hp.optimizer == "adam":
                network.params, state = adam_step(network.params, grads, state, hp)
            else:
                network.params = sgd_step(network.params, grads, hp.learning_rate)
                state.t += 1

        train_eval = evaluate_epoch(network, train_set, hp.batch_size)
        val_eval = evaluate_epoch(network, val_set, hp.batch_size)
        stats = EpochStats(epoch=epoch,
                           train_loss=train_eval.loss, train_accuracy=train_eval.accuracy,
                           val_loss=val_eval.loss, val_accuracy=val_eval.accuracy)
        curve.entries.append(stats)
        logger.info("epoch %d/%d: train_loss=%.6f train_acc=%.4f val_loss=%.6f "
                    "val_acc=%.4f (%.1fs)", epoch, hp.epochs, stats.train_loss,
                    stats.train_accuracy, stats.val_loss, stats.val_accuracy,
                    time.monotonic() - started)
        if on_epoch is not None:
            on_epoch(stats)
        if val_eval.accuracy > best_val_accuracy:
            best_val_accuracy = val_eval.accuracy
            best_epoch = epoch
            if best_path is not None:
                save_checkpoint(network, best_path)

    if final_path is not None:
        save_checkpoint(network, final_path)
    return TrainResult(network=network, curve=curve, best_epoch=best_epoch,
                       best_val_accuracy=best_val_accuracy,
                       best_checkpoint_path=best_path, final_checkpoint_path=final_path)
