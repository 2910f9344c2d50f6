#!/usr/bin/env python3
"""
Neural Network Module
Fully-connected feedforward regressor: tanh hidden layers, sigmoid output,
mean squared error on normalized targets, full-batch gradient descent with
momentum. Covers the shallow (ANN) and deep (DNN) presets.

Gotchas:
- Batches are row-major (N x D); weight matrices are fan_out x fan_in.
- train() returns the best-on-validation snapshot, not the last epoch.
"""

import copy
import logging
import time
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
from tqdm import tqdm

from feature_encoding import TARGET_MAX_SEC, Normalizer, denormalize_target, normalize
from pdt_metrics import accuracy_pdt


PRESETS = {
    'ann': {'hidden_layers': (200,), 'epochs': 15000},
    'dnn': {'hidden_layers': (50,) * 10, 'epochs': 2000},
}
HIDDEN_ACTIVATION = 'tanh'
OUTPUT_ACTIVATION = 'sigmoid'
SIGMOID_EPS = 1e-12

logger = logging.getLogger(__name__)


class DivergenceError(ArithmeticError):
    """Training loss became non-finite"""

    def __init__(self, epoch: int, loss: float):
        self.epoch = epoch
        self.loss = loss
        super().__init__(f"training diverged at epoch {epoch} (loss={loss})")


@dataclass(frozen=True)
class NetworkConfig:
    input_dim: int
    hidden_layers: Tuple[int, ...] = (200,)
    output_dim: int = 1
    learning_rate: float = 0.01
    momentum: float = 0.8
    epochs: int = 15000
    seed: int = 0
    preset: str = 'custom'

    @classmethod
    def from_preset(cls, preset: str, input_dim: int, seed: int = 0, **overrides) -> 'NetworkConfig':
        """ann / dnn topology and epoch count, optionally overridden field by field"""
        preset = preset.lower()
        if preset != 'custom' and preset not in PRESETS:
            raise ValueError(f"unknown preset '{preset}'; expected ann, dnn or custom")
        values = dict(PRESETS.get(preset, {}))
        values.update({k: v for k, v in overrides.items() if v is not None})
        if 'hidden_layers' in values:
            values['hidden_layers'] = tuple(int(w) for w in values['hidden_layers'])
        config = cls(input_dim=input_dim, seed=seed, preset=preset, **values)
        config.validate()
        return config

    def validate(self) -> None:
        if self.input_dim < 1:
            raise ValueError("input_dim must be >= 1")
        if self.output_dim != 1:
            raise ValueError("output_dim must be 1")
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be > 0")
        if not 0 <= self.momentum < 1:
            raise ValueError("momentum must be in [0, 1)")
        if self.epochs < 0:
            raise ValueError("epochs must be >= 0")
        if any(width < 1 for width in self.hidden_layers):
            raise ValueError("every hidden layer width must be >= 1")

    @property
    def layer_sizes(self) -> List[int]:
        return [self.input_dim, *self.hidden_layers, self.output_dim]

    def to_dict(self) -> Dict[str, object]:
        return {
            'preset': self.preset,
            'input_dim': self.input_dim,
            'hidden_layers': list(self.hidden_layers),
            'output_dim': self.output_dim,
            'learning_rate': self.learning_rate,
            'momentum': self.momentum,
            'epochs': self.epochs,
            'seed': self.seed,
        }


@dataclass
class Network:
    weights: List[np.ndarray]
    biases: List[np.ndarray]
    activations: List[str]
    weight_velocity: List[np.ndarray] = field(default_factory=list)
    bias_velocity: List[np.ndarray] = field(default_factory=list)

    def __post_init__(self):
        if not self.weight_velocity:
            self.weight_velocity = [np.zeros_like(w) for w in self.weights]
        if not self.bias_velocity:
            self.bias_velocity = [np.zeros_like(b) for b in self.biases]
        self.check_shapes()

    @property
    def input_dim(self) -> int:
        return self.weights[0].shape[1]

    def check_shapes(self) -> None:
        fan_in = self.weights[0].shape[1]
        for layer, (w, b) in enumerate(zip(self.weights, self.biases)):
            if w.shape[1] != fan_in or b.shape != (w.shape[0],):
                raise ValueError(f"layer {layer} shape {w.shape} / bias {b.shape} does not chain")
            fan_in = w.shape[0]
        if fan_in != 1:
            raise ValueError("network must end in a single output unit")

    def is_finite(self) -> bool:
        return all(np.all(np.isfinite(p)) for p in (*self.weights, *self.biases))

    def copy(self) -> 'Network':
        return copy.deepcopy(self)


@dataclass
class Gradients:
    weights: List[np.ndarray]
    biases: List[np.ndarray]


@dataclass(frozen=True)
class LabeledSet:
    """Normalized features with normalized targets and the original labels in seconds"""
    features: np.ndarray
    targets: np.ndarray
    labels_sec: np.ndarray

    @classmethod
    def from_rows(cls, dataset, rows: Sequence[int]) -> 'LabeledSet':
        rows = list(rows)
        return cls(dataset.features[rows], dataset.targets[rows], dataset.labels_sec[rows])

    def __len__(self) -> int:
        return len(self.targets)


@dataclass
class TrainingReport:
    config: NetworkConfig
    loss_trace: List[float]
    best_epoch: int
    best_validation_accuracy: float
    best_validation_mse: float
    final_validation_accuracy: float
    predictions: Dict[str, List[float]] = field(default_factory=dict)
    wall_time_sec: float = 0.0


def init_network(config: NetworkConfig) -> Network:
    """Glorot-uniform weights from the config seed, zero biases and velocities"""
    config.validate()
    rng = np.random.default_rng(config.seed)
    sizes = config.layer_sizes
    weights, biases, activations = [], [], []
    for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
        limit = np.sqrt(6.0 / (fan_in + fan_out))
        weights.append(rng.uniform(-limit, limit, size=(fan_out, fan_in)))
        biases.append(np.zeros(fan_out))
        activations.append(HIDDEN_ACTIVATION)
    activations[-1] = OUTPUT_ACTIVATION
    return Network(weights=weights, biases=biases, activations=activations)


def sigmoid(z: np.ndarray) -> np.ndarray:
    # tanh form stays finite for large |z|; the clip keeps outputs strictly inside (0, 1)
    return np.clip(0.5 * (1.0 + np.tanh(0.5 * z)), SIGMOID_EPS, 1.0 - SIGMOID_EPS)


_ACTIVATIONS: Dict[str, Callable[[np.ndarray], np.ndarray]] = {
    'tanh': np.tanh,
    'sigmoid': sigmoid,
}


def _activation_grad(name: str, a: np.ndarray) -> np.ndarray:
    """Derivative expressed through the activation output"""
    if name == 'tanh':
        return 1.0 - a ** 2
    if name == 'sigmoid':
        return a * (1.0 - a)
    raise ValueError(f"unknown activation '{name}'")


def forward(net: Network, x: np.ndarray) -> Tuple[np.ndarray, List[np.ndarray]]:
    """Predictions in (0, 1) plus the per-layer activation cache.

    A 1-D input is a single sample and yields a 1-element prediction array.
    """
    x = np.asarray(x, dtype=np.float64)
    batch = np.atleast_2d(x)
    if batch.shape[1] != net.input_dim:
        raise ValueError(f"expected {net.input_dim} features, got {batch.shape[1]}")
    if not np.all(np.isfinite(batch)):
        raise ValueError("non-finite value in network input")

    cache = [batch]
    a = batch
    for w, b, name in zip(net.weights, net.biases, net.activations):
        a = _ACTIVATIONS[name](a @ w.T + b)
        cache.append(a)
    return a[:, 0], cache


def mse_loss(predictions: np.ndarray, targets: np.ndarray) -> float:
    predictions = np.asarray(predictions, dtype=np.float64).ravel()
    targets = np.asarray(targets, dtype=np.float64).ravel()
    if predictions.shape != targets.shape:
        raise ValueError(f"length mismatch: {predictions.size} predictions vs {targets.size} targets")
    if predictions.size == 0:
        raise ValueError("mse of an empty batch is undefined")
    return float(np.mean((predictions - targets) ** 2))


def backward(net: Network, cache: List[np.ndarray], targets: np.ndarray) -> Gradients:
    """Analytic gradients of mse_loss over the cached batch"""
    targets = np.asarray(targets, dtype=np.float64).reshape(-1, 1)
    output = cache[-1]
    n = output.shape[0]

    delta = 2.0 * (output - targets) / n
    grad_w: List[np.ndarray] = [None] * len(net.weights)
    grad_b: List[np.ndarray] = [None] * len(net.weights)
    for layer in reversed(range(len(net.weights))):
        delta = delta * _activation_grad(net.activations[layer], cache[layer + 1])
        grad_w[layer] = delta.T @ cache[layer]
        grad_b[layer] = delta.sum(axis=0)
        delta = delta @ net.weights[layer]
    return Gradients(weights=grad_w, biases=grad_b)


def momentum_step(net: Network, gradients: Gradients, learning_rate: float, momentum: float) -> Network:
    """v <- momentum * v - learning_rate * g; theta <- theta + v (in place)"""
    for layer in range(len(net.weights)):
        net.weight_velocity[layer] = momentum * net.weight_velocity[layer] - learning_rate * gradients.weights[layer]
        net.bias_velocity[layer] = momentum * net.bias_velocity[layer] - learning_rate * gradients.biases[layer]
        net.weights[layer] = net.weights[layer] + net.weight_velocity[layer]
        net.biases[layer] = net.biases[layer] + net.bias_velocity[layer]
    return net


def _validation_scores(net: Network, validation_set: LabeledSet,
                       target_max: float) -> Tuple[float, float]:
    predictions, _ = forward(net, validation_set.features)
    accuracy = accuracy_pdt(predictions * target_max, validation_set.labels_sec)
    return accuracy, mse_loss(predictions, validation_set.targets)


def train(net: Network, train_set: LabeledSet, validation_set: LabeledSet, config: NetworkConfig,
          metrics_hook: Optional[Callable[[int, float, float], None]] = None,
          progress: bool = False, log_every: int = 500,
          target_max: float = TARGET_MAX_SEC) -> Tuple[Network, TrainingReport]:
    """Full-batch training; returns the snapshot with the best validation accuracy.

    Snapshot ranking: highest accuracy_PDT, then lowest validation MSE, then
    the earliest epoch. Epoch 0 (the initial network) is a candidate.
    """
    if len(train_set) == 0 or len(validation_set) == 0:
        raise ValueError("training and validation sets must be nonempty")

    started = time.perf_counter()
    net = net.copy()
    best_accuracy, best_mse = _validation_scores(net, validation_set, target_max)
    best_net, best_epoch = net.copy(), 0
    final_accuracy = best_accuracy
    loss_trace: List[float] = []

    epochs = tqdm(range(1, config.epochs + 1), desc=f"Training {config.preset}",
                  unit='epoch', disable=not progress)
    for epoch in epochs:
        predictions, cache = forward(net, train_set.features)
        loss = mse_loss(predictions, train_set.targets)
        if not np.isfinite(loss):
            raise DivergenceError(epoch, loss)
        momentum_step(net, backward(net, cache, train_set.targets), config.learning_rate, config.momentum)
        if not net.is_finite():
            raise DivergenceError(epoch, loss)
        loss_trace.append(loss)

        final_accuracy, val_mse = _validation_scores(net, validation_set, target_max)
        if final_accuracy > best_accuracy or (final_accuracy == best_accuracy and val_mse < best_mse):
            best_accuracy, best_mse, best_epoch = final_accuracy, val_mse, epoch
            best_net = net.copy()

        if metrics_hook is not None:
            metrics_hook(epoch, loss, final_accuracy)
        if log_every and epoch % log_every == 0:
            logger.info(f"epoch {epoch}: loss={loss:.6f} validation accuracy={final_accuracy:.4f}")

    wall_time = time.perf_counter() - started
    report = TrainingReport(
        config=config,
        loss_trace=loss_trace,
        best_epoch=best_epoch,
        best_validation_accuracy=best_accuracy,
        best_validation_mse=best_mse,
        final_validation_accuracy=final_accuracy,
        predictions={
            'train': (forward(best_net, train_set.features)[0] * target_max).tolist(),
            'validation': (forward(best_net, validation_set.features)[0] * target_max).tolist(),
        },
        wall_time_sec=wall_time,
    )
    logger.info(f"✓ Best validation accuracy {best_accuracy:.4f} at epoch {best_epoch} "
                f"({wall_time:.1f}s)")
    return best_net, report


def predict_batch(net: Network, normalizer: Normalizer, raw_features: np.ndarray) -> np.ndarray:
    """Disintegration times (s) for a matrix of raw encoded rows"""
    raw_features = np.atleast_2d(np.asarray(raw_features, dtype=np.float64))
    predictions, _ = forward(net, normalize(normalizer, raw_features))
    return np.clip(denormalize_target(normalizer, predictions), 0.0, normalizer.target_max)


def predict(net: Network, normalizer: Normalizer, raw_vector: np.ndarray) -> float:
    raw_vector = np.asarray(raw_vector, dtype=np.float64)
    if raw_vector.ndim != 1:
        raise ValueError("predict takes a single encoded record; use predict_batch for matrices")
    return float(predict_batch(net, normalizer, raw_vector)[0])
