"""Sigmoid extreme learning machine and an early-stopping online perceptron.

Both use +/-1 targets internally and predict class 1 when the decision
value is >= 0.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np
from scipy import linalg

from .evaluation import score

log = logging.getLogger(__name__)


def sigmoid(z):
    return 0.5 * (1.0 + np.tanh(0.5 * z))


@dataclass(frozen=True)
class ElmModel:
    input_weights: np.ndarray  # (hidden, d)
    input_biases: np.ndarray  # (hidden,)
    output_weights: np.ndarray  # (hidden,)
    hidden: int
    seed: int
    one_class: bool = False  # trained on a single class: decision is the constant ``offset``
    offset: float = 0.0

    @property
    def d(self):
        return self.input_weights.shape[1]


def _check_xy(x, y):
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2 or x.shape[0] == 0 or x.shape[1] == 0:
        raise ValueError(f"need a nonempty 2-D input, got shape {x.shape}")
    if y is None:
        return x, None
    y = np.asarray(y).reshape(-1)
    if len(y) != len(x):
        raise ValueError("x and y have different lengths")
    if not np.isin(y, (0, 1)).all():
        raise ValueError("labels must be 0 or 1")
    return x, y.astype(np.int64)


def hidden_activations(model, x):
    return sigmoid(x @ model.input_weights.T + model.input_biases)


def least_squares(H, t):
    """Minimum-norm least-squares solution of H beta = t.

    Falls back to a trace-scaled ridge solve when H is rank deficient.
    """
    beta, _, rank, _ = linalg.lstsq(H, t, lapack_driver="gelsd")
    if rank < min(H.shape):
        gram = H.T @ H
        lam = 1e-8 * np.trace(gram) / gram.shape[0]
        beta = linalg.solve(gram + lam * np.eye(gram.shape[0]), H.T @ t, assume_a="pos")
    return beta


def elm_train(x, y, hidden=80, seed=0):
    x, y = _check_xy(x, y)
    if hidden <= 0:
        raise ValueError("hidden must be positive")
    rng = np.random.default_rng(seed)
    W = rng.uniform(-1.0, 1.0, size=(hidden, x.shape[1]))
    b = rng.uniform(-1.0, 1.0, size=hidden)
    model = ElmModel(W, b, np.zeros(hidden), hidden, seed)
    t = 2.0 * y - 1.0
    H = hidden_activations(model, x)
    if len(np.unique(y)) < 2:
        log.debug("ELM trained on a single class; returning a constant classifier")
        return ElmModel(W, b, np.zeros(hidden), hidden, seed, True, float(t[0]))
    beta = least_squares(H, t)
    return ElmModel(W, b, beta, hidden, seed)


def elm_decision(model, x):
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != model.d:
        raise ValueError(f"expected {model.d} columns, got shape {x.shape}")
    return hidden_activations(model, x) @ model.output_weights + model.offset


def elm_predict(model, x):
    return (elm_decision(model, x) >= 0).astype(np.int64)


@dataclass(frozen=True)
class TrainConfig:
    max_epochs: int = 200
    learning_rate: float = 0.01
    patience: int = 10
    seed: int = 0

    def __post_init__(self):
        if self.patience < 1:
            raise ValueError("patience must be >= 1")
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")
        if self.max_epochs < 0:
            raise ValueError("max_epochs must be nonnegative")


@dataclass(frozen=True)
class PerceptronModel:
    weights: np.ndarray
    bias: float
    epochs_run: int = 0
    stopped_early: bool = False
    best_epoch: int = 0
    best_val_score: float = float("nan")

    @property
    def d(self):
        return self.weights.shape[0]

    @classmethod
    def zeros(cls, d):
        return cls(np.zeros(d), 0.0)


def perceptron_decision(model, x):
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != model.d:
        raise ValueError(f"expected {model.d} columns, got shape {x.shape}")
    return x @ model.weights + model.bias


def perceptron_predict(model, x):
    return (perceptron_decision(model, x) >= 0).astype(np.int64)


def _val_score(w, b, x_val, y_val):
    inf, acc = score(y_val, (x_val @ w + b) >= 0)
    # a one-class validation set has no informedness; fall back to accuracy
    return acc if math.isnan(inf) else inf


def _fit(w, b, x, y, x_val, y_val, cfg):
    t = 2.0 * y - 1.0
    rng = np.random.default_rng(cfg.seed)
    lr = cfg.learning_rate
    # the starting weights only count when no epoch is run
    start = _val_score(w, b, x_val, y_val) if cfg.max_epochs == 0 else -np.inf
    best = (start, w.copy(), b, 0)
    epoch = 0
    stopped = False
    for epoch in range(1, cfg.max_epochs + 1):
        mistakes = 0
        for i in rng.permutation(len(x)):
            if t[i] * (x[i] @ w + b) <= 0:
                w += lr * t[i] * x[i]
                b += lr * t[i]
                mistakes += 1
        s = _val_score(w, b, x_val, y_val)
        if s > best[0]:
            best = (s, w.copy(), b, epoch)
        elif epoch - best[3] >= cfg.patience:
            stopped = True
            break
        if mistakes == 0:
            break
    return PerceptronModel(best[1], float(best[2]), epoch, stopped, best[3], float(best[0]))


def _check_sets(x_train, y_train, x_val, y_val):
    x_val, y_val = _check_xy(x_val, y_val)
    x_train, y_train = _check_xy(x_train, y_train)
    if x_train.shape[1] != x_val.shape[1]:
        raise ValueError("train and validation sets have different widths")
    return x_train, y_train, x_val, y_val


def perceptron_train(x_train, y_train, x_val, y_val, cfg=TrainConfig()):
    """Online perceptron with early stopping on validation informedness.

    After each shuffled pass the validation set is scored; training stops at
    ``max_epochs``, after ``patience`` epochs without improvement, or when a
    pass makes no mistakes. The weights of the best validation epoch are
    returned.
    """
    x_train, y_train, x_val, y_val = _check_sets(x_train, y_train, x_val, y_val)
    return _fit(np.zeros(x_train.shape[1]), 0.0, x_train, y_train, x_val, y_val, cfg)


def perceptron_retrain(model, x_train, y_train, x_val, y_val, cfg=TrainConfig()):
    """Same procedure as perceptron_train, starting from ``model``'s weights.

    An empty training set (zero-trial) returns ``model`` itself.
    """
    if np.asarray(x_train).size == 0:
        return model
    x_train, y_train, x_val, y_val = _check_sets(x_train, y_train, x_val, y_val)
    if x_train.shape[1] != model.d:
        raise ValueError(f"model has {model.d} inputs, data has {x_train.shape[1]}")
    return _fit(model.weights.astype(np.float64).copy(), model.bias, x_train, y_train, x_val, y_val, cfg)
