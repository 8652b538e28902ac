"""Logistic regression with batch initialisation and windowed streaming updates.

Both training paths share :func:`loss_and_gradient` and :func:`gradient_step`,
so one streaming update on a window is exactly one full-batch epoch on it.
"""
from __future__ import annotations

import math
import struct
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .featurize import N_FEATURES

MAGIC = b"EVLR"
SCHEMA_VERSION = 1
_HEADER = struct.Struct("<4sH")
_BODY = struct.Struct(f"<{N_FEATURES + 3}dQ")

DEFAULT_STEP_SIZE = 1.0
DEFAULT_L2 = 1e-4
DEFAULT_EPOCHS = 200

# exp(z) underflows to 0 below z ~ -745; keep probabilities strictly positive.
_TINY = math.ulp(0.0)


class ModelFormatError(ValueError):
    pass


class TrainingDiverged(FloatingPointError):
    pass


@dataclass(frozen=True, eq=False)
class ModelState:
    weights: np.ndarray
    bias: float = 0.0
    step_size: float = DEFAULT_STEP_SIZE
    l2: float = DEFAULT_L2
    updates: int = 0

    def __post_init__(self) -> None:
        w = np.array(self.weights, dtype=np.float64)
        if w.shape != (N_FEATURES,):
            raise ValueError(f"weights must have shape ({N_FEATURES},), got {w.shape}")
        w.setflags(write=False)
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "bias", float(self.bias))
        if not (self.step_size > 0 and math.isfinite(self.step_size)):
            raise ValueError("step size must be positive and finite")
        if not (self.l2 >= 0 and math.isfinite(self.l2)):
            raise ValueError("L2 strength must be non-negative and finite")
        if not (np.isfinite(w).all() and math.isfinite(self.bias)):
            raise ValueError("model parameters must be finite")
        if self.updates < 0:
            raise ValueError("update counter must be non-negative")

    @classmethod
    def zeros(cls, step_size: float = DEFAULT_STEP_SIZE, l2: float = DEFAULT_L2) -> "ModelState":
        return cls(np.zeros(N_FEATURES), 0.0, step_size, l2, 0)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, ModelState):
            return NotImplemented
        return save(self) == save(other)

    def __hash__(self) -> int:
        return hash(save(self))


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = DEFAULT_EPOCHS
    step_size: float = DEFAULT_STEP_SIZE
    l2: float = DEFAULT_L2
    seed: int = 0
    # None means full-batch gradient descent; otherwise shuffled mini-batches drawn with `seed`.
    batch_size: Optional[int] = None

    def __post_init__(self) -> None:
        if self.epochs < 0:
            raise ValueError("epochs must be non-negative")
        if not self.step_size > 0:
            raise ValueError("step size must be positive")
        if not self.l2 >= 0:
            raise ValueError("L2 strength must be non-negative")
        if self.batch_size is not None and self.batch_size < 1:
            raise ValueError("batch size must be positive")


def sigmoid(z: float) -> float:
    if z >= 0:
        return 1.0 / (1.0 + math.exp(-z))
    e = math.exp(z)
    return max(e / (1.0 + e), _TINY)


def sigmoid_array(z: np.ndarray) -> np.ndarray:
    out = np.empty_like(z, dtype=np.float64)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    e = np.exp(z[~pos])
    out[~pos] = np.maximum(e / (1.0 + e), _TINY)
    return out


def predict_proba(state: ModelState, x: np.ndarray) -> float:
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (N_FEATURES,):
        raise ValueError(f"expected a feature vector of length {N_FEATURES}, got shape {x.shape}")
    return sigmoid(float(state.weights @ x) + state.bias)


def predict_many(state: ModelState, X: np.ndarray) -> np.ndarray:
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[1] != N_FEATURES:
        raise ValueError(f"expected an (n, {N_FEATURES}) feature matrix, got shape {X.shape}")
    return sigmoid_array(X @ state.weights + state.bias)


def _check_batch(X: np.ndarray, y: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if X.ndim != 2 or X.shape[1] != N_FEATURES:
        raise ValueError(f"expected an (n, {N_FEATURES}) feature matrix, got shape {X.shape}")
    if y.shape != (X.shape[0],):
        raise ValueError("labels must be a vector matching the number of rows")
    if X.shape[0] == 0:
        raise ValueError("empty batch")
    return X, y


def loss_and_gradient(state: ModelState, X: np.ndarray, y: np.ndarray) -> tuple[float, np.ndarray, float]:
    """Mean negative log-likelihood plus (l2/2)*||w||^2, and its gradient.

    The bias is not regularised.
    """
    X, y = _check_batch(X, y)
    w = state.weights
    z = X @ w + state.bias
    p = sigmoid_array(z)
    # -y ln p - (1-y) ln(1-p) == softplus(z) - y z
    nll = float(np.mean(np.logaddexp(0.0, z) - y * z))
    loss = nll + 0.5 * state.l2 * float(w @ w)
    resid = p - y
    grad_w = X.T @ resid / X.shape[0] + state.l2 * w
    grad_b = float(np.mean(resid))
    return loss, grad_w, grad_b


def gradient_step(state: ModelState, X: np.ndarray, y: np.ndarray, step_size: float, l2: float) -> tuple[ModelState, float]:
    """One descent step with explicit hyperparameters; returns (new state, pre-step loss)."""
    probe = ModelState(state.weights, state.bias, step_size, l2, state.updates)
    loss, gw, gb = loss_and_gradient(probe, X, y)
    new = ModelState(state.weights - step_size * gw, state.bias - step_size * gb,
                     state.step_size, state.l2, state.updates)
    return new, loss


def fit_batch(
    X: np.ndarray,
    y: np.ndarray,
    cfg: TrainConfig = TrainConfig(),
    init: ModelState | None = None,
    loss_history: list[float] | None = None,
) -> ModelState:
    """Gradient descent from ``init`` (zeros by default) for ``cfg.epochs`` epochs.

    The returned state carries ``cfg``'s step size and L2 strength so later
    streaming updates use the same hyperparameters.
    """
    X, y = _check_batch(X, y)
    if init is None:
        state = ModelState.zeros(cfg.step_size, cfg.l2)
    else:
        state = ModelState(init.weights, init.bias, cfg.step_size, cfg.l2, init.updates)
    rng = np.random.default_rng(cfg.seed) if cfg.batch_size is not None else None

    for epoch in range(cfg.epochs):
        if rng is None:
            batches = [slice(None)]
        else:
            order = rng.permutation(X.shape[0])
            batches = [order[i:i + cfg.batch_size] for i in range(0, X.shape[0], cfg.batch_size)]
        for idx in batches:
            try:
                with np.errstate(over="ignore", invalid="ignore"):
                    state, loss = gradient_step(state, X[idx], y[idx], cfg.step_size, cfg.l2)
            except ValueError as exc:  # parameters left the finite range
                raise TrainingDiverged(f"{exc} at epoch {epoch}; try a smaller step size") from exc
            if not math.isfinite(loss):
                raise TrainingDiverged(f"non-finite loss {loss} at epoch {epoch}; try a smaller step size")
        if loss_history is not None:
            loss_history.append(loss)
    return state


def update_stream(state: ModelState, X: np.ndarray, y: np.ndarray) -> ModelState:
    """One SGD step on the window's mean gradient. An empty window is a no-op."""
    X = np.asarray(X, dtype=np.float64)
    if X.size == 0:
        return state
    new, _ = gradient_step(state, X, y, state.step_size, state.l2)
    return ModelState(new.weights, new.bias, state.step_size, state.l2, state.updates + 1)


def save(state: ModelState) -> bytes:
    return _HEADER.pack(MAGIC, SCHEMA_VERSION) + _BODY.pack(
        *state.weights.tolist(), state.bias, state.step_size, state.l2, state.updates
    )


def load(data: bytes) -> ModelState:
    if len(data) < _HEADER.size:
        raise ModelFormatError(f"truncated model payload ({len(data)} bytes)")
    magic, version = _HEADER.unpack_from(data)
    if magic != MAGIC:
        raise ModelFormatError(f"not a model file (magic {magic!r})")
    if version != SCHEMA_VERSION:
        raise ModelFormatError(f"model schema version {version} is not supported (expected {SCHEMA_VERSION})")
    if len(data) != _HEADER.size + _BODY.size:
        raise ModelFormatError(
            f"model payload has {len(data)} bytes, expected {_HEADER.size + _BODY.size} for schema v{version}"
        )
    *w, bias, step, l2, updates = _BODY.unpack_from(data, _HEADER.size)
    return ModelState(np.array(w), bias, step, l2, updates)
