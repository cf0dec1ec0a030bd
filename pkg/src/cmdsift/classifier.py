"""Shallow feed-forward binary classifier trained from first principles.

One optional ReLU hidden layer with dropout, sigmoid output, weighted
binary cross-entropy plus L2, hand-written gradients, mini-batch gradient
descent. No learning framework: the model is tiny and bit-reproducibility
under a fixed seed matters more than framework features.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence, Union

import numpy as np
from scipy import sparse

from cmdsift.vectorize import FeatureVector, to_csr

Matrix = Union[np.ndarray, sparse.spmatrix]


class DegenerateDataError(ValueError):
    """Training data does not contain both classes with positive weight."""


class TrainingError(RuntimeError):
    """Training diverged or produced non-finite values."""


@dataclass(frozen=True)
class ClassifierConfig:
    hidden_units: int = 64
    dropout_rate: float = 0.2
    learning_rate: float = 0.05
    epochs: int = 10
    batch_size: int = 256
    l2_penalty: float = 1e-6
    rng_seed: int = 13

    def __post_init__(self):
        if self.hidden_units < 0:
            raise ValueError("hidden_units must be >= 0")
        if not 0.0 <= self.dropout_rate < 1.0:
            raise ValueError("dropout_rate must be in [0,1)")
        if self.learning_rate <= 0 or self.epochs < 1 or self.batch_size < 1:
            raise ValueError("learning_rate, epochs, batch_size must be positive")
        if self.l2_penalty < 0:
            raise ValueError("l2_penalty must be >= 0")

    def to_dict(self) -> dict[str, str]:
        return {
            "hidden_units": str(self.hidden_units),
            "dropout_rate": repr(self.dropout_rate),
            "learning_rate": repr(self.learning_rate),
            "epochs": str(self.epochs),
            "batch_size": str(self.batch_size),
            "l2_penalty": repr(self.l2_penalty),
            "rng_seed": str(self.rng_seed),
        }

    @classmethod
    def from_dict(cls, d: dict[str, str]) -> "ClassifierConfig":
        return cls(
            hidden_units=int(d["hidden_units"]),
            dropout_rate=float(d["dropout_rate"]),
            learning_rate=float(d["learning_rate"]),
            epochs=int(d["epochs"]),
            batch_size=int(d["batch_size"]),
            l2_penalty=float(d["l2_penalty"]),
            rng_seed=int(d["rng_seed"]),
        )


@dataclass
class TrainedModel:
    config: ClassifierConfig
    input_dim: int
    layers: list[tuple[np.ndarray, np.ndarray]]  # (weight matrix, bias vector) per layer
    loss_trace: list[float] = field(default_factory=list)
    frozen_prefix: int = 0

    @property
    def layer_count(self) -> int:
        return len(self.layers)

    def copy(self) -> "TrainedModel":
        return TrainedModel(
            config=self.config,
            input_dim=self.input_dim,
            layers=[(w.copy(), b.copy()) for w, b in self.layers],
            loss_trace=list(self.loss_trace),
            frozen_prefix=self.frozen_prefix,
        )

    def flatten(self) -> tuple[tuple[tuple[int, ...], ...], np.ndarray]:
        shapes: list[tuple[int, ...]] = []
        chunks: list[np.ndarray] = []
        for w, b in self.layers:
            shapes.append(tuple(w.shape))
            chunks.append(w.ravel())
            shapes.append(tuple(b.shape))
            chunks.append(b.ravel())
        return tuple(shapes), np.concatenate(chunks)


def model_from_flat(
    shapes: Sequence[tuple[int, ...]], flat: np.ndarray, config: Optional[ClassifierConfig] = None
) -> TrainedModel:
    arrays: list[np.ndarray] = []
    pos = 0
    for shape in shapes:
        size = int(np.prod(shape))
        arrays.append(flat[pos : pos + size].reshape(shape).astype(np.float64))
        pos += size
    if pos != flat.size:
        raise ValueError(f"flat parameter array has {flat.size} values, shapes need {pos}")
    layers = [(arrays[i], arrays[i + 1]) for i in range(0, len(arrays), 2)]
    input_dim = layers[0][0].shape[0]
    if config is None:
        hidden = layers[0][0].shape[1] if len(layers) > 1 else 0
        config = ClassifierConfig(hidden_units=hidden)
    return TrainedModel(config=config, input_dim=input_dim, layers=layers)


def init_model(config: ClassifierConfig, input_dim: int) -> TrainedModel:
    """Xavier-uniform initialization, seeded."""
    rng = np.random.Generator(np.random.PCG64(config.rng_seed))
    dims = [input_dim]
    if config.hidden_units > 0:
        dims.append(config.hidden_units)
    dims.append(1)
    layers = []
    for fan_in, fan_out in zip(dims[:-1], dims[1:]):
        limit = np.sqrt(6.0 / (fan_in + fan_out))
        w = rng.uniform(-limit, limit, size=(fan_in, fan_out))
        b = np.zeros(fan_out)
        layers.append((w, b))
    return TrainedModel(config=config, input_dim=input_dim, layers=layers)


def _softplus(z: np.ndarray) -> np.ndarray:
    return np.log1p(np.exp(-np.abs(z))) + np.maximum(z, 0.0)


def _sigmoid(z: np.ndarray) -> np.ndarray:
    out = np.empty_like(z, dtype=np.float64)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def _forward(layers, X: Matrix, dropout_mask: Optional[np.ndarray] = None):
    """Returns (logits, hidden pre-activation, hidden post-activation)."""
    if len(layers) == 1:
        w, b = layers[0]
        z = np.asarray(X @ w).reshape(-1) + b[0]
        return z, None, None
    (w1, b1), (w2, b2) = layers
    z1 = np.asarray(X @ w1) + b1
    a1 = np.maximum(z1, 0.0)
    if dropout_mask is not None:
        a1 = a1 * dropout_mask
    z2 = (a1 @ w2).reshape(-1) + b2[0]
    return z2, z1, a1


def loss_and_grad(
    model: TrainedModel,
    X: Matrix,
    y: np.ndarray,
    w: np.ndarray,
    l2: float = 0.0,
    dropout_mask: Optional[np.ndarray] = None,
) -> tuple[float, list[tuple[np.ndarray, np.ndarray]]]:
    """Weighted BCE summed over samples plus l2 * ||params||^2, with exact
    analytic gradients. Duplicating a sample k times at weight u is identical
    to one sample at weight k*u."""
    y = np.asarray(y, dtype=np.float64).reshape(-1)
    w = np.asarray(w, dtype=np.float64).reshape(-1)
    z, z1, a1 = _forward(model.layers, X, dropout_mask)
    bce = _softplus(z) - y * z
    loss = float(np.dot(w, bce))
    delta = (w * (_sigmoid(z) - y)).reshape(-1, 1)
    grads: list[tuple[np.ndarray, np.ndarray]] = []
    if len(model.layers) == 1:
        w0, _ = model.layers[0]
        gw = np.asarray(X.T @ delta).reshape(w0.shape)
        gb = np.array([float(delta.sum())])
        grads.append((gw, gb))
    else:
        (w1, b1), (w2, b2) = model.layers
        gw2 = a1.T @ delta
        gb2 = np.array([float(delta.sum())])
        d1 = (delta @ w2.T) * (z1 > 0)
        if dropout_mask is not None:
            d1 = d1 * dropout_mask
        gw1 = np.asarray(X.T @ d1)
        gb1 = d1.sum(axis=0)
        grads.append((gw1, gb1))
        grads.append((gw2, gb2))
    if l2 > 0:
        for (wm, bm), (gw, gb) in zip(model.layers, grads):
            loss += l2 * (float(np.sum(wm * wm)) + float(np.sum(bm * bm)))
            gw += 2.0 * l2 * wm
            gb += 2.0 * l2 * bm
    return loss, grads


def _prepare(data) -> tuple[Matrix, np.ndarray, np.ndarray]:
    """Accept a list of (FeatureVector, label01, weight) or a prebuilt
    (matrix, labels, weights) triple."""
    if isinstance(data, tuple) and len(data) == 3:
        X, y, w = data
        return X, np.asarray(y, dtype=np.float64), np.asarray(w, dtype=np.float64)
    vectors = [fv for fv, _, _ in data]
    y = np.array([float(lbl) for _, lbl, _ in data])
    w = np.array([float(wt) for _, _, wt in data])
    if vectors and isinstance(vectors[0], FeatureVector):
        return to_csr(vectors), y, w
    return np.asarray(vectors, dtype=np.float64), y, w


def train(
    config: ClassifierConfig,
    data,
    init: Optional[TrainedModel] = None,
) -> TrainedModel:
    """Mini-batch gradient descent on weighted BCE + L2.

    Weights are normalized to mean 1 each epoch so the learning rate keeps
    its meaning as dataset mass changes across retrains. Same seed, config
    and data give bit-identical parameters.
    """
    X, y, w = _prepare(data)
    n = X.shape[0]
    active = w > 0
    if not (np.any((y > 0.5) & active) and np.any((y < 0.5) & active)):
        raise DegenerateDataError("training data must contain both classes with weight > 0")

    model = init.copy() if init is not None else init_model(config, X.shape[1])
    model.config = config
    if init is not None and X.shape[1] != model.input_dim:
        raise ValueError(f"data width {X.shape[1]} != model width {model.input_dim}")
    rng = np.random.Generator(np.random.PCG64(config.rng_seed))
    w_norm = w * (n / w.sum())

    trace: list[float] = []
    for epoch in range(config.epochs):
        order = rng.permutation(n)
        epoch_loss = 0.0
        for start in range(0, n, config.batch_size):
            idx = order[start : start + config.batch_size]
            xb = X[idx]
            mask = None
            if config.hidden_units > 0 and config.dropout_rate > 0:
                keep = 1.0 - config.dropout_rate
                mask = (rng.random((len(idx), config.hidden_units)) < keep) / keep
            loss, grads = loss_and_grad(
                model, xb, y[idx], w_norm[idx], config.l2_penalty, dropout_mask=mask
            )
            if not np.isfinite(loss):
                raise TrainingError(
                    f"non-finite loss at epoch {epoch}, batch offset {start}: {loss}"
                )
            scale = config.learning_rate / len(idx)
            for li, ((wm, bm), (gw, gb)) in enumerate(zip(model.layers, grads)):
                if li < model.frozen_prefix:
                    continue
                wm -= scale * gw
                bm -= scale * gb
            epoch_loss += loss
        trace.append(epoch_loss / n)
    model.loss_trace = trace
    return model


def score(model: TrainedModel, vector: FeatureVector) -> float:
    if vector.dimensions != model.input_dim:
        raise ValueError(f"vector width {vector.dimensions} != model width {model.input_dim}")
    return float(score_matrix(model, to_csr([vector]))[0])


def score_matrix(model: TrainedModel, X: Matrix) -> np.ndarray:
    """Deterministic forward pass (dropout disabled), one probability per row."""
    if X.shape[1] != model.input_dim:
        raise ValueError(f"matrix width {X.shape[1]} != model width {model.input_dim}")
    z, _, _ = _forward(model.layers, X)
    return _sigmoid(z)


def freeze_prefix(model: TrainedModel, layers: int) -> TrainedModel:
    """Mark the first `layers` layers non-trainable for subsequent train calls."""
    if layers < 0 or layers >= model.layer_count:
        raise ValueError(f"layers must be in [0, {model.layer_count}), got {layers}")
    out = model.copy()
    out.frozen_prefix = layers
    return out
