"""Dense feed-forward classifiers with analytic input gradients.

The attack targets of this package are small fully-connected ReLU
networks evaluated in float64. The module exposes logits, softmax
cross-entropy loss, exact reverse-mode input gradients for white-box
attacks, seeded training of small test fixtures, and a JSON weights
format. Models are immutable after construction and safe to share
across worker threads.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .rng import make_rng

LOG_CLAMP = 1e-12
ACTIVATIONS = ("relu", "identity")


class TrainingDiverged(RuntimeError):
    """Fixture training hit a non-finite loss."""


@dataclass(frozen=True)
class FeatureVector:
    """A flat real-valued sample with uniform per-feature bounds."""

    values: np.ndarray
    lb: float = 0.0
    ub: float = 1.0

    def __post_init__(self):
        v = np.array(self.values, dtype=float)
        if v.ndim != 1:
            raise ValueError(f"feature vector must be 1-D, got shape {v.shape}")
        if not np.isfinite(v).all():
            raise ValueError("feature values must be finite")
        if self.lb > self.ub:
            raise ValueError(f"lower bound {self.lb} exceeds upper bound {self.ub}")
        if (v < self.lb).any() or (v > self.ub).any():
            bad = int(np.argmax((v < self.lb) | (v > self.ub)))
            raise ValueError(
                f"feature {bad} value {v[bad]} outside bounds [{self.lb}, {self.ub}]"
            )
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @property
    def dim(self) -> int:
        return int(self.values.shape[0])

    def with_values(self, values) -> "FeatureVector":
        """Same bounds, new coordinates."""
        return FeatureVector(values, self.lb, self.ub)


@dataclass(frozen=True)
class Layer:
    """One dense layer: ``act(W @ a + b)`` with W of shape (out, in)."""

    weights: np.ndarray
    bias: np.ndarray
    activation: str = "relu"

    def __post_init__(self):
        w = np.array(self.weights, dtype=float)
        b = np.array(self.bias, dtype=float)
        if w.ndim != 2 or b.ndim != 1 or b.shape[0] != w.shape[0]:
            raise ValueError(f"inconsistent layer shapes: weights {w.shape}, bias {b.shape}")
        if self.activation not in ACTIVATIONS:
            raise ValueError(f"unknown activation {self.activation!r}")
        if not (np.isfinite(w).all() and np.isfinite(b).all()):
            raise ValueError("layer parameters must be finite")
        w.setflags(write=False)
        b.setflags(write=False)
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "bias", b)

    @property
    def fan_in(self) -> int:
        return int(self.weights.shape[1])

    @property
    def fan_out(self) -> int:
        return int(self.weights.shape[0])


@dataclass(frozen=True)
class ModelHandle:
    """Immutable stack of dense layers; outputs are pre-softmax logits.

    ``gradient_access`` gates white-box use: handles given to black-box
    attacks have it disabled, so any gradient call is a hard error rather
    than a silent capability leak.
    """

    layers: tuple[Layer, ...]
    gradient_access: bool = True

    def __post_init__(self):
        layers = tuple(self.layers)
        if not layers:
            raise ValueError("model needs at least one layer")
        for k in range(1, len(layers)):
            if layers[k].fan_in != layers[k - 1].fan_out:
                raise ValueError(
                    f"layer {k} expects {layers[k].fan_in} inputs but layer "
                    f"{k - 1} produces {layers[k - 1].fan_out}"
                )
        object.__setattr__(self, "layers", layers)

    @property
    def input_dim(self) -> int:
        return self.layers[0].fan_in

    @property
    def num_classes(self) -> int:
        return self.layers[-1].fan_out

    def black_box(self) -> "ModelHandle":
        """A view of this model that refuses gradient queries."""
        return replace(self, gradient_access=False)


def _as_values(model: ModelHandle, x) -> np.ndarray:
    v = x.values if isinstance(x, FeatureVector) else np.asarray(x, dtype=float)
    if v.shape != (model.input_dim,):
        raise ValueError(f"input has shape {v.shape}, model expects ({model.input_dim},)")
    return v


def _check_label(model: ModelHandle, y) -> int:
    yi = int(y)
    if yi != y or not (0 <= yi < model.num_classes):
        raise ValueError(f"label {y!r} out of range [0, {model.num_classes})")
    return yi


def batch_logits(model: ModelHandle, X) -> np.ndarray:
    """Logits for a batch of row vectors, shape (n, num_classes)."""
    A = np.asarray(X, dtype=float)
    if A.ndim != 2 or A.shape[1] != model.input_dim:
        raise ValueError(f"batch has shape {A.shape}, model expects (n, {model.input_dim})")
    for layer in model.layers:
        A = A @ layer.weights.T + layer.bias
        if layer.activation == "relu":
            A = np.maximum(A, 0.0)
    if not np.isfinite(A).all():
        raise FloatingPointError("non-finite activation in forward pass")
    return A


def forward_logits(model: ModelHandle, x) -> np.ndarray:
    """Pre-softmax scores for one sample; argmax (lowest index on ties)
    is the predicted label."""
    return batch_logits(model, _as_values(model, x)[None, :])[0]


def predict(model: ModelHandle, x) -> int:
    return int(np.argmax(forward_logits(model, x)))


def predict_batch(model: ModelHandle, X) -> np.ndarray:
    return np.argmax(batch_logits(model, X), axis=1)


def softmax(logits) -> np.ndarray:
    """Max-subtracted softmax along the last axis."""
    z = np.asarray(logits, dtype=float)
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def batch_probabilities(model: ModelHandle, X) -> np.ndarray:
    return softmax(batch_logits(model, X))


def cross_entropy_loss(model: ModelHandle, x, y) -> float:
    """Negative log softmax probability of label ``y``; the log argument
    is clamped at 1e-12 so the loss stays finite."""
    yi = _check_label(model, y)
    p = softmax(forward_logits(model, x))
    return float(-np.log(max(p[yi], LOG_CLAMP)))


def batch_cross_entropy(model: ModelHandle, X, y) -> np.ndarray:
    """Cross-entropy of every row in ``X`` against the single label ``y``."""
    yi = _check_label(model, y)
    P = batch_probabilities(model, X)
    return -np.log(np.maximum(P[:, yi], LOG_CLAMP))


def _forward_cache(model: ModelHandle, v: np.ndarray):
    pres = []
    a = v
    for layer in model.layers:
        z = layer.weights @ a + layer.bias
        pres.append(z)
        a = np.maximum(z, 0.0) if layer.activation == "relu" else z
    return pres, a


def _backward_to_input(model: ModelHandle, pres, g: np.ndarray) -> np.ndarray:
    for layer, z in zip(reversed(model.layers), reversed(pres)):
        if layer.activation == "relu":
            g = g * (z > 0)  # ReLU subgradient at 0 is taken as 0
        g = layer.weights.T @ g
    return g


def _require_gradients(model: ModelHandle):
    if not model.gradient_access:
        raise PermissionError("gradient access is disabled on this model handle")


def input_gradient(model: ModelHandle, x, y) -> np.ndarray:
    """Exact gradient of ``cross_entropy_loss(model, x, y)`` w.r.t. ``x``."""
    _require_gradients(model)
    yi = _check_label(model, y)
    v = _as_values(model, x)
    pres, logits = _forward_cache(model, v)
    cot = softmax(logits)
    cot[yi] -= 1.0
    g = _backward_to_input(model, pres, cot)
    if not np.isfinite(g).all():
        raise FloatingPointError("non-finite input gradient")
    return g


def logits_vjp(model: ModelHandle, x, cotangent) -> np.ndarray:
    """Gradient of ``cotangent @ logits`` w.r.t. the input (used by
    margin-based objectives)."""
    _require_gradients(model)
    v = _as_values(model, x)
    pres, _ = _forward_cache(model, v)
    cot = np.asarray(cotangent, dtype=float)
    if cot.shape != (model.num_classes,):
        raise ValueError(f"cotangent has shape {cot.shape}, expected ({model.num_classes},)")
    return _backward_to_input(model, pres, cot.copy())


@dataclass(frozen=True)
class FixtureSpec:
    """Architecture of a training fixture: dense ReLU net
    input_dim -> hidden... -> num_classes."""

    input_dim: int
    num_classes: int
    hidden: tuple[int, ...] = (32, 32)

    def __post_init__(self):
        if self.input_dim < 1 or self.num_classes < 2:
            raise ValueError("fixture needs input_dim >= 1 and num_classes >= 2")
        object.__setattr__(self, "hidden", tuple(int(h) for h in self.hidden))


def init_model(spec: FixtureSpec, seed: int) -> ModelHandle:
    """Seeded initialization: weights uniform in [-1/sqrt(fan_in),
    +1/sqrt(fan_in)], biases zero."""
    rng = make_rng("fixture-init", seed, spec.input_dim, spec.num_classes, *spec.hidden)
    dims = (spec.input_dim, *spec.hidden, spec.num_classes)
    layers = []
    for k, (fan_in, fan_out) in enumerate(zip(dims, dims[1:])):
        bound = 1.0 / np.sqrt(fan_in)
        w = rng.uniform(-bound, bound, size=(fan_out, fan_in))
        act = "relu" if k < len(dims) - 2 else "identity"
        layers.append(Layer(w, np.zeros(fan_out), act))
    return ModelHandle(tuple(layers))


def train_fixture(spec: FixtureSpec, dataset, epochs: int = 50, lr: float = 0.1,
                  seed: int = 0, batch_size: int = 32,
                  start_from: ModelHandle | None = None) -> ModelHandle:
    """Minibatch SGD on softmax cross-entropy; deterministic given seed.

    ``epochs=0`` returns the seeded initialization unchanged. Pass
    ``start_from`` to continue training an existing model (e.g. for
    augmentation rounds) instead of starting at the seeded init. Raises
    :class:`TrainingDiverged` as soon as a minibatch loss is non-finite.
    """
    if dataset.n == 0:
        raise ValueError("dataset is empty")
    if dataset.d != spec.input_dim:
        raise ValueError(f"dataset dim {dataset.d} != fixture input_dim {spec.input_dim}")
    if (dataset.y < 0).any() or (dataset.y >= spec.num_classes).any():
        raise ValueError(f"dataset labels outside [0, {spec.num_classes})")

    if start_from is not None:
        if start_from.input_dim != spec.input_dim or start_from.num_classes != spec.num_classes:
            raise ValueError("start_from model does not match the fixture spec")
        model = start_from
    else:
        model = init_model(spec, seed)
    Ws = [l.weights.copy() for l in model.layers]
    bs = [l.bias.copy() for l in model.layers]
    acts = [l.activation for l in model.layers]
    rng = make_rng("fixture-train", seed, epochs, lr)
    X, y = dataset.X, dataset.y
    onehot = np.eye(spec.num_classes)[y]

    # Overflow of exploding iterates is surfaced by the loss check below,
    # not by numpy warnings.
    with np.errstate(over="ignore", invalid="ignore"):
        for epoch in range(epochs):
            order = rng.permutation(dataset.n)
            for start in range(0, dataset.n, batch_size):
                idx = order[start:start + batch_size]
                A = [X[idx]]
                pres = []
                for W, b, act in zip(Ws, bs, acts):
                    Z = A[-1] @ W.T + b
                    pres.append(Z)
                    A.append(np.maximum(Z, 0.0) if act == "relu" else Z)
                P = softmax(A[-1])
                loss = float(-np.log(np.maximum(P[np.arange(len(idx)), y[idx]], LOG_CLAMP)).mean())
                if not np.isfinite(loss):
                    raise TrainingDiverged(
                        f"non-finite loss at epoch {epoch}, batch offset {start} (lr={lr})"
                    )
                G = (P - onehot[idx]) / len(idx)
                for k in reversed(range(len(Ws))):
                    if acts[k] == "relu":
                        G = G * (pres[k] > 0)
                    dW = G.T @ A[k]
                    db = G.sum(axis=0)
                    G = G @ Ws[k]
                    Ws[k] -= lr * dW
                    bs[k] -= lr * db

    try:
        return ModelHandle(tuple(Layer(W, b, a) for W, b, a in zip(Ws, bs, acts)))
    except ValueError as exc:
        # only reachable when the very last update exploded
        raise TrainingDiverged(f"non-finite parameters after training: {exc}") from exc


def evaluate_accuracy(model: ModelHandle, dataset) -> float:
    return float((predict_batch(model, dataset.X) == dataset.y).mean())


def save_weights(model: ModelHandle, path) -> Path:
    """Write the JSON weights document (row-major weights, full float
    round-trip precision)."""
    doc = {
        "input_dim": model.input_dim,
        "layers": [
            {
                "rows": layer.fan_out,
                "cols": layer.fan_in,
                "activation": layer.activation,
                "weights": layer.weights.reshape(-1).tolist(),
                "bias": layer.bias.tolist(),
            }
            for layer in model.layers
        ],
    }
    path = Path(path)
    path.write_text(json.dumps(doc))
    return path


def load_weights(path) -> ModelHandle:
    """Parse and validate a JSON weights document; the dimension chain is
    checked before any model object is constructed."""
    path = Path(path)
    try:
        doc = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ValueError(f"weights file {path} is not valid JSON: {exc}") from exc
    if not isinstance(doc, dict) or "input_dim" not in doc or "layers" not in doc:
        raise ValueError(f"weights file {path} lacks input_dim/layers keys")
    specs = doc["layers"]
    if not isinstance(specs, list) or not specs:
        raise ValueError(f"weights file {path} has no layers")

    prev_out = int(doc["input_dim"])
    layers = []
    for k, entry in enumerate(specs):
        for key in ("rows", "cols", "activation", "weights", "bias"):
            if key not in entry:
                raise ValueError(f"layer {k}: missing key {key!r}")
        rows, cols = int(entry["rows"]), int(entry["cols"])
        if cols != prev_out:
            raise ValueError(
                f"layer {k}: input width {cols} does not chain with previous width {prev_out}"
            )
        flat = entry["weights"]
        if len(flat) != rows * cols:
            raise ValueError(
                f"layer {k}: expected {rows * cols} weights, found {len(flat)} (truncated file?)"
            )
        if len(entry["bias"]) != rows:
            raise ValueError(f"layer {k}: expected {rows} bias entries, found {len(entry['bias'])}")
        layers.append(Layer(np.array(flat, dtype=float).reshape(rows, cols),
                            np.array(entry["bias"], dtype=float), str(entry["activation"])))
        prev_out = rows
    return ModelHandle(tuple(layers))
