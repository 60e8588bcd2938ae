"""Small dense softmax classifier with exact input gradients.

The whole pipeline rests on two guarantees this module provides:

* ``predict`` returns exact softmax probabilities in double precision, and
* ``logprob_jacobian`` returns the analytic gradient of every class
  log-probability with respect to the input pixels.

Everything is plain numpy so the gradients can be checked against finite
differences to machine-level accuracy.  Models are immutable after training;
``predict`` and ``logprob_jacobian`` are pure and safe to call concurrently.
"""

from __future__ import annotations

import copy
import json
from dataclasses import dataclass, field

import numpy as np

from .errors import InputError, TrainingDivergedError

CHECKPOINT_FORMAT = "advswarm-checkpoint"
CHECKPOINT_VERSION = 1

_ACTIVATIONS = ("identity", "tanh")


@dataclass
class MlpClassifier:
    """Fully connected softmax classifier.

    ``weights[i]`` has shape (fan_in, fan_out); the activation of the last
    layer should be "identity" (its outputs are the logits).
    """

    weights: list[np.ndarray]
    biases: list[np.ndarray]
    activations: list[str]
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if not (len(self.weights) == len(self.biases) == len(self.activations)):
            raise InputError("weights, biases and activations must align")
        if not self.weights:
            raise InputError("model needs at least one layer")
        for act in self.activations:
            if act not in _ACTIVATIONS:
                raise InputError(f"unknown activation {act!r}")
        self.weights = [np.ascontiguousarray(w, dtype=np.float64) for w in self.weights]
        self.biases = [np.ascontiguousarray(b, dtype=np.float64) for b in self.biases]
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            if w.ndim != 2 or b.ndim != 1 or w.shape[1] != b.shape[0]:
                raise InputError(f"layer {i}: weight {w.shape} / bias {b.shape} mismatch")
            if i > 0 and w.shape[0] != self.weights[i - 1].shape[1]:
                raise InputError(f"layer {i}: fan-in does not match previous fan-out")
            if not (np.isfinite(w).all() and np.isfinite(b).all()):
                raise InputError(f"layer {i}: non-finite parameter")

    @property
    def input_dim(self) -> int:
        return self.weights[0].shape[0]

    @property
    def num_classes(self) -> int:
        return self.weights[-1].shape[1]


@dataclass
class TrainConfig:
    """Minibatch SGD-with-momentum hyperparameters.

    The default weight decay keeps the softmax from saturating on easily
    separable data, so probabilities (and hence input gradients) stay
    informative.
    """

    learning_rate: float = 0.1
    epochs: int = 60
    batch_size: int = 32
    seed: int = 0
    momentum: float = 0.9
    weight_decay: float = 1e-2


def make_mlp(input_dim, num_classes, hidden=(64,), seed=0) -> MlpClassifier:
    """Random tanh MLP; weights are N(0, 1/fan_in), biases zero."""
    rng = np.random.default_rng(seed)
    dims = [input_dim, *hidden, num_classes]
    weights, biases, acts = [], [], []
    for fan_in, fan_out in zip(dims[:-1], dims[1:]):
        weights.append(rng.normal(0.0, 1.0, (fan_in, fan_out)) / np.sqrt(fan_in))
        biases.append(np.zeros(fan_out))
        acts.append("tanh")
    acts[-1] = "identity"
    return MlpClassifier(weights, biases, acts)


def _pixels_of(image) -> np.ndarray:
    pixels = getattr(image, "pixels", image)
    return np.asarray(pixels, dtype=np.float64)


def _forward_logits(model: MlpClassifier, x: np.ndarray) -> np.ndarray:
    a = x
    for w, b, act in zip(model.weights, model.biases, model.activations):
        a = a @ w + b
        if act == "tanh":
            a = np.tanh(a)
    return a


def _softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=-1, keepdims=True)


def predict(model: MlpClassifier, image) -> np.ndarray:
    """Softmax class probabilities for one image (vector of length K)."""
    x = _pixels_of(image)
    if x.ndim != 1 or x.shape[0] != model.input_dim:
        raise InputError(
            f"image has {x.shape} pixels, model expects ({model.input_dim},)"
        )
    if not np.isfinite(x).all():
        raise InputError("image contains non-finite pixel values")
    return _softmax(_forward_logits(model, x))


def predict_batch(model: MlpClassifier, xs: np.ndarray) -> np.ndarray:
    """Softmax probabilities for a (n, p) pixel matrix."""
    xs = np.asarray(xs, dtype=np.float64)
    if xs.ndim != 2 or xs.shape[1] != model.input_dim:
        raise InputError(f"expected (n, {model.input_dim}) pixel matrix, got {xs.shape}")
    return _softmax(_forward_logits(model, xs))


def log_prob(model: MlpClassifier, x: np.ndarray, y: int) -> float:
    """log P(y | x), computed stably. Used mainly by finite-difference checks."""
    z = _forward_logits(model, np.asarray(x, dtype=np.float64))
    m = z.max()
    return float(z[y] - m - np.log(np.exp(z - m).sum()))


def logit_input_jacobian(model: MlpClassifier, x: np.ndarray) -> np.ndarray:
    """d logits / d x, shape (K, p), by one reverse sweep through the layers."""
    x = np.asarray(x, dtype=np.float64)
    # forward pass, keeping each layer's post-activation output
    outputs = []
    a = x
    for w, b, act in zip(model.weights, model.biases, model.activations):
        a = a @ w + b
        if act == "tanh":
            a = np.tanh(a)
        outputs.append(a)
    # reverse sweep: carry d logits / d (layer output) back to the input
    grad = np.eye(model.num_classes)
    for w, act, out in zip(model.weights[::-1], model.activations[::-1], outputs[::-1]):
        if act == "tanh":
            grad = grad * (1.0 - out * out)  # tanh' = 1 - tanh^2
        grad = grad @ w.T
    return grad


def logprob_jacobian(model: MlpClassifier, image, coords=None) -> np.ndarray:
    """Gradients of log P(y | x + w) at w = 0, one row per class.

    ``coords`` restricts the perturbation to the given pixel indices; None
    means all pixels.  Row y is d log P(y) / d w, so the probability-weighted
    row sum vanishes identically.
    """
    x = _pixels_of(image)
    probs = predict(model, x)
    jz = logit_input_jacobian(model, x)
    # d log p_y / dx = dz_y/dx - sum_k p_k dz_k/dx; restricting after the
    # correction keeps restricted and full results bit-identical per column
    jac = jz - probs @ jz
    if coords is None:
        return jac
    coords = np.asarray(coords)
    if coords.ndim != 1 or coords.size == 0:
        raise InputError("coords must be a non-empty 1-D index list")
    if coords.size != np.unique(coords).size:
        raise InputError("coords contains duplicate indices")
    if coords.min() < 0 or coords.max() >= model.input_dim:
        raise InputError("coords out of range")
    return np.ascontiguousarray(jac[:, coords])


def _accuracy(model: MlpClassifier, xs: np.ndarray, ys: np.ndarray) -> float:
    return float(np.mean(predict_batch(model, xs).argmax(axis=1) == ys))


def _train_arrays(dataset):
    if not dataset.images:
        raise InputError("empty dataset")
    xs = np.stack([img.pixels for img in dataset.images])
    ys = np.asarray(dataset.labels, dtype=np.int64)
    return xs, ys


def _run_sgd(model: MlpClassifier, xs, ys, hyper: TrainConfig, val=None):
    n = xs.shape[0]
    k = model.num_classes
    if n == 0:
        raise InputError("empty training data")
    if ys.min() < 0 or ys.max() >= k:
        raise InputError(f"labels must lie in 0..{k - 1}")
    rng = np.random.default_rng(hyper.seed)
    onehot = np.eye(k)[ys]
    vel_w = [np.zeros_like(w) for w in model.weights]
    vel_b = [np.zeros_like(b) for b in model.biases]

    for epoch in range(hyper.epochs):
        order = rng.permutation(n)
        epoch_loss = 0.0
        for start in range(0, n, hyper.batch_size):
            idx = order[start : start + hyper.batch_size]
            xb, tb = xs[idx], onehot[idx]
            # forward, keeping post-activation outputs for backprop
            outs = []
            a = xb
            for w, b, act in zip(model.weights, model.biases, model.activations):
                a = a @ w + b
                if act == "tanh":
                    a = np.tanh(a)
                outs.append(a)
            probs = _softmax(outs[-1])
            batch_loss = -np.mean(
                np.log(np.maximum(probs[np.arange(len(idx)), ys[idx]], 1e-300))
            )
            epoch_loss += batch_loss * len(idx)
            # backprop of mean cross-entropy
            delta = (probs - tb) / len(idx)
            for layer in range(len(model.weights) - 1, -1, -1):
                inp = outs[layer - 1] if layer > 0 else xb
                gw = inp.T @ delta + hyper.weight_decay * model.weights[layer]
                gb = delta.sum(axis=0)
                if layer > 0:
                    delta = delta @ model.weights[layer].T
                    delta = delta * (1.0 - outs[layer - 1] ** 2)
                vel_w[layer] = hyper.momentum * vel_w[layer] - hyper.learning_rate * gw
                vel_b[layer] = hyper.momentum * vel_b[layer] - hyper.learning_rate * gb
                model.weights[layer] = model.weights[layer] + vel_w[layer]
                model.biases[layer] = model.biases[layer] + vel_b[layer]
        if not np.isfinite(epoch_loss):
            raise TrainingDivergedError(f"loss became non-finite at epoch {epoch}")

    model.meta["train_accuracy"] = _accuracy(model, xs, ys)
    if val is not None:
        vx, vy = _train_arrays(val)
        model.meta["val_accuracy"] = _accuracy(model, vx, vy)
    model.meta["epochs"] = hyper.epochs
    model.meta["seed"] = hyper.seed
    return model


def train(dataset, hidden=(64,), hyper: TrainConfig | None = None, val=None) -> MlpClassifier:
    """Train a fresh tanh MLP on a Dataset. Deterministic given the seed."""
    hyper = hyper or TrainConfig()
    xs, ys = _train_arrays(dataset)
    model = make_mlp(xs.shape[1], dataset.num_classes, hidden, seed=hyper.seed)
    return _run_sgd(model, xs, ys, hyper, val)


def finetune(model: MlpClassifier, dataset, hyper: TrainConfig | None = None, val=None) -> MlpClassifier:
    """Continue training from the given weights on (typically augmented) data."""
    hyper = hyper or TrainConfig()
    xs, ys = _train_arrays(dataset)
    if xs.shape[1] != model.input_dim:
        raise InputError("dataset dimension does not match model input")
    tuned = MlpClassifier(
        [w.copy() for w in model.weights],
        [b.copy() for b in model.biases],
        list(model.activations),
        copy.deepcopy(model.meta),
    )
    return _run_sgd(tuned, xs, ys, hyper, val)


def save(model: MlpClassifier, path) -> None:
    """Write a checkpoint: one JSON header line, then the float64 weight blob.

    Weights are stored little-endian in layer order (W then b per layer), so
    a reload reproduces predictions bit-identically.
    """
    header = {
        "format": CHECKPOINT_FORMAT,
        "version": CHECKPOINT_VERSION,
        "input_dim": model.input_dim,
        "num_classes": model.num_classes,
        "layers": [
            {"fan_in": w.shape[0], "fan_out": w.shape[1], "activation": act}
            for w, act in zip(model.weights, model.activations)
        ],
        "dtype": "<f8",
        "meta": model.meta,
    }
    blob = b"".join(
        np.ascontiguousarray(arr, dtype="<f8").tobytes()
        for w, b in zip(model.weights, model.biases)
        for arr in (w, b)
    )
    with open(path, "wb") as fh:
        fh.write(json.dumps(header, sort_keys=True).encode("utf-8"))
        fh.write(b"\n")
        fh.write(blob)


def load(path) -> MlpClassifier:
    """Load a checkpoint written by :func:`save`."""
    with open(path, "rb") as fh:
        header_line = fh.readline()
        blob = fh.read()
    try:
        header = json.loads(header_line.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise InputError(f"{path}: not an advswarm checkpoint ({exc})") from exc
    if header.get("format") != CHECKPOINT_FORMAT:
        raise InputError(f"{path}: unexpected format {header.get('format')!r}")
    if header.get("version") != CHECKPOINT_VERSION:
        raise InputError(f"{path}: unsupported checkpoint version {header.get('version')}")
    flat = np.frombuffer(blob, dtype="<f8")
    weights, biases, acts = [], [], []
    off = 0
    for layer in header["layers"]:
        fan_in, fan_out = layer["fan_in"], layer["fan_out"]
        need = fan_in * fan_out + fan_out
        if off + need > flat.size:
            raise InputError(f"{path}: weight blob truncated at layer {len(weights)}")
        weights.append(flat[off : off + fan_in * fan_out].reshape(fan_in, fan_out).copy())
        off += fan_in * fan_out
        biases.append(flat[off : off + fan_out].copy())
        off += fan_out
        acts.append(layer["activation"])
    if off != flat.size:
        raise InputError(f"{path}: {flat.size - off} trailing values in weight blob")
    return MlpClassifier(weights, biases, acts, header.get("meta", {}))
