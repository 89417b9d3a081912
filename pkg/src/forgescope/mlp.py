"""Per-task binary classifiers: a small two-hidden-layer perceptron.

Training is plain mini-batch gradient descent on cross-entropy plus an L2
penalty. Everything is a deterministic function of (data, config seed), which
the test suite relies on: same seed, same bits.
"""

from __future__ import annotations

import enum
import struct
from dataclasses import dataclass

import numpy as np

from .errors import ShapeError, SingleClassError, TruncatedModel, VersionMismatch


class TaskKind(enum.Enum):
    JPEG_BELOW_85 = "JpegBelow85"
    UPSAMPLE = "Upsample"
    DOWNSAMPLE = "Downsample"
    ROTATE_CW = "RotateCW"
    ROTATE_CCW = "RotateCCW"
    SHEAR = "Shear"


TASK_ORDER = tuple(TaskKind)

DEFAULT_LAYERS = (320, 128, 32, 1)

_MODEL_MAGIC = b"FSMLP"
_MODEL_VERSION = b"1"


@dataclass
class TrainConfig:
    learning_rate: float = 0.01
    batch_size: int = 64
    epochs: int = 30
    seed: int = 0
    l2: float = 0.0

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")
        if self.batch_size < 1 or self.epochs < 1:
            raise ValueError("batch_size and epochs must be >= 1")
        if self.l2 < 0:
            raise ValueError("l2 penalty must be non-negative")


@dataclass
class Mlp:
    """Rectifier hidden layers, logistic output."""

    weights: list
    biases: list
    task: TaskKind | None = None

    def __post_init__(self):
        if len(self.weights) != len(self.biases) or not self.weights:
            raise ValueError("weights and biases must pair up")
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            if w.ndim != 2 or b.shape != (w.shape[1],):
                raise ValueError(f"layer {i} shape mismatch: {w.shape} / {b.shape}")
            if i > 0 and w.shape[0] != self.weights[i - 1].shape[1]:
                raise ValueError(f"layer {i} input does not chain")
            if not (np.all(np.isfinite(w)) and np.all(np.isfinite(b))):
                raise ValueError(f"layer {i} has non-finite parameters")
        if self.weights[-1].shape[1] != 1:
            raise ValueError("output layer must have a single unit")

    @property
    def layer_sizes(self) -> tuple:
        return (self.weights[0].shape[0], *(w.shape[1] for w in self.weights))


def init_mlp(layer_sizes=DEFAULT_LAYERS, seed: int = 0, task: TaskKind | None = None) -> Mlp:
    """Glorot-uniform weights (+-sqrt(6/(fan_in+fan_out))), zero biases."""
    rng = np.random.default_rng(seed)
    return _init_from_rng(layer_sizes, rng, task)


def _init_from_rng(layer_sizes, rng: np.random.Generator, task) -> Mlp:
    weights, biases = [], []
    for fan_in, fan_out in zip(layer_sizes[:-1], layer_sizes[1:]):
        limit = np.sqrt(6.0 / (fan_in + fan_out))
        weights.append(rng.uniform(-limit, limit, (fan_in, fan_out)))
        biases.append(np.zeros(fan_out))
    return Mlp(weights=weights, biases=biases, task=task)


def _sigmoid(z: np.ndarray) -> np.ndarray:
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def _forward_parts(model: Mlp, x: np.ndarray):
    """Activations per layer plus the output logits."""
    acts = [x]
    a = x
    for w, b in zip(model.weights[:-1], model.biases[:-1]):
        a = np.maximum(a @ w + b, 0.0)
        acts.append(a)
    logits = (a @ model.weights[-1] + model.biases[-1])[:, 0]
    return acts, logits


def _check_input(model: Mlp, x) -> tuple[np.ndarray, bool]:
    arr = np.asarray(x, np.float64)
    single = arr.ndim == 1
    if single:
        arr = arr[None]
    if arr.ndim != 2 or arr.shape[1] != model.weights[0].shape[0]:
        raise ShapeError(
            f"input dim {arr.shape} incompatible with model input "
            f"size {model.weights[0].shape[0]}"
        )
    return arr, single


def forward(model: Mlp, x, return_logit: bool = False):
    """Classifier score in (0, 1); a 1-D input returns a scalar."""
    arr, single = _check_input(model, x)
    _, logits = _forward_parts(model, arr)
    out = logits if return_logit else _sigmoid(logits)
    return float(out[0]) if single else out


def loss_and_gradients(model: Mlp, x, y, l2: float = 0.0):
    """Mean binary cross-entropy + L2 penalty, with analytic gradients."""
    arr, _ = _check_input(model, x)
    yv = np.asarray(y, np.float64)
    n = arr.shape[0]
    acts, logits = _forward_parts(model, arr)
    p = _sigmoid(logits)
    # softplus form keeps the loss finite at saturated logits
    loss = float(np.mean(np.maximum(logits, 0.0) - yv * logits + np.log1p(np.exp(-np.abs(logits)))))
    if l2 > 0.0:
        loss += 0.5 * l2 * sum(float((w * w).sum()) for w in model.weights)

    delta = ((p - yv) / n)[:, None]
    grads_w = [None] * len(model.weights)
    grads_b = [None] * len(model.biases)
    for k in range(len(model.weights) - 1, -1, -1):
        grads_w[k] = acts[k].T @ delta
        grads_b[k] = delta.sum(axis=0)
        if l2 > 0.0:
            grads_w[k] = grads_w[k] + l2 * model.weights[k]
        if k > 0:
            delta = (delta @ model.weights[k].T) * (acts[k] > 0.0)
    return loss, grads_w, grads_b


def train(
    x,
    y,
    cfg: TrainConfig,
    layer_sizes=None,
    task: TaskKind | None = None,
    return_history: bool = False,
):
    """Mini-batch gradient descent; shuffled per epoch from cfg.seed."""
    arr = np.asarray(x, np.float64)
    yv = np.asarray(y, np.float64)
    if arr.ndim != 2 or yv.shape != (arr.shape[0],):
        raise ShapeError(f"bad training data shapes {arr.shape} / {yv.shape}")
    classes = np.unique(yv)
    if not np.array_equal(classes, [0.0, 1.0]):
        if classes.size == 1:
            raise SingleClassError("training data contains a single label")
        raise ValueError(f"labels must be 0/1, got {classes}")

    if layer_sizes is None:
        layer_sizes = (arr.shape[1], *DEFAULT_LAYERS[1:])
    rng = np.random.default_rng(cfg.seed)
    model = _init_from_rng(layer_sizes, rng, task)

    n = arr.shape[0]
    history = []
    for _ in range(cfg.epochs):
        perm = rng.permutation(n)
        for start in range(0, n, cfg.batch_size):
            idx = perm[start : start + cfg.batch_size]
            _, gw, gb = loss_and_gradients(model, arr[idx], yv[idx], cfg.l2)
            for k in range(len(model.weights)):
                model.weights[k] -= cfg.learning_rate * gw[k]
                model.biases[k] -= cfg.learning_rate * gb[k]
        if return_history:
            loss, _, _ = loss_and_gradients(model, arr, yv, cfg.l2)
            history.append(loss)
    return (model, history) if return_history else model


def gradient_check(
    model: Mlp,
    x,
    y,
    *,
    l2: float = 0.0,
    seed: int = 0,
    samples: int = 120,
    step: float = 1e-5,
    gradients=None,
) -> float:
    """Max relative error between analytic and central-difference gradients.

    `gradients` overrides the analytic gradients, which lets a corrupted
    gradient be fed in as a negative control for the checker itself.
    """
    arr, _ = _check_input(model, x)
    if arr.shape[0] == 0:
        raise ValueError("gradient check needs a non-empty batch")
    if gradients is None:
        _, gw, gb = loss_and_gradients(model, arr, y, l2)
    else:
        gw, gb = gradients

    params = []
    for k, w in enumerate(model.weights):
        params.extend(("w", k, i) for i in range(w.size))
    for k, b in enumerate(model.biases):
        params.extend(("b", k, i) for i in range(b.size))
    rng = np.random.default_rng(seed)
    chosen = [params[i] for i in rng.choice(len(params), min(samples, len(params)), replace=False)]

    worst = 0.0
    for kind, k, flat in chosen:
        target = model.weights[k] if kind == "w" else model.biases[k]
        grad = gw[k] if kind == "w" else gb[k]
        idx = np.unravel_index(flat, target.shape)
        orig = target[idx]
        target[idx] = orig + step
        lo_hi, _, _ = loss_and_gradients(model, arr, y, l2)
        target[idx] = orig - step
        lo_lo, _, _ = loss_and_gradients(model, arr, y, l2)
        target[idx] = orig
        numeric = (lo_hi - lo_lo) / (2.0 * step)
        analytic = float(grad[idx])
        rel = abs(analytic - numeric) / max(abs(analytic) + abs(numeric), 1e-3)
        worst = max(worst, rel)
    return worst


def save_model(model: Mlp, path) -> None:
    """Binary model file: magic, version, task byte, layer sizes, float64 params."""
    task_byte = 255 if model.task is None else TASK_ORDER.index(model.task)
    sizes = model.layer_sizes
    with open(path, "wb") as fh:
        fh.write(_MODEL_MAGIC + _MODEL_VERSION)
        fh.write(struct.pack("<BB", task_byte, len(sizes)))
        fh.write(struct.pack(f"<{len(sizes)}I", *sizes))
        for w, b in zip(model.weights, model.biases):
            fh.write(w.astype("<f8").tobytes())
            fh.write(b.astype("<f8").tobytes())


def load_model(path) -> Mlp:
    with open(path, "rb") as fh:
        data = fh.read()
    if len(data) < 8:
        raise TruncatedModel(f"model file is {len(data)} bytes")
    if data[:5] != _MODEL_MAGIC:
        raise VersionMismatch(f"bad magic {data[:5]!r}")
    if data[5:6] != _MODEL_VERSION:
        raise VersionMismatch(f"unsupported model version {data[5:6]!r}")
    task_byte, n_sizes = struct.unpack("<BB", data[6:8])
    pos = 8
    if pos + 4 * n_sizes > len(data):
        raise TruncatedModel("layer size table cut short")
    sizes = struct.unpack(f"<{n_sizes}I", data[pos : pos + 4 * n_sizes])
    pos += 4 * n_sizes
    weights, biases = [], []
    for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
        nbytes = 8 * fan_in * fan_out
        if pos + nbytes + 8 * fan_out > len(data):
            raise TruncatedModel("parameter payload cut short")
        weights.append(
            np.frombuffer(data[pos : pos + nbytes], "<f8").reshape(fan_in, fan_out).copy()
        )
        pos += nbytes
        biases.append(np.frombuffer(data[pos : pos + 8 * fan_out], "<f8").copy())
        pos += 8 * fan_out
    if pos != len(data):
        raise TruncatedModel(f"{len(data) - pos} trailing bytes")
    task = None if task_byte == 255 else TASK_ORDER[task_byte]
    return Mlp(weights=weights, biases=biases, task=task)
