"""Predictor abstraction and a small numpy multilayer perceptron.

Inference is row-exact: every output depends only on its own input row and
is computed by the same sequence of floating-point operations regardless of
batch size. Training uses BLAS matrix products for speed; that path is never
used for prediction.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable, Protocol, Sequence, runtime_checkable

import numpy as np

from .data import Dataset
from .errors import ConfigError, DataError, DivergenceError, SchemaError

TASKS = ("regression", "binary", "multiclass")
MAGIC = b"pdfool-model v1\n"


@runtime_checkable
class Predictor(Protocol):
    """Anything with a feature count and a vectorised ``predict``.

    ``predict`` returns a regression value, or the class-1 probability for
    binary classifiers. Classifiers additionally expose ``predict_proba``.
    """

    n_features: int

    def predict(self, X: np.ndarray) -> np.ndarray: ...


def predict_batch(model: Predictor, rows) -> np.ndarray:
    X = np.asarray(rows, dtype=np.float64)
    if X.size == 0:
        return np.empty(0)
    if X.ndim == 1:
        X = X[None, :]
    if X.ndim != 2 or X.shape[1] != model.n_features:
        raise SchemaError(f"model expects {model.n_features} features, got shape {X.shape}")
    return np.asarray(model.predict(X), dtype=np.float64)


def _accumulate(h: np.ndarray, W: np.ndarray, b: np.ndarray) -> np.ndarray:
    # h @ W + b with a fixed per-row summation order
    out = np.empty((h.shape[0], W.shape[1]))
    out[:] = b
    for k in range(W.shape[0]):
        out += h[:, k : k + 1] * W[k]
    return out


def sigmoid(z: np.ndarray) -> np.ndarray:
    out = np.empty_like(z, dtype=np.float64)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def softmax(z: np.ndarray) -> np.ndarray:
    e = np.exp(z - z.max(axis=1, keepdims=True))
    total = e[:, 0].copy()
    for k in range(1, e.shape[1]):
        total += e[:, k]
    return e / total[:, None]


@dataclass
class FunctionPredictor:
    """Wrap a vectorised callable ``fn(X) -> values`` as a predictor."""

    fn: Callable[[np.ndarray], np.ndarray]
    n_features: int

    def predict(self, X):
        return np.asarray(self.fn(np.asarray(X, dtype=np.float64)), dtype=np.float64).reshape(-1)


@dataclass
class ConstantClassifier:
    """Binary classifier returning a fixed class-1 probability. Used as a stub."""

    probability: float
    n_features: int

    def predict(self, X):
        return np.full(np.asarray(X).shape[0], float(self.probability))

    def predict_proba(self, X):
        p = self.predict(X)
        return np.column_stack([1.0 - p, p])


@dataclass
class LinearPredictor:
    coef: np.ndarray
    intercept: float = 0.0

    @property
    def n_features(self) -> int:
        return len(self.coef)

    def predict(self, X):
        X = np.asarray(X, dtype=np.float64)
        return _accumulate(X, np.asarray(self.coef, dtype=np.float64)[:, None], np.array([self.intercept]))[:, 0]


def fit_linear(dataset: Dataset) -> LinearPredictor:
    """Ordinary least squares with an intercept."""
    X = np.column_stack([np.ones(dataset.n), dataset.rows])
    beta, *_ = np.linalg.lstsq(X, dataset.target, rcond=None)
    return LinearPredictor(beta[1:].copy(), float(beta[0]))


# ------------------------------------------------------------------------- MLP


@dataclass(frozen=True)
class MlpConfig:
    layer_widths: tuple[int, ...]
    task: str = "regression"
    dropout_rate: float = 0.0
    learn_rate: float = 0.01
    max_epochs: int = 100
    early_stop_patience: int = 6
    class_weights: tuple[float, ...] | None = None
    seed: int = 0
    validation_fraction: float = 0.1
    batch_size: int = 256
    momentum: float = 0.9
    lr_patience: int = 2
    lr_decay: float = 0.5

    def __post_init__(self):
        object.__setattr__(self, "layer_widths", tuple(int(w) for w in self.layer_widths))
        if self.class_weights is not None:
            object.__setattr__(self, "class_weights", tuple(float(w) for w in self.class_weights))
        if self.task not in TASKS:
            raise ConfigError(f"unknown task {self.task!r}")
        if not self.layer_widths or min(self.layer_widths) < 1:
            raise ConfigError("layer_widths must be non-empty positive counts")
        out = self.layer_widths[-1]
        if self.task in ("regression", "binary") and out != 1:
            raise ConfigError(f"{self.task} needs a final width of 1, got {out}")
        if self.task == "multiclass" and out < 2:
            raise ConfigError("multiclass needs a final width of at least 2")
        if not 0.0 <= self.dropout_rate < 1.0:
            raise ConfigError("dropout_rate must lie in [0, 1)")
        if self.learn_rate <= 0:
            raise ConfigError("learn_rate must be > 0")
        if not 0.0 < self.validation_fraction < 1.0:
            raise ConfigError("validation_fraction must lie in (0, 1)")
        if self.class_weights is not None:
            if self.task == "regression":
                raise ConfigError("class_weights apply to classification tasks only")
            if len(self.class_weights) != self.n_classes or min(self.class_weights) <= 0:
                raise ConfigError(f"class_weights needs {self.n_classes} positive entries")

    @property
    def n_classes(self) -> int:
        if self.task == "multiclass":
            return self.layer_widths[-1]
        return 2 if self.task == "binary" else 1


@dataclass
class TrainedMlp:
    config: MlpConfig
    weights: list[tuple[np.ndarray, np.ndarray]]
    mean: np.ndarray
    sd: np.ndarray
    training_log: list[dict] = field(default_factory=list)

    @property
    def n_features(self) -> int:
        return len(self.mean)

    @property
    def n_classes(self) -> int:
        return self.config.n_classes

    def output(self, X) -> np.ndarray:
        """Final-layer pre-activations (n, out), computed row-exactly."""
        X = np.asarray(X, dtype=np.float64)
        if X.ndim != 2 or X.shape[1] != self.n_features:
            raise SchemaError(f"model expects {self.n_features} features, got shape {X.shape}")
        h = (X - self.mean) / self.sd
        last = len(self.weights) - 1
        for i, (W, b) in enumerate(self.weights):
            h = _accumulate(h, W, b)
            if i < last:
                np.maximum(h, 0.0, out=h)
        return h

    def predict(self, X) -> np.ndarray:
        z = self.output(X)
        if self.config.task == "regression":
            return z[:, 0]
        if self.config.task == "binary":
            return sigmoid(z[:, 0])
        return np.argmax(z, axis=1).astype(np.float64)

    def predict_proba(self, X) -> np.ndarray:
        z = self.output(X)
        if self.config.task == "binary":
            p = sigmoid(z[:, 0])
            return np.column_stack([1.0 - p, p])
        if self.config.task == "multiclass":
            return softmax(z)
        raise TypeError("regression models have no class distribution")


def init_weights(n_in: int, widths: Sequence[int], rng: np.random.Generator):
    params = []
    fan_in = n_in
    for w in widths:
        limit = math.sqrt(6.0 / (fan_in + w))
        params.append((rng.uniform(-limit, limit, size=(fan_in, w)), np.zeros(w)))
        fan_in = w
    return params


def loss_and_gradients(params, X, y, sample_weight, task, masks=None):
    """Mean (weighted) loss of a batch and its gradients w.r.t. every (W, b).

    ``X`` is already standardised. ``masks`` holds one multiplicative dropout
    mask per hidden layer (already scaled by 1/keep), or None.
    """
    B = X.shape[0]
    acts = [X]
    pre = []
    h = X
    last = len(params) - 1
    for i, (W, b) in enumerate(params):
        z = h @ W + b
        pre.append(z)
        if i < last:
            h = np.maximum(z, 0.0)
            if masks is not None:
                h = h * masks[i]
            acts.append(h)
    z = pre[-1]
    w = sample_weight
    if task == "regression":
        r = z[:, 0] - y
        loss = float(np.mean(r * r))
        dz = (2.0 * r / B)[:, None]
    elif task == "binary":
        zz = z[:, 0]
        # softplus(z) - y*z, numerically stable
        per = np.maximum(zz, 0) + np.log1p(np.exp(-np.abs(zz))) - y * zz
        loss = float(np.sum(w * per) / B)
        dz = (w * (sigmoid(zz) - y) / B)[:, None]
    else:
        m = z.max(axis=1, keepdims=True)
        lse = (m + np.log(np.exp(z - m).sum(axis=1, keepdims=True)))[:, 0]
        yi = y.astype(int)
        per = lse - z[np.arange(B), yi]
        loss = float(np.sum(w * per) / B)
        g = np.exp(z - lse[:, None])
        g[np.arange(B), yi] -= 1.0
        dz = g * (w / B)[:, None]
    grads = [None] * len(params)
    for i in range(last, -1, -1):
        W, _ = params[i]
        grads[i] = (acts[i].T @ dz, dz.sum(axis=0))
        if i > 0:
            dh = dz @ W.T
            if masks is not None:
                dh = dh * masks[i - 1]
            dz = dh * (pre[i - 1] > 0)
    return loss, grads


def _check_targets(y: np.ndarray, config: MlpConfig) -> None:
    if not np.all(np.isfinite(y)):
        raise DataError("targets must be finite")
    if config.task == "binary" and not np.isin(y, (0.0, 1.0)).all():
        raise DataError("binary task needs targets in {0, 1}")
    if config.task == "multiclass":
        k = config.n_classes
        if not (np.all(y == np.round(y)) and y.min() >= 0 and y.max() < k):
            raise DataError(f"multiclass task needs integer targets in [0, {k})")


def train_mlp(dataset: Dataset, config: MlpConfig) -> TrainedMlp:
    """Mini-batch SGD with momentum, step decay on plateau and early stopping.

    The validation split is carved from ``dataset`` with the config seed. The
    returned weights are those with the lowest validation loss.
    """
    X = dataset.rows
    y = dataset.target
    n, p = X.shape
    if n < 20:
        raise DataError(f"need at least 20 rows to train, got {n}")
    _check_targets(y, config)
    rng = np.random.default_rng(config.seed)

    mean = X.mean(axis=0)
    sd = X.std(axis=0)
    sd = np.where(sd > 0, sd, 1.0)
    Xs = (X - mean) / sd

    if config.class_weights is not None:
        sw = np.asarray(config.class_weights)[y.astype(int)]
    else:
        sw = np.ones(n)

    order = rng.permutation(n)
    n_val = max(1, int(round(config.validation_fraction * n)))
    val_idx, tr_idx = np.sort(order[:n_val]), np.sort(order[n_val:])
    Xv, yv, wv = Xs[val_idx], y[val_idx], sw[val_idx]
    Xt, yt, wt = Xs[tr_idx], y[tr_idx], sw[tr_idx]

    params = init_weights(p, config.layer_widths, rng)
    velocity = [(np.zeros_like(W), np.zeros_like(b)) for W, b in params]
    keep = 1.0 - config.dropout_rate
    hidden = config.layer_widths[:-1]

    lr = config.learn_rate
    best = math.inf
    best_params = [(W.copy(), b.copy()) for W, b in params]
    wait = lr_wait = 0
    log = []
    for epoch in range(config.max_epochs):
        perm = rng.permutation(len(tr_idx))
        total = 0.0
        for start in range(0, len(perm), config.batch_size):
            idx = perm[start : start + config.batch_size]
            masks = None
            if config.dropout_rate > 0:
                masks = [(rng.random((len(idx), w)) < keep) / keep for w in hidden]
            loss, grads = loss_and_gradients(params, Xt[idx], yt[idx], wt[idx], config.task, masks)
            total += loss * len(idx)
            for i, ((W, b), (gW, gb), (vW, vb)) in enumerate(zip(params, grads, velocity)):
                vW *= config.momentum
                vW -= lr * gW
                vb *= config.momentum
                vb -= lr * gb
                W += vW
                b += vb
        train_loss = total / len(tr_idx)
        val_loss, _ = loss_and_gradients(params, Xv, yv, wv, config.task)
        if not (math.isfinite(train_loss) and math.isfinite(val_loss)):
            raise DivergenceError(epoch, train_loss if not math.isfinite(train_loss) else val_loss)
        log.append({"epoch": epoch, "train_loss": train_loss, "val_loss": val_loss, "lr": lr})
        if val_loss < best:
            best = val_loss
            best_params = [(W.copy(), b.copy()) for W, b in params]
            wait = lr_wait = 0
        else:
            wait += 1
            lr_wait += 1
            if wait >= config.early_stop_patience:
                break
            if lr_wait >= config.lr_patience:
                lr *= config.lr_decay
                lr_wait = 0
    return TrainedMlp(config, best_params, mean, sd, log)


# --------------------------------------------------------------- serialization


def _config_to_dict(config: MlpConfig) -> dict:
    d = dict(config.__dict__)
    d["layer_widths"] = list(config.layer_widths)
    d["class_weights"] = None if config.class_weights is None else list(config.class_weights)
    return d


def save_predictor(model, path) -> None:
    """Write a built-in predictor as a versioned header plus little-endian float64 payload."""
    if isinstance(model, TrainedMlp):
        arrays = [model.mean, model.sd]
        for W, b in model.weights:
            arrays += [W, b]
        header = {
            "kind": "mlp",
            "config": _config_to_dict(model.config),
            "n_features": model.n_features,
            "training_log": model.training_log,
        }
    elif isinstance(model, LinearPredictor):
        arrays = [np.asarray(model.coef), np.array([model.intercept])]
        header = {"kind": "linear", "n_features": model.n_features}
    else:
        raise TypeError(f"cannot serialise {type(model).__name__}")
    header["shapes"] = [list(np.shape(a)) for a in arrays]
    blob = b"".join(np.ascontiguousarray(a, dtype="<f8").tobytes() for a in arrays)
    with Path(path).open("wb") as fh:
        fh.write(MAGIC)
        fh.write(json.dumps(header, sort_keys=True).encode() + b"\n")
        fh.write(blob)


def load_predictor(path):
    raw = Path(path).read_bytes()
    if not raw.startswith(MAGIC):
        raise DataError(f"{path}: not a pdfool model file")
    rest = raw[len(MAGIC) :]
    nl = rest.index(b"\n")
    header = json.loads(rest[:nl])
    payload = rest[nl + 1 :]
    arrays, offset = [], 0
    for shape in header["shapes"]:
        count = int(np.prod(shape)) if shape else 1
        a = np.frombuffer(payload, dtype="<f8", count=count, offset=offset).reshape(shape)
        arrays.append(a.astype(np.float64))
        offset += 8 * count
    if header["kind"] == "linear":
        return LinearPredictor(arrays[0], float(arrays[1][0]))
    cfg = dict(header["config"])
    cfg["layer_widths"] = tuple(cfg["layer_widths"])
    if cfg.get("class_weights") is not None:
        cfg["class_weights"] = tuple(cfg["class_weights"])
    config = MlpConfig(**cfg)
    weights = [(arrays[i], arrays[i + 1]) for i in range(2, len(arrays), 2)]
    return TrainedMlp(config, weights, arrays[0], arrays[1], header.get("training_log", []))


def with_seed(config: MlpConfig, seed: int) -> MlpConfig:
    return replace(config, seed=int(seed))
