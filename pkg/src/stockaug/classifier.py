"""Binary window classifiers: a logistic baseline and a from-scratch LSTM.

The LSTM is a single layer over one input feature per time step, with a
two-neuron affine output and softmax. Gradients come from backpropagation
through time; training uses RMSProp with shuffled mini-batches and early
stopping on validation loss. Everything is plain float64 numpy and fully
deterministic given a seed.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from typing import Optional

import numpy as np

from .core import RngStream
from .errors import TrainingDivergedError
from .pipeline import WindowSet

__all__ = [
    "ModelParams",
    "TrainConfig",
    "Prediction",
    "EpochRecord",
    "init_params",
    "param_count",
    "forward",
    "predict_batch",
    "loss_and_grad",
    "batch_loss",
    "rmsprop_step",
    "train",
    "save_checkpoint",
    "load_checkpoint",
]

_KINDS = ("lstm", "logistic")
_CHECKPOINT_VERSION = 1


@dataclass
class ModelParams:
    """All trainable weights of one classifier."""

    kind: str
    window: int
    hidden: int
    tensors: dict
    seed: int

    def copy(self) -> "ModelParams":
        return ModelParams(
            kind=self.kind,
            window=self.window,
            hidden=self.hidden,
            tensors={k: v.copy() for k, v in self.tensors.items()},
            seed=self.seed,
        )


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 0.001
    batch_size: int = 128
    patience: int = 10
    max_epochs: int = 400
    optimizer: str = "rmsprop"
    rmsprop_rho: float = 0.9
    rmsprop_eps: float = 1e-7
    grad_clip: Optional[float] = 5.0
    hidden: int = 25
    seed: int = 0

    def __post_init__(self):
        if self.learning_rate <= 0 or self.batch_size < 1 or self.max_epochs < 1:
            raise ValueError("learning_rate, batch_size and max_epochs must be positive")
        if self.patience < 1:
            raise ValueError("patience must be at least 1")
        if self.optimizer != "rmsprop":
            raise ValueError(f"unsupported optimizer {self.optimizer!r}")


@dataclass(frozen=True)
class Prediction:
    prob_up: float

    @property
    def prob_down(self) -> float:
        return 1.0 - self.prob_up


@dataclass(frozen=True)
class EpochRecord:
    epoch: int
    train_loss: float
    val_loss: float
    improved: bool


def _sigmoid(z: np.ndarray) -> np.ndarray:
    with np.errstate(over="ignore"):
        return 1.0 / (1.0 + np.exp(-z))


def _init_tensors(kind: str, window: int, hidden: int, gen: np.random.Generator) -> dict:
    if kind == "logistic":
        bound = 1.0 / np.sqrt(window)
        return {"w": gen.uniform(-bound, bound, window), "b": np.zeros(1)}
    h = hidden
    bound = 1.0 / np.sqrt(h)
    b = np.zeros(4 * h)
    b[h : 2 * h] = 1.0  # forget-gate bias
    return {
        "wx": gen.uniform(-1.0, 1.0, 4 * h),
        "wh": gen.uniform(-bound, bound, (4 * h, h)),
        "b": b,
        "wo": gen.uniform(-bound, bound, (h, 2)),
        "bo": np.zeros(2),
    }


def init_params(kind: str, window: int, hidden: int = 25, seed: int = 0) -> ModelParams:
    if kind not in _KINDS:
        raise ValueError(f"unknown model kind {kind!r}")
    gen = RngStream(int(seed)).child("init").generator()
    tensors = _init_tensors(kind, window, hidden, gen)
    return ModelParams(
        kind=kind,
        window=int(window),
        hidden=int(hidden) if kind == "lstm" else 0,
        tensors=tensors,
        seed=int(seed),
    )


def param_count(params: ModelParams) -> int:
    return int(sum(v.size for v in params.tensors.values()))


def _lstm_probs(params: ModelParams, X: np.ndarray) -> np.ndarray:
    t = params.tensors
    h_units = params.hidden
    wh_t = np.ascontiguousarray(t["wh"].T)
    zx = X[:, :, None] * t["wx"] + t["b"]
    n = X.shape[0]
    h = np.zeros((n, h_units))
    c = np.zeros((n, h_units))
    for step in range(X.shape[1]):
        z = zx[:, step, :] + h @ wh_t
        sab = _sigmoid(z[:, : 2 * h_units])
        i = sab[:, :h_units]
        f = sab[:, h_units:]
        g = np.tanh(z[:, 2 * h_units : 3 * h_units])
        o = _sigmoid(z[:, 3 * h_units :])
        c = f * c + i * g
        h = o * np.tanh(c)
    logits = h @ t["wo"] + t["bo"]
    return _softmax_up(logits)


def _softmax_up(logits: np.ndarray) -> np.ndarray:
    m = logits.max(axis=1, keepdims=True)
    e = np.exp(logits - m)
    return e[:, 1] / e.sum(axis=1)


def _probs(params: ModelParams, X: np.ndarray, chunk: int = 1024) -> np.ndarray:
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[1] != params.window:
        raise ValueError(f"expected (N, {params.window}) windows, got {X.shape}")
    if X.shape[0] == 0:
        return np.empty(0)
    if params.kind == "logistic":
        return _sigmoid(X @ params.tensors["w"] + params.tensors["b"][0])
    out = np.empty(X.shape[0])
    for lo in range(0, X.shape[0], chunk):
        out[lo : lo + chunk] = _lstm_probs(params, X[lo : lo + chunk])
    return out


def forward(params: ModelParams, window) -> Prediction:
    """Probability of the up class for one window."""
    x = np.asarray(window, dtype=np.float64)
    if x.ndim != 1 or x.size != params.window:
        raise ValueError(f"expected a window of length {params.window}, got shape {x.shape}")
    return Prediction(prob_up=float(_probs(params, x[None, :])[0]))


def predict_batch(params: ModelParams, windows) -> np.ndarray:
    """Elementwise forward over rows; order-preserving prob_up array."""
    return _probs(params, np.asarray(windows, dtype=np.float64))


def _logistic_loss_grad(params: ModelParams, X: np.ndarray, y: np.ndarray):
    w = params.tensors["w"]
    b = params.tensors["b"]
    z = X @ w + b[0]
    # softplus(z) - y z is the stable binary cross-entropy in logits
    loss = float(np.mean(np.logaddexp(0.0, z) - y * z))
    dz = (_sigmoid(z) - y) / y.size
    return loss, {"w": X.T @ dz, "b": np.array([dz.sum()])}


def _lstm_loss_grad(params: ModelParams, X: np.ndarray, y: np.ndarray):
    t = params.tensors
    h_units = params.hidden
    n, steps = X.shape
    wh = t["wh"]
    wh_t = np.ascontiguousarray(wh.T)

    zx = X[:, :, None] * t["wx"] + t["b"]
    hs = np.zeros((steps + 1, n, h_units))
    cs = np.zeros((steps + 1, n, h_units))
    gi = np.empty((steps, n, h_units))
    gf = np.empty((steps, n, h_units))
    gg = np.empty((steps, n, h_units))
    go = np.empty((steps, n, h_units))
    tc = np.empty((steps, n, h_units))
    h = hs[0]
    c = cs[0]
    for step in range(steps):
        z = zx[:, step, :] + h @ wh_t
        sab = _sigmoid(z[:, : 2 * h_units])
        i = sab[:, :h_units]
        f = sab[:, h_units:]
        g = np.tanh(z[:, 2 * h_units : 3 * h_units])
        o = _sigmoid(z[:, 3 * h_units :])
        c = f * c + i * g
        tch = np.tanh(c)
        h = o * tch
        gi[step] = i
        gf[step] = f
        gg[step] = g
        go[step] = o
        tc[step] = tch
        hs[step + 1] = h
        cs[step + 1] = c

    logits = h @ t["wo"] + t["bo"]
    m = logits.max(axis=1, keepdims=True)
    shifted = logits - m
    lse = np.log(np.exp(shifted).sum(axis=1, keepdims=True))
    log_probs = shifted - lse
    idx = np.arange(n)
    loss = float(-log_probs[idx, y].mean())

    dlogits = np.exp(log_probs)
    dlogits[idx, y] -= 1.0
    dlogits /= n

    grads = {
        "wo": h.T @ dlogits,
        "bo": dlogits.sum(axis=0),
        "wx": np.zeros_like(t["wx"]),
        "wh": np.zeros_like(wh),
        "b": np.zeros_like(t["b"]),
    }
    dh = dlogits @ t["wo"].T
    dc = np.zeros((n, h_units))
    dz = np.empty((n, 4 * h_units))
    for step in range(steps - 1, -1, -1):
        i = gi[step]
        f = gf[step]
        g = gg[step]
        o = go[step]
        tch = tc[step]
        do = dh * tch
        dcc = dc + dh * o * (1.0 - tch * tch)
        dz[:, :h_units] = (dcc * g) * i * (1.0 - i)
        dz[:, h_units : 2 * h_units] = (dcc * cs[step]) * f * (1.0 - f)
        dz[:, 2 * h_units : 3 * h_units] = (dcc * i) * (1.0 - g * g)
        dz[:, 3 * h_units :] = do * o * (1.0 - o)
        grads["wx"] += dz.T @ X[:, step]
        grads["wh"] += dz.T @ hs[step]
        grads["b"] += dz.sum(axis=0)
        dh = dz @ wh
        dc = dcc * f
    return loss, grads


def loss_and_grad(params: ModelParams, X, y):
    """Mean cross-entropy over the batch and gradients for every tensor."""
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y).astype(np.int64)
    if X.ndim != 2 or X.shape[0] == 0:
        raise ValueError("batch must be a non-empty (N, W) matrix")
    if X.shape[1] != params.window:
        raise ValueError(f"expected window length {params.window}, got {X.shape[1]}")
    if params.kind == "logistic":
        return _logistic_loss_grad(params, X, y.astype(np.float64))
    return _lstm_loss_grad(params, X, y)


def batch_loss(params: ModelParams, X, y, chunk: int = 2048) -> float:
    """Mean cross-entropy without gradients, evaluated in chunks."""
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y).astype(np.int64)
    p = _probs(params, X, chunk=chunk)
    p = np.clip(p, 1e-300, 1.0 - 1e-16)
    return float(-np.mean(np.where(y == 1, np.log(p), np.log1p(-p))))


def rmsprop_step(params: ModelParams, grads: dict, state: dict, config: TrainConfig):
    """One RMSProp update, in place on params.tensors and state."""
    rho = config.rmsprop_rho
    eps = config.rmsprop_eps
    lr = config.learning_rate
    for name, w in params.tensors.items():
        g = grads[name]
        a = state[name]
        a *= rho
        a += (1.0 - rho) * g * g
        w -= lr * g / (np.sqrt(a) + eps)
    return params, state


def _clip_grads(grads: dict, limit: float) -> None:
    for g in grads.values():
        np.clip(g, -limit, limit, out=g)


def train(
    kind: str,
    train_windows: WindowSet,
    val_windows: WindowSet,
    config: TrainConfig,
    stream: Optional[RngStream] = None,
) -> tuple[ModelParams, list[EpochRecord]]:
    """Mini-batch RMSProp training with early stopping.

    Stops once validation loss has not improved for `patience` consecutive
    epochs (or at max_epochs) and returns the weights from the best
    validation epoch. Bit-reproducible for a fixed config and stream.
    """
    if len(train_windows) == 0 or len(val_windows) == 0:
        raise ValueError("train and validation sets must be non-empty")
    if stream is None:
        stream = RngStream(config.seed)
    X = train_windows.values
    y = train_windows.labels.astype(np.int64)
    params = ModelParams(
        kind=kind,
        window=X.shape[1],
        hidden=config.hidden if kind == "lstm" else 0,
        tensors=_init_tensors(kind, X.shape[1], config.hidden, stream.child("init").generator()),
        seed=config.seed,
    )
    state = {k: np.zeros_like(v) for k, v in params.tensors.items()}
    log: list[EpochRecord] = []
    best_loss = np.inf
    best_params = params.copy()
    stall = 0
    n = X.shape[0]
    for epoch in range(1, config.max_epochs + 1):
        perm = stream.child("shuffle", epoch).generator().permutation(n)
        total = 0.0
        for lo in range(0, n, config.batch_size):
            idx = perm[lo : lo + config.batch_size]
            loss, grads = loss_and_grad(params, X[idx], y[idx])
            if not np.isfinite(loss):
                raise TrainingDivergedError(f"training loss diverged at epoch {epoch}", log)
            if config.grad_clip is not None:
                _clip_grads(grads, config.grad_clip)
            rmsprop_step(params, grads, state, config)
            total += loss * idx.size
        train_loss = total / n
        val_loss = batch_loss(params, val_windows.values, val_windows.labels)
        if not np.isfinite(val_loss):
            raise TrainingDivergedError(f"validation loss diverged at epoch {epoch}", log)
        improved = val_loss < best_loss
        log.append(EpochRecord(epoch=epoch, train_loss=train_loss, val_loss=val_loss, improved=improved))
        if improved:
            best_loss = val_loss
            best_params = params.copy()
            stall = 0
        else:
            stall += 1
        if stall >= config.patience:
            break
    return best_params, log


def save_checkpoint(path, params: ModelParams, config: TrainConfig) -> None:
    """Write a versioned npz checkpoint; float64 weights round-trip exactly."""
    meta = {
        "format_version": _CHECKPOINT_VERSION,
        "kind": params.kind,
        "window": params.window,
        "hidden": params.hidden,
        "seed": params.seed,
        "config": asdict(config),
        "tensor_names": sorted(params.tensors),
    }
    arrays = {f"tensor_{k}": np.asarray(v, dtype=np.float64) for k, v in params.tensors.items()}
    np.savez(path, meta=np.array(json.dumps(meta, sort_keys=True)), **arrays)


def load_checkpoint(path) -> tuple[ModelParams, TrainConfig]:
    with np.load(path) as data:
        meta = json.loads(str(data["meta"].item()))
        if meta.get("format_version") != _CHECKPOINT_VERSION:
            raise ValueError(f"unsupported checkpoint version {meta.get('format_version')!r}")
        tensors = {name: data[f"tensor_{name}"] for name in meta["tensor_names"]}
    params = ModelParams(
        kind=meta["kind"],
        window=int(meta["window"]),
        hidden=int(meta["hidden"]),
        tensors=tensors,
        seed=int(meta["seed"]),
    )
    return params, TrainConfig(**meta["config"])
