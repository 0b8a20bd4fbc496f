"""Concatenation fusion and a numpy MLP regressor trained with AdamW.

The network is an affine/ReLU stack with inverted dropout after every hidden
activation and a linear scalar output. Targets stay in raw score units.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Sequence

import numpy as np

from .optim import AdamState, adamw_update

DEFAULT_HIDDEN = (256, 64)
DEFAULT_GRID = dict(
    learning_rates=(1e-3, 1e-4),
    dropout_rates=(0.3, 0.5),
    weight_decays=(1e-3, 1e-4),
)


def fuse(sat, street, pdfm) -> np.ndarray:
    """Concatenate in the fixed order sat, street, pdfm.

    Accepts vectors or row-aligned matrices. Any part may be empty.
    """
    parts = [np.asarray(a, dtype=np.float64) for a in (sat, street, pdfm)]
    axis = parts[0].ndim - 1
    return np.concatenate(parts, axis=axis)


def split_fused(h, dims: Sequence[int]) -> list[np.ndarray]:
    h = np.asarray(h)
    cuts = np.cumsum(dims)[:-1]
    return np.split(h, cuts, axis=h.ndim - 1)


def mse_loss(preds, targets) -> float:
    p = np.asarray(preds, dtype=np.float64).reshape(-1)
    t = np.asarray(targets, dtype=np.float64).reshape(-1)
    if p.shape != t.shape:
        raise ValueError(f"length mismatch: {p.size} predictions vs {t.size} targets")
    if p.size == 0:
        raise ValueError("mse_loss needs at least one sample")
    return float(np.mean((t - p) ** 2))


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 1e-3
    dropout_rate: float = 0.3
    weight_decay: float = 1e-4
    epochs: int = 150
    batch_size: int = 64
    seed: int = 0
    hidden: tuple[int, ...] = DEFAULT_HIDDEN

    def __post_init__(self):
        if not self.learning_rate > 0:
            raise ValueError("learning_rate must be > 0")
        if not 0.0 <= self.dropout_rate < 1.0:
            raise ValueError("dropout_rate must be in [0, 1)")
        if self.weight_decay < 0:
            raise ValueError("weight_decay must be >= 0")
        if self.epochs < 1 or self.batch_size < 1:
            raise ValueError("epochs and batch_size must be positive")
        object.__setattr__(self, "hidden", tuple(int(h) for h in self.hidden))
        if any(h < 1 for h in self.hidden):
            raise ValueError("hidden sizes must be positive")


@dataclass(frozen=True)
class HyperGrid:
    learning_rates: tuple[float, ...] = DEFAULT_GRID["learning_rates"]
    dropout_rates: tuple[float, ...] = DEFAULT_GRID["dropout_rates"]
    weight_decays: tuple[float, ...] = DEFAULT_GRID["weight_decays"]

    def __post_init__(self):
        for name in ("learning_rates", "dropout_rates", "weight_decays"):
            object.__setattr__(self, name, tuple(float(v) for v in getattr(self, name)))
        if not self.cells():
            raise ValueError("hyperparameter grid is empty")

    def cells(self) -> list[tuple[float, float, float]]:
        """(lr, dropout, weight_decay) in declaration order."""
        return list(itertools.product(self.learning_rates, self.dropout_rates, self.weight_decays))


@dataclass
class MlpModel:
    layer_sizes: tuple[int, ...]
    weights: list[np.ndarray]
    biases: list[np.ndarray]
    dropout_rate: float = 0.0
    fusion_dims: tuple[int, ...] | None = None
    seed: int | None = None

    @classmethod
    def init(cls, n_in: int, hidden=DEFAULT_HIDDEN, dropout_rate: float = 0.0, seed: int = 0, **kw) -> "MlpModel":
        """He-uniform weights, zero biases."""
        sizes = (int(n_in), *map(int, hidden), 1)
        rng = np.random.default_rng(seed)
        weights, biases = [], []
        for a, b in zip(sizes[:-1], sizes[1:]):
            bound = math.sqrt(6.0 / a)
            weights.append(rng.uniform(-bound, bound, size=(a, b)))
            biases.append(np.zeros(b))
        return cls(sizes, weights, biases, dropout_rate, seed=seed, **kw)

    def params(self) -> list[np.ndarray]:
        return [p for wb in zip(self.weights, self.biases) for p in wb]

    def with_params(self, params: Sequence[np.ndarray]) -> "MlpModel":
        return replace(self, weights=list(params[0::2]), biases=list(params[1::2]))

    def predict(self, x) -> np.ndarray:
        return _forward(self, _check_input(self, x), None)[0]


def _check_input(model: MlpModel, x) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    x2 = x.reshape(1, -1) if x.ndim == 1 else x
    if x2.ndim != 2 or x2.shape[1] != model.layer_sizes[0]:
        raise ValueError(f"input width {x2.shape[-1]} does not match model input {model.layer_sizes[0]}")
    return x2


def dropout_masks(model: MlpModel, n: int, rng: np.random.Generator | None) -> list[np.ndarray] | None:
    """Inverted-dropout masks (already scaled by 1/keep) for each hidden layer."""
    if rng is None or model.dropout_rate == 0.0:
        return None
    keep = 1.0 - model.dropout_rate
    return [(rng.random((n, h)) < keep) / keep for h in model.layer_sizes[1:-1]]


def _forward(model: MlpModel, x: np.ndarray, masks):
    acts = [x]
    pre = []
    a = x
    last = len(model.weights) - 1
    for layer, (w, b) in enumerate(zip(model.weights, model.biases)):
        z = a @ w + b
        pre.append(z)
        if layer == last:
            a = z
        else:
            a = np.maximum(z, 0.0)
            if masks is not None:
                a = a * masks[layer]
        acts.append(a)
    return a[:, 0], acts, pre


def mlp_forward(model: MlpModel, x, mode: str = "inference", seed: int | None = None):
    """Scalar prediction(s). ``mode='train'`` draws dropout masks from ``seed``."""
    if mode not in ("train", "inference"):
        raise ValueError("mode must be 'train' or 'inference'")
    x2 = _check_input(model, x)
    masks = None
    if mode == "train":
        masks = dropout_masks(model, x2.shape[0], np.random.default_rng(seed))
    out = _forward(model, x2, masks)[0]
    return float(out[0]) if np.asarray(x).ndim == 1 else out


def _backward(model: MlpModel, x: np.ndarray, y: np.ndarray, masks):
    pred, acts, pre = _forward(model, x, masks)
    n = x.shape[0]
    loss = float(np.mean((y - pred) ** 2))
    delta = (2.0 / n) * (pred - y)[:, None]
    grads_w: list[np.ndarray] = [None] * len(model.weights)  # type: ignore[list-item]
    grads_b: list[np.ndarray] = [None] * len(model.weights)  # type: ignore[list-item]
    for layer in range(len(model.weights) - 1, -1, -1):
        grads_w[layer] = acts[layer].T @ delta
        grads_b[layer] = delta.sum(axis=0)
        if layer == 0:
            break
        delta = delta @ model.weights[layer].T
        if masks is not None:
            delta = delta * masks[layer - 1]
        delta = delta * (pre[layer - 1] > 0)
    grads = [g for wb in zip(grads_w, grads_b) for g in wb]
    return grads, loss


def mlp_backward(model: MlpModel, x, y, dropout_seed: int | None = None) -> list[np.ndarray]:
    """Gradients of the batch MSE, ordered like ``model.params()``.

    With a ``dropout_seed`` the masks match ``mlp_forward(..., 'train', seed)``
    on the same batch.
    """
    x2 = _check_input(model, x)
    y = np.asarray(y, dtype=np.float64).reshape(-1)
    if y.size != x2.shape[0]:
        raise ValueError("targets do not match batch size")
    masks = None if dropout_seed is None else dropout_masks(model, x2.shape[0], np.random.default_rng(dropout_seed))
    return _backward(model, x2, y, masks)[0]


def adamw_step(params, grads, state: AdamState | None, cfg: TrainConfig):
    """One decoupled-weight-decay Adam step with the config's lr and decay."""
    if state is None:
        state = AdamState.zeros_like(params)
    return adamw_update(list(params), list(grads), state, cfg.learning_rate, cfg.weight_decay)


def train_regressor(
    x, y, cfg: TrainConfig, fusion_dims: Sequence[int] | None = None
) -> tuple[MlpModel, list[float]]:
    """Minibatch AdamW on MSE.

    The output bias starts at the mean training target so the raw-unit
    targets do not have to be reached through the weights alone. Returns the
    model and the per-epoch mean minibatch loss.
    """
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64).reshape(-1)
    n = x.shape[0]
    if y.size != n:
        raise ValueError("x and y row counts differ")
    if n < cfg.batch_size:
        raise ValueError(f"need at least batch_size={cfg.batch_size} samples, got {n}")
    rng = np.random.default_rng(cfg.seed)
    model = MlpModel.init(
        x.shape[1], cfg.hidden, cfg.dropout_rate, seed=int(rng.integers(2**63)),
        fusion_dims=None if fusion_dims is None else tuple(fusion_dims),
    )
    model.seed = cfg.seed
    model.biases[-1] = np.array([y.mean()])
    params = model.params()
    state = AdamState.zeros_like(params)
    trace = []
    for epoch in range(cfg.epochs):
        order = rng.permutation(n)
        mask_rng = np.random.default_rng([cfg.seed % 2**64, epoch])
        total = 0.0
        for start in range(0, n, cfg.batch_size):
            rows = order[start:start + cfg.batch_size]
            masks = dropout_masks(model, rows.size, mask_rng)
            grads, loss = _backward(model, x[rows], y[rows], masks)
            total += loss * rows.size
            params, state = adamw_update(params, grads, state, cfg.learning_rate, cfg.weight_decay)
            model = model.with_params(params)
        trace.append(total / n)
    return model, trace


# ---------------------------------------------------------------------------
# grid search


@dataclass(frozen=True)
class CellScore:
    learning_rate: float
    dropout_rate: float
    weight_decay: float
    fold_r2: tuple[float, ...]
    fold_rmse: tuple[float, ...]

    @property
    def mean_r2(self) -> float:
        return float(np.mean(self.fold_r2))

    @property
    def mean_rmse(self) -> float:
        return float(np.mean(self.fold_rmse))

    def as_dict(self) -> dict:
        return {
            "learning_rate": self.learning_rate,
            "dropout_rate": self.dropout_rate,
            "weight_decay": self.weight_decay,
            "fold_r2": list(self.fold_r2),
            "fold_rmse": list(self.fold_rmse),
            "mean_r2": self.mean_r2,
            "mean_rmse": self.mean_rmse,
        }


@dataclass
class GridResult:
    best: TrainConfig
    best_index: int
    cells: list[CellScore] = field(default_factory=list)

    @property
    def n_fits(self) -> int:
        return sum(len(c.fold_r2) for c in self.cells)


def _r2(pred, y) -> float:
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    if ss_tot == 0:
        return float("nan")
    return 1.0 - float(np.sum((y - pred) ** 2)) / ss_tot


def grid_search(
    x, y, folds: Sequence[np.ndarray], grid: HyperGrid, base: TrainConfig = TrainConfig(), seed: int = 0
) -> GridResult:
    """Fit every (cell, fold) pair; pick the highest mean validation R2.

    ``folds`` holds row-index arrays; fold f is validated on while the others
    are trained on. Ties go to the lower mean RMSE, then declaration order.
    Every fit in a cell reuses the same seed, so identical cells score
    identically.
    """
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64).reshape(-1)
    if len(folds) < 2:
        raise ValueError("grid search needs at least two folds")
    folds = [np.asarray(f, dtype=np.int64) for f in folds]
    cells = []
    for lr, dr, wd in grid.cells():
        cfg = replace(base, learning_rate=lr, dropout_rate=dr, weight_decay=wd, seed=seed)
        r2s, rmses = [], []
        for f, val in enumerate(folds):
            train = np.concatenate([folds[g] for g in range(len(folds)) if g != f])
            model, _ = train_regressor(x[train], y[train], replace(cfg, batch_size=min(cfg.batch_size, train.size)))
            pred = model.predict(x[val])
            r2s.append(_r2(pred, y[val]))
            rmses.append(float(np.sqrt(np.mean((y[val] - pred) ** 2))))
        cells.append(CellScore(lr, dr, wd, tuple(r2s), tuple(rmses)))

    def key(i):
        c = cells[i]
        r2 = c.mean_r2 if math.isfinite(c.mean_r2) else -math.inf
        return (-r2, c.mean_rmse, i)

    best_i = min(range(len(cells)), key=key)
    c = cells[best_i]
    best = replace(base, learning_rate=c.learning_rate, dropout_rate=c.dropout_rate, weight_decay=c.weight_decay, seed=seed)
    return GridResult(best, best_i, cells)


# ---------------------------------------------------------------------------
# checkpoint file


def write_checkpoint(model: MlpModel, path) -> None:
    flat = np.concatenate([p.ravel() for p in model.params()])
    lines = [
        "layer_sizes=" + ",".join(map(str, model.layer_sizes)),
        f"dropout_rate={model.dropout_rate!r}",
        "fusion_dims=" + ("" if model.fusion_dims is None else ",".join(map(str, model.fusion_dims))),
        "seed=" + ("" if model.seed is None else str(model.seed)),
        "params=" + ",".join(map(repr, flat.tolist())),
    ]
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def read_checkpoint(path) -> MlpModel:
    kv = dict(line.split("=", 1) for line in Path(path).read_text(encoding="utf-8").splitlines() if "=" in line)
    sizes = tuple(int(a) for a in kv["layer_sizes"].split(","))
    flat = np.array([float(a) for a in kv["params"].split(",")])
    weights, biases, pos = [], [], 0
    for a, b in zip(sizes[:-1], sizes[1:]):
        weights.append(flat[pos:pos + a * b].reshape(a, b))
        pos += a * b
        biases.append(flat[pos:pos + b].copy())
        pos += b
    if pos != flat.size:
        raise ValueError("checkpoint parameter count does not match layer sizes")
    fusion = tuple(int(a) for a in kv["fusion_dims"].split(",")) if kv.get("fusion_dims") else None
    seed = int(kv["seed"]) if kv.get("seed") else None
    return MlpModel(sizes, weights, biases, float(kv["dropout_rate"]), fusion, seed)
