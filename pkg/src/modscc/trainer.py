"""Adamax optimisation, early-stopped training loop and balance-weight grid search."""
from __future__ import annotations

import csv
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .data import DatasetSplit, DataError, Subset, batches
from .heads import HEADS
from .losses import LossWeights
from .metrics import task_reports
from .tensor import Parameter, Tape

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 0.001
    batch_size: int = 16
    patience: int = 50
    max_epochs: int = 10000
    seed: int = 0
    optimizer: str = "adamax"
    eval_batch_size: int = 64

    def __post_init__(self):
        if self.optimizer != "adamax":
            raise ValueError(f"only the Adamax optimizer is supported, got {self.optimizer!r}")
        if self.learning_rate <= 0 or self.batch_size < 1 or self.patience < 1 or self.max_epochs < 1:
            raise ValueError(f"invalid training configuration: {self}")


# ---------------------------------------------------------------------------
# optimizer


@dataclass
class AdamaxState:
    m: np.ndarray
    u: np.ndarray


def adamax_step(param: np.ndarray, grad: np.ndarray, state: AdamaxState, lr: float, t: int,
                beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8) -> None:
    """In-place Adamax update for step ``t`` (1-based).

    m <- b1 m + (1 - b1) g;  u <- max(b2 u, |g|);  p <- p - lr / (1 - b1^t) * m / (u + eps)
    """
    dt = param.dtype.type
    state.m *= dt(beta1)
    state.m += dt(1 - beta1) * grad
    np.maximum(dt(beta2) * state.u, np.abs(grad), out=state.u)
    step = dt(lr / (1 - beta1 ** t))
    param -= step * state.m / (state.u + dt(eps))


class Adamax:
    def __init__(self, params: dict[str, Parameter], lr: float = 0.001, beta1: float = 0.9,
                 beta2: float = 0.999, eps: float = 1e-8):
        self.params = params
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.t = 0
        self.state = {n: AdamaxState(np.zeros_like(p.data), np.zeros_like(p.data)) for n, p in params.items()}

    def step(self) -> None:
        """Apply one update from the accumulated gradients, then zero them."""
        self.t += 1
        for name, p in self.params.items():
            if not p.trainable:
                continue
            adamax_step(p.data, p.grad, self.state[name], self.lr, self.t, self.beta1, self.beta2, self.eps)
            p.zero_grad()


# ---------------------------------------------------------------------------
# early stopping and history


class EarlyStopping:
    """Stop once the monitored loss has not strictly decreased for ``patience`` epochs."""

    def __init__(self, patience: int, max_epochs: int):
        self.patience, self.max_epochs = patience, max_epochs
        self.best = math.inf
        self.best_epoch = 0
        self.wait = 0

    def update(self, epoch: int, value: float) -> bool:
        """Record ``value`` for ``epoch`` (1-based); return True when training should stop."""
        if value < self.best:
            self.best, self.best_epoch, self.wait = value, epoch, 0
        else:
            self.wait += 1
        return self.wait >= self.patience or epoch >= self.max_epochs

    @property
    def improved_last(self) -> bool:
        return self.wait == 0


LOSS_COLUMNS = [f"loss_{h}" for h in HEADS] + ["loss_joint"]
HISTORY_FIELDS = ["epoch"] + LOSS_COLUMNS + ["train_total", "val_total", "val_plant_acc", "val_disease_acc"]


@dataclass
class EpochRecord:
    epoch: int
    head_losses: dict[str, float]
    train_total: float
    val_total: float
    val_plant_acc: float | None
    val_disease_acc: float | None

    def row(self) -> list:
        fmt = lambda v: "" if v is None else repr(float(v))  # noqa: E731
        losses = [fmt(self.head_losses.get(c[len("loss_"):])) for c in LOSS_COLUMNS]
        return [self.epoch, *losses, fmt(self.train_total), fmt(self.val_total),
                fmt(self.val_plant_acc), fmt(self.val_disease_acc)]


@dataclass
class History:
    records: list[EpochRecord] = field(default_factory=list)
    best_epoch: int = 0
    stopped_epoch: int = 0

    def losses(self, head: str) -> list[float]:
        return [r.head_losses[head] for r in self.records]

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(HISTORY_FIELDS)
            for r in self.records:
                w.writerow(r.row())


# ---------------------------------------------------------------------------
# training loop


def evaluate_loss(model, split: Subset, batch_size: int = 64) -> float:
    """Sample-weighted mean of the model's total loss over a split, eval mode."""
    total, n = 0.0, 0
    for b in batches(split, batch_size, seed=0, epoch=0, shuffle=False):
        out = model.outputs(b.images, training=False)
        loss, _ = model.loss(out, model.make_truth(b.plant, b.disease))
        total += float(loss.data) * len(b.ids)
        n += len(b.ids)
    return total / n


def _accuracy(pred, true) -> float | None:
    return None if pred is None else float(np.mean(pred == true))


def fit(model, split: DatasetSplit, config: TrainConfig = TrainConfig(), weights: LossWeights | None = None,
        validate: Callable[[int], float] | None = None, on_epoch: Callable[[EpochRecord], None] | None = None) -> History:
    """Train ``model`` in place with Adamax and early stopping on total validation loss.

    ``weights`` overrides a Mo-DsCC model's balance weights.  ``validate``
    replaces the validation loss with a callable of the epoch number (used to
    drive the stopping rule directly).  ``on_epoch`` sees every epoch record and
    may return True to end training early.  Parameters and batch-norm statistics
    from the best validation epoch are restored before returning.
    """
    if weights is not None:
        if not hasattr(model, "weights"):
            raise ValueError(f"{type(model).__name__} has fixed loss weights")
        model.weights = weights
    if len(split.train) == 0:
        raise DataError("training split is empty")
    if validate is None and len(split.val) == 0:
        raise DataError("validation split is empty")
    store = model.store
    store.zero_grad()
    opt = Adamax(store.params, lr=config.learning_rate)
    stopper = EarlyStopping(config.patience, config.max_epochs)
    history = History()
    best_state = {k: v.copy() for k, v in store.state().items()}

    for epoch in range(1, config.max_epochs + 1):
        sums: dict[str, float] = {}
        total_sum, seen = 0.0, 0
        for b in batches(split.train, config.batch_size, config.seed, epoch):
            if len(b.ids) < 2:
                # batch norm cannot train on one sample; a trailing singleton batch is dropped
                continue
            with Tape() as tape:
                out = model.outputs(b.images, training=True)
                total, terms = model.loss(out, model.make_truth(b.plant, b.disease))
            tape.backward(total)
            opt.step()
            n = len(b.ids)
            seen += n
            total_sum += float(total.data) * n
            for head, t in terms.items():
                sums[head] = sums.get(head, 0.0) + float(t.data) * n
        head_losses = {h: s / seen for h, s in sums.items()}

        if validate is not None:
            val_total = float(validate(epoch))
            p_acc = d_acc = None
        else:
            val_total = evaluate_loss(model, split.val, config.eval_batch_size)
            p_pred, d_pred = model.predict(split.val.images, config.eval_batch_size)
            p_acc, d_acc = _accuracy(p_pred, split.val.plant), _accuracy(d_pred, split.val.disease)
        if not math.isfinite(val_total) or not math.isfinite(total_sum):
            raise FloatingPointError(f"non-finite loss at epoch {epoch}")
        rec = EpochRecord(epoch, head_losses, total_sum / seen, val_total, p_acc, d_acc)
        history.records.append(rec)
        requested = bool(on_epoch(rec)) if on_epoch is not None else False
        stop = stopper.update(epoch, val_total) or requested
        if stopper.improved_last:
            best_state = {k: v.copy() for k, v in store.state().items()}
        if stop:
            break

    history.best_epoch = stopper.best_epoch
    history.stopped_epoch = history.records[-1].epoch
    store.load_state(best_state)
    return history


# ---------------------------------------------------------------------------
# grid search


@dataclass
class GridResult:
    index: int
    weights: LossWeights
    val_total_f1: float
    val_plant_f1: float
    val_disease_f1: float
    best_epoch: int


def _grid_point(args) -> GridResult:
    from .models import MoDsCC

    index, w, split, backbone_cfg, head_cfg, config = args
    model = MoDsCC(backbone_cfg, head_cfg, w, seed=config.seed)
    hist = fit(model, split, config)
    p, d = model.predict(split.val.images, config.eval_batch_size)
    reps = task_reports(split.val.plant, p, split.val.disease, d, split.n_plant, split.n_disease)
    return GridResult(index, w, reps["Total"].macro_f1, reps["Plant"].macro_f1, reps["Disease"].macro_f1,
                      hist.best_epoch)


def grid_search(weight_grid: Sequence[LossWeights], split: DatasetSplit, backbone_cfg, head_cfg,
                config: TrainConfig = TrainConfig(), n_jobs: int = 1) -> list[GridResult]:
    """Train one identically seeded Mo-DsCC per weight vector; rank by validation Total macro-F1.

    Ties keep grid order.  Every grid point appears exactly once in the result.
    """
    grid = list(weight_grid)
    if not grid:
        raise ValueError("weight grid is empty")
    jobs = [(i, w, split, backbone_cfg, head_cfg, config) for i, w in enumerate(grid)]
    if n_jobs > 1:
        with ProcessPoolExecutor(max_workers=n_jobs) as ex:
            results = list(ex.map(_grid_point, jobs))
    else:
        results = [_grid_point(j) for j in jobs]
    return sorted(results, key=lambda r: (-r.val_total_f1, r.index))


def write_grid_csv(results: Sequence[GridResult], path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["rank", "grid_index", "weights", "val_total_f1", "val_plant_f1", "val_disease_f1", "best_epoch"])
        for rank, r in enumerate(results, 1):
            w.writerow([rank, r.index, str(r.weights), repr(r.val_total_f1), repr(r.val_plant_f1),
                        repr(r.val_disease_f1), r.best_epoch])


def weight_grid(values: Sequence[float] = (0.1, 0.4, 0.5), fixed: dict | None = None) -> list[LossWeights]:
    """Cartesian grid over the six balance weights (``fixed`` pins named ones)."""
    import itertools

    from .losses import WEIGHT_FIELDS

    fixed = fixed or {}
    axes = [[fixed[f]] if f in fixed else list(values) for f in WEIGHT_FIELDS]
    out = []
    for combo in itertools.product(*axes):
        if any(v > 0 for v in combo):
            out.append(LossWeights.of(combo))
    return out

