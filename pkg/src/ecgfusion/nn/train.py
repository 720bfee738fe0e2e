"""Training loop: Adam, validation-plateau LR schedule, best-checkpoint
selection.

The learning rate starts at the configured value and is divided by 10
whenever the validation metric fails to improve for ``plateau_epochs``
consecutive epochs; a validation pass before the first epoch sets the
baseline. The returned checkpoint is the parameter state at the best
validation metric seen.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

from .losses import task_loss
from .model import NetConfig, ResidualNet


@dataclass(frozen=True)
class TrainSchedule:
    lr: float = 1e-3
    batch_size: int = 256
    max_epochs: int = 100
    plateau_epochs: int = 5
    lr_factor: float = 0.1
    min_lr: float = 1e-7
    seed: int = 0
    stop_at: float | None = None   # early-stop once the metric reaches this


@dataclass
class TrainState:
    epoch: int = 0
    lr: float = 0.0
    best_metric: float = float("nan")
    best_epoch: int = 0
    since_improve: int = 0
    diverged: bool = False
    history: list[dict] = field(default_factory=list)


class Adam:
    """Adaptive-moment optimizer over the model's live parameter dict."""

    def __init__(self, params: dict[str, np.ndarray],
                 beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.params = params
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self.m = {k: np.zeros_like(v, dtype=np.float64) for k, v in params.items()}
        self.v = {k: np.zeros_like(v, dtype=np.float64) for k, v in params.items()}
        self.t = 0

    def step(self, grads: dict[str, np.ndarray], lr: float) -> None:
        self.t += 1
        b1c = 1.0 - self.beta1 ** self.t
        b2c = 1.0 - self.beta2 ** self.t
        for k, p in self.params.items():
            g = grads[k].astype(np.float64)
            self.m[k] = self.beta1 * self.m[k] + (1.0 - self.beta1) * g
            self.v[k] = self.beta2 * self.v[k] + (1.0 - self.beta2) * g * g
            update = lr * (self.m[k] / b1c) / (np.sqrt(self.v[k] / b2c) + self.eps)
            p -= update.astype(p.dtype)


@dataclass
class Batch:
    waves: np.ndarray
    targets: np.ndarray
    fe: np.ndarray | None = None

    def __len__(self) -> int:
        return self.waves.shape[0]

    def take(self, idx: np.ndarray) -> "Batch":
        return Batch(waves=self.waves[idx], targets=self.targets[idx],
                     fe=None if self.fe is None else self.fe[idx])


def predict_in_batches(net: ResidualNet, data: Batch,
                       batch_size: int = 512) -> np.ndarray:
    outs = []
    for lo in range(0, len(data), batch_size):
        sl = slice(lo, lo + batch_size)
        fe = None if data.fe is None else data.fe[sl]
        outs.append(net.forward(data.waves[sl], fe=fe, train=False))
    return np.concatenate(outs, axis=0)


def train_model(net: ResidualNet, train_data: Batch, val_data: Batch,
                schedule: TrainSchedule,
                metric_fn: Callable[[np.ndarray, np.ndarray], float],
                greater_is_better: bool = True,
                class_weights: tuple[np.ndarray, np.ndarray] | None = None,
                ) -> tuple[TrainState, dict[str, np.ndarray]]:
    """Returns (state, best checkpoint state_dict).

    ``metric_fn(outputs, targets) -> float`` is evaluated on the validation
    set after every epoch; improvement means strictly better in the metric's
    own direction.
    """
    rng = np.random.default_rng(schedule.seed)
    optimizer = Adam(net.params())
    state = TrainState(lr=schedule.lr)
    task = net.config.task

    def val_metric() -> float:
        return float(metric_fn(predict_in_batches(net, val_data), val_data.targets))

    def better(a: float, b: float) -> bool:
        return a > b if greater_is_better else a < b

    state.best_metric = val_metric()
    best_state = net.state_dict()
    n = len(train_data)

    for epoch in range(1, schedule.max_epochs + 1):
        state.epoch = epoch
        order = rng.permutation(n)
        losses = []
        finite = True
        for lo in range(0, n, schedule.batch_size):
            batch = train_data.take(order[lo:lo + schedule.batch_size])
            try:
                out = net.forward(batch.waves, fe=batch.fe, train=True, rng=rng)
            except FloatingPointError:
                finite = False
                break
            loss, dout = task_loss(task, out, batch.targets, class_weights)
            if not np.isfinite(loss):
                finite = False
                break
            net.backward(dout)
            optimizer.step(net.grads(), state.lr)
            losses.append(loss)
        if not finite:
            state.diverged = True
            net.load_state(best_state)
            break

        metric = val_metric()
        state.history.append({"epoch": epoch,
                              "train_loss": float(np.mean(losses)),
                              "val_metric": metric, "lr": state.lr})
        if better(metric, state.best_metric):
            state.best_metric = metric
            state.best_epoch = epoch
            state.since_improve = 0
            best_state = net.state_dict()
            if schedule.stop_at is not None and not better(schedule.stop_at,
                                                           metric):
                break
        else:
            state.since_improve += 1
            if state.since_improve >= schedule.plateau_epochs:
                state.lr = state.lr * schedule.lr_factor
                state.since_improve = 0
                if state.lr < schedule.min_lr:
                    break
    return state, best_state


def export_history_csv(state: TrainState, path: Path | str) -> Path:
    path = Path(path)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.DictWriter(fh, fieldnames=["epoch", "train_loss",
                                                "val_metric", "lr"])
        writer.writeheader()
        for row in state.history:
            writer.writerow(row)
    return path


def gradients(config: NetConfig, params: dict[str, np.ndarray], waves: np.ndarray,
              targets: np.ndarray, fe: np.ndarray | None = None,
              class_weights: tuple[np.ndarray, np.ndarray] | None = None,
              dtype=np.float64, seed: int = 0,
              ) -> tuple[float, dict[str, np.ndarray]]:
    """Loss and analytic parameter gradients for one batch (train mode)."""
    net = ResidualNet(config, seed=0, dtype=dtype)
    net.load_state(params)
    out = net.forward(waves, fe=fe, train=True, rng=np.random.default_rng(seed))
    loss, dout = task_loss(config.task, out, targets, class_weights)
    net.backward(dout)
    return loss, {k: v.copy() for k, v in net.grads().items()}
