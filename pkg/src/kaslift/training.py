"""Position/velocity losses and the training loop."""

from __future__ import annotations

import logging
import math
from collections.abc import Callable, Sequence
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import autograd as ag
from .autograd import Tensor
from .config import ModelConfig, TrainConfig
from .kinematics import LimbTable
from .metrics import mpjpe
from .model import default_tables, forward_batch, init_params
from .optim import ParameterStore, adamw_step, lr_schedule
from .skeleton import ClipPair, SkeletonTopology, flip_array

log = logging.getLogger(__name__)


class DivergenceError(FloatingPointError):
    def __init__(self, epoch: int, batch: int, value: float):
        super().__init__(f"non-finite loss {value} at epoch {epoch}, batch {batch}")
        self.epoch, self.batch = epoch, batch


def _tensors(pred, gt) -> tuple[Tensor, np.ndarray]:
    pred = ag.as_tensor(pred.data if hasattr(pred, "frames") else pred)
    gt = np.asarray(gt.data if hasattr(gt, "frames") else gt, dtype=np.float64)
    if pred.shape != gt.shape:
        raise ValueError(f"shape mismatch: pred {pred.shape} vs gt {gt.shape}")
    return pred, gt


def loss_pose(pred, gt) -> Tensor:
    """Sum over frames and joints of the per-joint Euclidean error."""
    pred, gt = _tensors(pred, gt)
    return ag.tsum(ag.norm(ag.sub(pred, gt), axis=-1))


def loss_velocity(pred, gt) -> Tensor:
    """Sum over t >= 2 and joints of the Euclidean error of frame differences."""
    pred, gt = _tensors(pred, gt)
    T = pred.shape[-3]
    if T < 2:
        return Tensor(0.0)
    later = (Ellipsis, slice(1, T), slice(None), slice(None))
    earlier = (Ellipsis, slice(0, T - 1), slice(None), slice(None))
    dp = ag.sub(ag.getitem(pred, later), ag.getitem(pred, earlier))
    dg = gt[later] - gt[earlier]
    return ag.tsum(ag.norm(ag.sub(dp, dg), axis=-1))


def total_loss(pred, gt, lambda_v: float) -> Tensor:
    return ag.add(loss_pose(pred, gt), ag.mul(loss_velocity(pred, gt), lambda_v))


def batch_loss(pred: Tensor, gt: np.ndarray, lambda_v: float) -> Tensor:
    """Mean over clips of the per-clip summed loss, for ``(B, T, J, 3)`` batches."""
    return ag.mul(total_loss(pred, gt, lambda_v), 1.0 / pred.shape[0])


class EarlyStopping:
    """Signals a stop once the metric has not improved for ``patience`` consecutive epochs."""

    def __init__(self, patience: int):
        self.patience = patience
        self.best = math.inf
        self.best_epoch = -1
        self.bad = 0

    def update(self, epoch: int, metric: float) -> bool:
        if metric < self.best:
            self.best, self.best_epoch, self.bad = metric, epoch, 0
        else:
            self.bad += 1
        return self.bad >= self.patience


@dataclass
class EpochRecord:
    epoch: int
    train_loss: float
    eval_mpjpe: float
    lr: float


def history_csv(history: Sequence[EpochRecord]) -> str:
    return "".join(f"{r.epoch},{r.train_loss!r},{r.eval_mpjpe!r},{r.lr!r}\n" for r in history)


def write_history(path: str | Path, history: Sequence[EpochRecord]) -> None:
    Path(path).write_text(history_csv(history), encoding="utf-8")


def stack_pairs(pairs: Sequence[ClipPair], topo: SkeletonTopology) -> tuple[np.ndarray, np.ndarray]:
    """(2D inputs, root-centred 3D targets) stacked to ``(N, T, J, 3)``."""
    x = np.stack([p.pose2d.data for p in pairs])
    y = np.stack([p.pose3d.data for p in pairs])
    return x, y - y[:, :, topo.root:topo.root + 1, :]


def predict(x2d: np.ndarray, params: ParameterStore, config: ModelConfig, topo: SkeletonTopology,
            table: LimbTable, batch_size: int = 16) -> np.ndarray:
    """Root-centred predictions for a stack of 2D inputs (no gradient tracking)."""
    outs = []
    for i in range(0, len(x2d), batch_size):
        out = forward_batch(x2d[i:i + batch_size], params, config, topo, table).data
        outs.append(out - out[:, :, topo.root:topo.root + 1, :])
    return np.concatenate(outs)


def evaluate_mpjpe(pairs: Sequence[ClipPair], params: ParameterStore, config: ModelConfig,
                   topo: SkeletonTopology, table: LimbTable) -> float:
    x, y = stack_pairs(pairs, topo)
    return mpjpe(predict(x, params, config, topo, table), y)


def _check_pairs(pairs: Sequence[ClipPair], frames: int, what: str):
    for k, p in enumerate(pairs):
        if p.pose2d is None or p.pose3d is None:
            raise ValueError(f"{what} clip {k} lacks a 2D input or 3D target")
        if p.pose2d.frames != frames or p.pose3d.frames != frames:
            raise ValueError(f"{what} clip {k} has {p.pose2d.frames} frames, expected {frames}")


def fit(train_clips: Sequence[ClipPair], eval_clips: Sequence[ClipPair] | None,
        model_config: ModelConfig, train_config: TrainConfig, *,
        topo: SkeletonTopology | None = None, table: LimbTable | None = None,
        params: ParameterStore | None = None,
        evaluate: Callable[[ParameterStore], float] | None = None,
        stop_below: float | None = None) -> tuple[ParameterStore, list[EpochRecord]]:
    """Train and return the best-eval parameters plus the per-epoch history.

    ``eval_clips=None`` evaluates on the training clips.  ``evaluate``
    overrides the eval metric (mpjpe in mm by default).  ``stop_below``
    ends training as soon as the eval metric drops under that value.
    """
    if not train_clips:
        raise ValueError("empty training set")
    if topo is None or table is None:
        topo, table = default_tables(model_config)
    T = model_config.frames
    _check_pairs(train_clips, T, "train")
    if eval_clips is None:
        eval_clips = train_clips
    _check_pairs(eval_clips, T, "eval")
    tc = train_config
    rng = np.random.default_rng(tc.seed)
    store = params if params is not None else init_params(model_config, table, seed=tc.seed)
    if evaluate is None:
        evaluate = lambda s: evaluate_mpjpe(eval_clips, s, model_config, topo, table)
    x_all, y_all = stack_pairs(train_clips, topo)

    stopper = EarlyStopping(tc.early_stop_patience)
    history: list[EpochRecord] = []
    evals: list[float] = []
    best = store.copy()
    steps = 0
    for epoch in range(tc.epochs):
        lr = lr_schedule(epoch, evals, base_lr=tc.lr, warmup_start=tc.warmup_start_lr,
                         warmup_epochs=tc.warmup_epochs, factor=tc.lr_decay, patience=tc.lr_patience)
        order = rng.permutation(len(x_all))
        flips = rng.random(len(x_all)) < tc.flip_prob if tc.flip_augment else np.zeros(len(x_all), bool)
        losses = []
        for b, start in enumerate(range(0, len(order), tc.batch_size)):
            idx = order[start:start + tc.batch_size]
            x, y = x_all[idx].copy(), y_all[idx].copy()
            f = flips[idx]
            if f.any():
                x[f] = flip_array(x[f], topo)
                y[f] = flip_array(y[f], topo)
            pred = forward_batch(x, store, model_config, topo, table)
            loss = batch_loss(pred, y, model_config.lambda_v)
            value = float(loss.data)
            if not math.isfinite(value):
                raise DivergenceError(epoch, b, value)
            store.zero_grad()
            loss.backward()
            adamw_step(store, lr, tc.weight_decay, (tc.beta1, tc.beta2), tc.adam_eps)
            losses.append(value)
            steps += 1
            if tc.max_steps and steps >= tc.max_steps:
                break
        metric = float(evaluate(store))
        evals.append(metric)
        history.append(EpochRecord(epoch, float(np.mean(losses)), metric, lr))
        log.info("epoch %d loss %.4f eval %.3f lr %.3g", epoch, history[-1].train_loss, metric, lr)
        stop = stopper.update(epoch, metric)
        if stopper.best_epoch == epoch:
            best = store.copy()
        if stop or (stop_below is not None and metric < stop_below):
            break
        if tc.max_steps and steps >= tc.max_steps:
            break
    return best, history
