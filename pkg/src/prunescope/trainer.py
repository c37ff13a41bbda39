"""SGD with momentum, weight decay, and a step-decay learning-rate schedule.

A train call owns its optimizer state and is fully deterministic given the
hyperparameters: data order comes from (seed, epoch)-keyed permutations and
every update keeps pruned coordinates exactly zero. The returned record also
carries the rewind-point snapshot that iterative pruning restarts from.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numpy as np

from .autodiff import grad
from .data import Dataset, epoch_batches
from .errors import DivergenceError
from .model import LossContext, accuracy_on, apply_mask
from .numerics import RngStream

DIVERGENCE_CAP = 1e6

# stream_id role for minibatch shuffling (keyed further by epoch)
SHUFFLE_STREAM = 0x5487FF1E


@dataclass(frozen=True)
class Hyperparams:
    epochs: int
    batch_size: int
    lr0: float
    momentum: float
    weight_decay: float
    decay_epochs: tuple[int, ...]
    decay_factor: float
    rewind_step: int
    seed: int

    def __post_init__(self):
        if self.lr0 <= 0:
            raise ValueError("lr0 must be positive")
        if not 0.0 <= self.momentum < 1.0:
            raise ValueError("momentum must lie in [0, 1)")
        if self.weight_decay < 0:
            raise ValueError("weight_decay must be nonnegative")
        de = tuple(int(e) for e in self.decay_epochs)
        if any(b >= self.epochs for b in de) or list(de) != sorted(set(de)):
            raise ValueError("decay_epochs must be strictly increasing and < epochs")
        if self.rewind_step < 0:
            raise ValueError("rewind_step must be nonnegative")
        object.__setattr__(self, "decay_epochs", de)


@dataclass
class TrainRecord:
    """Per-epoch metrics plus optional parameter snapshots."""

    train_loss: list[float] = field(default_factory=list)
    test_acc: list[float] = field(default_factory=list)
    steps: int = 0
    wall_time: float = 0.0
    epoch_params: list[np.ndarray] | None = None


def lr_at(hp: Hyperparams, step: int, steps_per_epoch: int) -> float:
    """Learning rate at a global optimizer step.

    The rate drops by decay_factor at the first step of each decay epoch, so
    it only depends on which epoch the step falls in.
    """
    epoch = step // steps_per_epoch
    passed = sum(1 for boundary in hp.decay_epochs if epoch >= boundary)
    return hp.lr0 * hp.decay_factor**passed


def train(
    ctx: LossContext,
    test: Dataset,
    start: np.ndarray,
    mask: np.ndarray,
    hp: Hyperparams,
    schedule_offset: int = 0,
    record_snapshots: bool = False,
) -> tuple[np.ndarray, np.ndarray, TrainRecord]:
    """Run SGD from ``start`` under ``mask``; returns (final, rewind, record).

    ``schedule_offset`` shifts the learning-rate schedule, which is how
    learning-rate rewinding and weight rewinding resume mid-schedule. The
    rewind snapshot is the parameter vector after ``hp.rewind_step`` steps
    (it equals the final vector when training ends first).
    """
    t0 = time.perf_counter()
    steps_per_epoch = math.ceil(ctx.n / hp.batch_size)
    w = apply_mask(start, mask)
    velocity = np.zeros_like(w)
    test_ctx = LossContext(ctx.spec, test.features, test.labels)
    shuffle = RngStream(hp.seed, SHUFFLE_STREAM)
    record = TrainRecord(epoch_params=[] if record_snapshots else None)
    rewind = w.copy() if hp.rewind_step == 0 else None
    step = 0

    for epoch in range(hp.epochs):
        loss_sum = 0.0
        for batch_idx in epoch_batches(ctx.n, hp.batch_size, epoch, shuffle):
            batch_ctx = LossContext(
                ctx.spec, ctx.features[batch_idx], ctx.labels[batch_idx]
            )
            result = grad(batch_ctx, w, mask)
            if not math.isfinite(result.loss) or result.loss > DIVERGENCE_CAP:
                raise DivergenceError(
                    f"training diverged at step {step} (loss={result.loss})", step
                )
            update = result.gradient + hp.weight_decay * w
            velocity = hp.momentum * velocity + update
            w = w - lr_at(hp, schedule_offset + step, steps_per_epoch) * velocity
            w *= mask  # pruned coordinates stay exactly zero
            step += 1
            loss_sum += result.loss * batch_idx.size
            if step == hp.rewind_step:
                rewind = w.copy()
        record.train_loss.append(loss_sum / ctx.n)
        record.test_acc.append(accuracy_on(test_ctx, w, mask))
        if record.epoch_params is not None:
            record.epoch_params.append(w.copy())

    record.steps = step
    record.wall_time = time.perf_counter() - t0
    if rewind is None:
        rewind = w.copy()
    return w, rewind, record
