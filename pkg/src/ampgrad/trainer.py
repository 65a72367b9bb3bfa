"""Phased SGD training with per-phase gradient amplification."""
from __future__ import annotations

import contextlib
import math
import time
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from . import amplification as amp
from .autograd import backward, hooks_disabled, no_grad, sgd_step
from .checkpoint import save_checkpoint
from .data import Dataset, augment_batch
from .errors import NumericError
from .metrics import MetricsRecord
from .schedule import Schedule, phase_bounds

SHUFFLE_DOMAIN = 0x53485546


@dataclass
class AmpOptions:
    layer_types: object = ("BatchNorm",)
    amp_point: str = "input_side"
    scale_own_params: bool = True
    block_bn: str = "first"
    include_downsample_bn: bool = False
    # False runs every backward pass with the multipliers ignored
    hooks: bool = True


@dataclass
class TrainOptions:
    batch_size: int = 128
    eval_batch_size: int = 500
    augment_flip: bool = False
    augment_crop: int = 0
    amp: AmpOptions = field(default_factory=AmpOptions)


def epoch_rng(seed: int, epoch: int) -> np.random.Generator:
    ss = np.random.SeedSequence(entropy=[SHUFFLE_DOMAIN, int(seed)], spawn_key=(int(epoch),))
    return np.random.Generator(np.random.PCG64(ss))


def batch_indices(n: int, batch_size: int, seed: int, epoch: int) -> list:
    """Shuffled mini-batches for one epoch; a trailing batch of one sample is dropped (BN needs two)."""
    perm = epoch_rng(seed, epoch).permutation(n)
    batches = [perm[i:i + batch_size] for i in range(0, n, batch_size)]
    if len(batches) > 1 and len(batches[-1]) < 2:
        batches.pop()
    return batches


def evaluate(model, test_set: Dataset, batch_size: int = 500) -> float:
    """Top-1 accuracy in percent with BN running statistics; leaves the model untouched."""
    if len(test_set) == 0:
        raise ValueError("cannot evaluate on an empty test set")
    correct = 0
    with no_grad():
        for i in range(0, len(test_set), batch_size):
            x = test_set.images[i:i + batch_size]
            pred = model.forward(x, training=False).data.argmax(axis=1)
            correct += int((pred == test_set.labels[i:i + batch_size]).sum())
    return 100.0 * correct / len(test_set)


class Trainer:
    """Runs a :class:`Schedule` on one model.

    After :meth:`fit`, ``records`` holds one MetricsRecord per epoch and
    ``selections`` the layer draw of every amplified phase.
    """

    def __init__(self, model, options: Optional[TrainOptions] = None,
                 checkpoint_path=None, on_epoch_end: Optional[Callable] = None):
        self.model = model
        self.options = options or TrainOptions()
        self.checkpoint_path = checkpoint_path
        self.on_epoch_end = on_epoch_end
        self.records: list = []
        self.selections: list = []

    def _step(self, x, y, lr: float) -> tuple:
        model, ao = self.model, self.options.amp
        logits = model.forward(x, training=True)
        loss = model.loss(logits, y)
        value = float(loss.data)
        if not math.isfinite(value):
            return value, None
        ctx = contextlib.nullcontext() if ao.hooks else hooks_disabled()
        with ctx:
            grads = backward(loss, amp_point=ao.amp_point, scale_own_params=ao.scale_own_params)
        sgd_step(model.parameters(), grads, lr)
        return value, int((logits.data.argmax(axis=1) == y).sum())

    def _run_epoch(self, train_set: Dataset, seed: int, epoch: int, phase: int, lr: float) -> tuple:
        opts = self.options
        total_loss, correct, seen = 0.0, 0, 0
        aug_rng = epoch_rng(seed + 1, epoch) if (opts.augment_flip or opts.augment_crop) else None
        for step, idx in enumerate(batch_indices(len(train_set), opts.batch_size, seed, epoch)):
            x = train_set.images[idx]
            if aug_rng is not None:
                x = augment_batch(x, aug_rng, opts.augment_flip, opts.augment_crop)
            y = train_set.labels[idx]
            loss, hits = self._step(x, y, lr)
            if hits is None:
                where = ""
                if self.checkpoint_path is not None:
                    save_checkpoint(self.model, self.checkpoint_path)
                    where = f"; last good parameters saved to {self.checkpoint_path}"
                raise NumericError(
                    f"non-finite loss {loss} at epoch {epoch} (phase {phase}), step {step}, "
                    f"lr {lr}, amplified layers {amp.amplified_layers(self.model)}{where}")
            total_loss += loss * len(idx)
            correct += hits
            seen += len(idx)
        return total_loss / seen, 100.0 * correct / seen

    def fit(self, schedule: Schedule, train_set: Dataset, test_set: Dataset, seed: int) -> list:
        if len(train_set) == 0:
            raise ValueError("empty training set")
        model, ao = self.model, self.options.amp
        amp.remove_amplification(model)
        for phase, first, last, p in phase_bounds(schedule):
            if p.beta > 0:
                sel = amp.get_gradient_amp_layers(
                    model, p.beta, ao.layer_types, seed, gamma=p.gamma, stream=phase,
                    block_bn=ao.block_bn, include_downsample_bn=ao.include_downsample_bn)
                amp.apply_amplification(model, sel)
                self.selections.append(sel)
            for epoch in range(first, last + 1):
                t0 = time.perf_counter()
                loss, train_acc = self._run_epoch(train_set, seed, epoch, phase, p.lr)
                wall_ms = (time.perf_counter() - t0) * 1e3
                test_acc = evaluate(model, test_set, self.options.eval_batch_size)
                rec = MetricsRecord(epoch, phase, p.lr, p.beta, p.gamma, loss, train_acc,
                                    test_acc, wall_ms, seed, phase_end=(epoch == last))
                self.records.append(rec)
                if self.on_epoch_end is not None:
                    self.on_epoch_end(rec, model)
            amp.remove_amplification(model)
        if self.checkpoint_path is not None:
            save_checkpoint(model, self.checkpoint_path)
        return self.records


def train(model, schedule: Schedule, train_set: Dataset, test_set: Dataset, seed: int,
          batch_size: int = 128, **kwargs) -> list:
    """Train ``model`` through every phase of ``schedule``; returns one record per epoch.

    Keyword arguments are those of :class:`AmpOptions` plus ``checkpoint_path``
    and ``on_epoch_end(record, model)``.
    """
    trainer_kw = {k: kwargs.pop(k) for k in ("checkpoint_path", "on_epoch_end") if k in kwargs}
    options = TrainOptions(batch_size=batch_size, amp=AmpOptions(**kwargs))
    return Trainer(model, options, **trainer_kw).fit(schedule, train_set, test_set, seed)
