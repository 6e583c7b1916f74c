"""Epoch loop: seeded shuffling, per-epoch negative resampling, Adam
updates, per-epoch validation, early stopping, best-checkpoint retention.

Determinism contract: with a fixed (config, split, seed) the full epoch
history, every parameter trajectory, and all reported metrics reproduce
bit-for-bit on the same build.
"""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .autodiff import Tape, backward
from .checkpoint import save_checkpoint
from .data import SPLIT_VAL, SplitDataset, manifest_sha256
from .errors import ConfigError, DomainError, TrainingAborted
from .evaluation import evaluate
from .instances import (NUM_EVAL_NEGATIVES, TrainingInstance, make_eval_instances,
                        sample_training_negatives, training_targets)
from .model import LossBreakdown, ModelConfig, ModelState, init_state, total_loss
from .optim import adam_step, init_adam

log = logging.getLogger(__name__)

_SHUFFLE_STREAM = 0x5F


@dataclass
class EpochRecord:
    epoch: int
    loss: LossBreakdown  # batch-mean terms over the epoch
    val_ndcg10: float


@dataclass
class TrainRun:
    config: ModelConfig
    seed: int
    history: list[EpochRecord] = field(default_factory=list)
    best_epoch: int = 0
    best_val_ndcg10: float = float("-inf")
    stopped_early: bool = False
    checkpoint_path: str | None = None
    state: ModelState | None = None  # best parameters


def _epoch_mean(breakdowns: list[LossBreakdown]) -> LossBreakdown:
    n = len(breakdowns)
    return LossBreakdown(
        ranking=sum(b.ranking for b in breakdowns) / n,
        rule=sum(b.rule for b in breakdowns) / n,
        length=sum(b.length for b in breakdowns) / n,
        params=sum(b.params for b in breakdowns) / n,
        total=sum(b.total for b in breakdowns) / n,
        batch_size=sum(b.batch_size for b in breakdowns),
        rule_pairs=sum(b.rule_pairs for b in breakdowns),
    )


def train(config: ModelConfig, split: SplitDataset, seed: int,
          out_dir=None, num_eval_negatives: int = NUM_EVAL_NEGATIVES) -> TrainRun:
    """Train one model on the prepared split with one seed.

    Validation NDCG@10 is measured every epoch; training halts after
    ``config.patience`` epochs without improvement or at ``config.epochs``.
    The best-validation parameters are kept (and written to ``out_dir``
    when given). A non-finite loss aborts with the last best checkpoint
    retained on disk.
    """
    targets = training_targets(split, config.n_max)
    if not targets:
        raise ConfigError("train: split yields no training instances")
    val_instances = make_eval_instances(split, config.n_max, SPLIT_VAL, seed,
                                        num_negatives=num_eval_negatives)
    if not val_instances:
        raise ConfigError("train: split has no validation instances")

    manifest_hash = manifest_sha256(split.manifest)
    state = init_state(split.num_users, split.num_items, config, seed)
    trainable = state.trainable()
    adam = init_adam({k: t.data for k, t in trainable.items()}, lr=config.lr)
    run = TrainRun(config=config, seed=seed)
    ckpt_path = None if out_dir is None else str(Path(out_dir) / f"model_seed{seed}.ckpt")

    n_targets = len(targets)
    log.info("training: %d instances, %d validation targets, seed %d",
             n_targets, len(val_instances), seed)

    for epoch in range(1, config.epochs + 1):
        t0 = time.time()
        order = np.random.default_rng([seed, _SHUFFLE_STREAM, epoch]).permutation(n_targets)
        negatives = sample_training_negatives(split, targets, seed, epoch)
        batch_records: list[LossBreakdown] = []
        try:
            for start in range(0, n_targets, config.batch_size):
                idxs = order[start:start + config.batch_size]
                batch = [
                    TrainingInstance(targets[i].user, targets[i].hist_items,
                                     targets[i].hist_positive, targets[i].target,
                                     int(negatives[i]))
                    for i in idxs
                ]
                with Tape() as tape:
                    loss, breakdown = total_loss(batch, state, config)
                backward(loss, tape, params=trainable)
                grads = {k: t.grad for k, t in trainable.items()}
                new_arrays, adam = adam_step(
                    {k: t.data for k, t in trainable.items()}, grads, adam)
                state.set_arrays(new_arrays)
                batch_records.append(breakdown)
        except DomainError as exc:
            log.error("aborting at epoch %d: %s", epoch, exc)
            raise TrainingAborted(
                f"epoch {epoch}: {exc}; best checkpoint from epoch "
                f"{run.best_epoch} retained") from exc

        val_report = evaluate(state, val_instances, ks=(10,))
        val_ndcg = val_report.ndcg[10]
        run.history.append(EpochRecord(epoch, _epoch_mean(batch_records), val_ndcg))
        improved = val_ndcg > run.best_val_ndcg10
        if improved:
            run.best_val_ndcg10 = val_ndcg
            run.best_epoch = epoch
            run.state = state.copy()
            if ckpt_path is not None:
                save_checkpoint(run.state, ckpt_path, manifest_hash)
                run.checkpoint_path = ckpt_path
        log.info("epoch %d: loss %.4f  val NDCG@10 %.4f%s  (%.1fs)",
                 epoch, run.history[-1].loss.total, val_ndcg,
                 " *" if improved else "", time.time() - t0)
        if epoch - run.best_epoch >= config.patience:
            run.stopped_early = True
            log.info("early stop: no improvement for %d epochs", config.patience)
            break

    if run.state is None:  # no epoch improved over -inf: impossible, but keep safe
        run.state = state.copy()
    return run


def history_csv(run: TrainRun) -> str:
    lines = ["epoch,ranking,rule,length,params,total,val_ndcg10"]
    for rec in run.history:
        b = rec.loss
        lines.append(f"{rec.epoch},{b.ranking:.6f},{b.rule:.6f},{b.length:.6f},"
                     f"{b.params:.6f},{b.total:.6f},{rec.val_ndcg10:.6f}")
    return "\n".join(lines) + "\n"
