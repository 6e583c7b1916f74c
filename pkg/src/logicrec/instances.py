"""Training and evaluation instances drawn from a split dataset.

Every random draw comes from an independent, purpose-keyed RNG stream
seeded as (seed, purpose, user[, epoch]), so results are reproducible
bit-for-bit and independent of iteration or worker order. Training
negatives are resampled each epoch; evaluation candidate sets are fixed
per (seed, split).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data import SPLIT_TEST, SPLIT_TRAIN, SPLIT_VAL, SplitDataset
from .errors import ConfigError, ContractError

_PURPOSE_TRAIN_NEG = 0xA1
_PURPOSE_EVAL = {SPLIT_VAL: 0xE1, SPLIT_TEST: 0xE2}

NUM_EVAL_NEGATIVES = 100


@dataclass(frozen=True)
class TrainingTarget:
    """A positive training event with its preceding history window."""
    user: int
    hist_items: tuple[int, ...]
    hist_positive: tuple[bool, ...]
    target: int


@dataclass(frozen=True)
class TrainingInstance:
    user: int
    hist_items: tuple[int, ...]
    hist_positive: tuple[bool, ...]
    target: int
    negative: int


@dataclass(frozen=True)
class EvalInstance:
    """A held-out target plus its fixed 101-candidate ranking slate.

    ``candidates[0]`` is always the target; the remaining entries are the
    sampled negatives.
    """
    user: int
    hist_items: tuple[int, ...]
    hist_positive: tuple[bool, ...]
    target: int
    candidates: tuple[int, ...]


def _history(split: SplitDataset, user: int, idx: int, n_max: int):
    lo = max(0, idx - n_max)
    items = tuple(int(v) for v in split.corpus.items[user][lo:idx])
    pos = tuple(bool(b) for b in split.corpus.positive[user][lo:idx])
    return items, pos


def training_targets(split: SplitDataset, n_max: int) -> list[TrainingTarget]:
    """One target per positive train event that has at least one predecessor.

    The history window is the up-to-``n_max`` events immediately before the
    target, any polarity, in chronological order.
    """
    if n_max < 1:
        raise ContractError(f"n_max must be >= 1, got {n_max}")
    out: list[TrainingTarget] = []
    for u in range(split.num_users):
        codes = split.assign[u]
        pos = split.corpus.positive[u]
        for idx in range(1, len(codes)):
            if codes[idx] == SPLIT_TRAIN and pos[idx]:
                items, pols = _history(split, u, idx, n_max)
                out.append(TrainingTarget(u, items, pols, int(split.corpus.items[u][idx])))
    return out


def sample_training_negatives(split: SplitDataset, targets: list[TrainingTarget],
                              seed: int, epoch: int) -> np.ndarray:
    """Uniform negatives over items the user never interacted with positively.

    One stream per (seed, user, epoch); instances of the same user consume
    the stream in chronological target order.
    """
    num_items = split.num_items
    pos_sets: dict[int, frozenset[int]] = {}
    rngs: dict[int, np.random.Generator] = {}
    negatives = np.empty(len(targets), dtype=np.int64)
    for k, tgt in enumerate(targets):
        u = tgt.user
        user_pos = pos_sets.get(u)
        if user_pos is None:
            user_pos = frozenset(int(v) for v in split.positive_items(u))
            pos_sets[u] = user_pos
            if len(user_pos) >= num_items:
                raise ConfigError(
                    f"user {split.corpus.user_raw[u]} interacted positively with "
                    "every item; cannot sample a negative")
            rngs[u] = np.random.default_rng([seed, _PURPOSE_TRAIN_NEG, u, epoch])
        rng = rngs[u]
        while True:
            cand = int(rng.integers(num_items))
            if cand not in user_pos:
                negatives[k] = cand
                break
    return negatives


def make_training_instances(split: SplitDataset, n_max: int, seed: int,
                            epoch: int = 0) -> list[TrainingInstance]:
    """Targets paired with this epoch's sampled negatives."""
    targets = training_targets(split, n_max)
    negs = sample_training_negatives(split, targets, seed, epoch)
    return [
        TrainingInstance(t.user, t.hist_items, t.hist_positive, t.target, int(n))
        for t, n in zip(targets, negs)
    ]


def make_eval_instances(split: SplitDataset, n_max: int, which: int, seed: int,
                        num_negatives: int = NUM_EVAL_NEGATIVES) -> list[EvalInstance]:
    """Fixed candidate slates for every held-out event in one split.

    ``which`` is SPLIT_VAL or SPLIT_TEST. Candidates are the target plus
    ``num_negatives`` items drawn without replacement from items the user
    rated negatively or never touched; the slate never contains another
    positively-rated item of the user.
    """
    if which not in _PURPOSE_EVAL:
        raise ContractError(f"which must be SPLIT_VAL or SPLIT_TEST, got {which}")
    if n_max < 1:
        raise ContractError(f"n_max must be >= 1, got {n_max}")
    purpose = _PURPOSE_EVAL[which]
    all_items = np.arange(split.num_items, dtype=np.int64)
    out: list[EvalInstance] = []
    for u in range(split.num_users):
        idxs = np.nonzero(split.assign[u] == which)[0]
        if idxs.size == 0:
            continue
        pool = np.setdiff1d(all_items, split.positive_items(u), assume_unique=True)
        if pool.size < num_negatives:
            raise ConfigError(
                f"user {split.corpus.user_raw[u]} has only {pool.size} candidate "
                f"negatives, need {num_negatives}")
        rng = np.random.default_rng([seed, purpose, u])
        for idx in idxs:
            items, pols = _history(split, u, int(idx), n_max)
            target = int(split.corpus.items[u][idx])
            negs = rng.choice(pool, size=num_negatives, replace=False)
            out.append(EvalInstance(
                user=u, hist_items=items, hist_positive=pols, target=target,
                candidates=(target,) + tuple(int(v) for v in negs),
            ))
    return out
