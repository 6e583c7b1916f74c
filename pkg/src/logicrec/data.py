"""Dataset ingestion: raw files to binarized chronological user sequences.

Supported inputs are the MovieLens-100k ``u.data`` layout (tab-separated
user / item / rating / timestamp) and Amazon 5-core review dumps (one JSON
object per line). Ratings at or above a threshold are positive
interactions, the rest negative. Dense ids are assigned in first-appearance
order and persisted next to the prepared data so checkpoints stay
interpretable.

The prepared-dataset directory is plain UTF-8 text plus a JSON manifest:

    interactions.tsv   dense_user <tab> dense_item <tab> polarity <tab> timestamp
    users.map          raw_id <tab> dense_id
    items.map          raw_id <tab> dense_id
    split.tsv          dense_user <tab> event_ordinal <tab> train|validation|test
    manifest.json      threshold, seed, source checksum, counts

Writing is deterministic: identical inputs reproduce byte-identical files.
"""

from __future__ import annotations

import hashlib
import io
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Iterator, NamedTuple

import numpy as np

from .errors import ConfigError, ContractError

log = logging.getLogger(__name__)

FORMATS = ("ml100k", "amazon5core")
RATING_SCALE = (1.0, 5.0)
DEFAULT_THRESHOLD = 4.0

SPLIT_TRAIN, SPLIT_VAL, SPLIT_TEST = 0, 1, 2
SPLIT_NAMES = {SPLIT_TRAIN: "train", SPLIT_VAL: "validation", SPLIT_TEST: "test"}
SPLIT_CODES = {v: k for k, v in SPLIT_NAMES.items()}

MANIFEST_VERSION = 1
_MAX_WARNINGS = 20


@dataclass(frozen=True)
class RawInteraction:
    user_id: str
    item_id: str
    rating: float
    timestamp: int


@dataclass
class ParseStats:
    lines: int = 0
    parsed: int = 0
    skipped: int = 0
    sha256: str = ""
    warnings: list[str] = field(default_factory=list)

    def warn(self, msg: str) -> None:
        self.skipped += 1
        if len(self.warnings) < _MAX_WARNINGS:
            self.warnings.append(msg)
        log.warning("%s", msg)


class Event(NamedTuple):
    item: int
    positive: bool
    timestamp: int


@dataclass
class Corpus:
    """Binarized per-user chronological event sequences with id maps."""
    user_raw: list[str]
    item_raw: list[str]
    items: list[np.ndarray]    # per user, int64, chronological
    positive: list[np.ndarray]  # per user, bool
    timestamps: list[np.ndarray]  # per user, int64
    meta: dict

    @property
    def num_users(self) -> int:
        return len(self.user_raw)

    @property
    def num_items(self) -> int:
        return len(self.item_raw)

    @property
    def num_interactions(self) -> int:
        return int(sum(len(a) for a in self.items))

    def density(self) -> float:
        denom = self.num_users * self.num_items
        return self.num_interactions / denom if denom else 0.0


def _iter_lines(source) -> Iterator[bytes]:
    if isinstance(source, (str, Path)):
        with open(source, "rb") as fh:
            yield from fh
    elif isinstance(source, bytes):
        yield from io.BytesIO(source)
    elif hasattr(source, "read"):
        for line in source:
            yield line if isinstance(line, bytes) else line.encode("utf-8")
    else:
        for line in source:
            yield line if isinstance(line, bytes) else str(line).encode("utf-8")


def _parse_ml100k_line(text: str) -> RawInteraction | None:
    parts = text.split("\t")
    if len(parts) != 4:
        return None
    user, item, rating_s, ts_s = (p.strip() for p in parts)
    if not user or not item:
        return None
    try:
        rating = float(rating_s)
        ts = int(ts_s)
    except ValueError:
        return None
    if ts < 0 or not (RATING_SCALE[0] <= rating <= RATING_SCALE[1]):
        return None
    return RawInteraction(user, item, rating, ts)


def _parse_amazon_line(text: str) -> RawInteraction | None:
    try:
        obj = json.loads(text)
    except json.JSONDecodeError:
        return None
    if not isinstance(obj, dict):
        return None
    try:
        user = str(obj["reviewerID"])
        item = str(obj["asin"])
        rating = float(obj["overall"])
        ts = int(obj["unixReviewTime"])
    except (KeyError, TypeError, ValueError):
        return None
    if ts < 0 or not (RATING_SCALE[0] <= rating <= RATING_SCALE[1]):
        return None
    return RawInteraction(user, item, rating, ts)


def parse_dataset(fmt: str, source) -> tuple[list[RawInteraction], ParseStats]:
    """Parse a raw dataset into interactions, preserving file order.

    Malformed lines are skipped with a recorded warning; blank lines are
    ignored. ``source`` may be a path, bytes, a binary stream, or an
    iterable of lines. Unreadable paths raise the underlying I/O error.
    """
    if fmt not in FORMATS:
        raise ContractError(f"parse_dataset: unknown format {fmt!r}, expected one of {FORMATS}")
    line_parser = _parse_ml100k_line if fmt == "ml100k" else _parse_amazon_line
    stats = ParseStats()
    out: list[RawInteraction] = []
    hasher = hashlib.sha256()
    for raw_line in _iter_lines(source):
        hasher.update(raw_line)
        stats.lines += 1
        text = raw_line.decode("utf-8", errors="replace").rstrip("\r\n")
        if not text.strip():
            continue
        rec = line_parser(text)
        if rec is None:
            stats.warn(f"{fmt}: skipping malformed line {stats.lines}: {text[:80]!r}")
            continue
        out.append(rec)
        stats.parsed += 1
    stats.sha256 = hasher.hexdigest()
    return out, stats


def binarize_and_sequence(raw: Iterable[RawInteraction], threshold: float = DEFAULT_THRESHOLD,
                          dedupe: bool = False) -> Corpus:
    """Binarize ratings at ``threshold`` and build chronological sequences.

    Polarity is positive iff rating >= threshold. Events are sorted per
    user by timestamp with file order as the stable tiebreak. When
    ``dedupe`` is set, repeated (item, timestamp) pairs keep only their
    first occurrence; by default duplicates are kept.
    """
    if not (RATING_SCALE[0] <= threshold <= RATING_SCALE[1]):
        raise ContractError(f"threshold {threshold} outside rating scale {RATING_SCALE}")
    user_ids: dict[str, int] = {}
    item_ids: dict[str, int] = {}
    per_user: list[list[Event]] = []
    for rec in raw:
        u = user_ids.setdefault(rec.user_id, len(user_ids))
        if u == len(per_user):
            per_user.append([])
        i = item_ids.setdefault(rec.item_id, len(item_ids))
        per_user[u].append(Event(i, rec.rating >= threshold, rec.timestamp))

    items: list[np.ndarray] = []
    positive: list[np.ndarray] = []
    timestamps: list[np.ndarray] = []
    for events in per_user:
        events.sort(key=lambda e: e.timestamp)  # stable: ties keep file order
        if dedupe:
            seen: set[tuple[int, int]] = set()
            kept = []
            for ev in events:
                key = (ev.item, ev.timestamp)
                if key in seen:
                    continue
                seen.add(key)
                kept.append(ev)
            events = kept
        items.append(np.array([e.item for e in events], dtype=np.int64))
        positive.append(np.array([e.positive for e in events], dtype=bool))
        timestamps.append(np.array([e.timestamp for e in events], dtype=np.int64))

    meta = {"threshold": threshold, "dedupe": dedupe}
    return Corpus(
        user_raw=list(user_ids), item_raw=list(item_ids),
        items=items, positive=positive, timestamps=timestamps, meta=meta,
    )


@dataclass
class SplitDataset:
    """A corpus plus the per-event train/validation/test assignment."""
    corpus: Corpus
    assign: list[np.ndarray]  # per user, int8 codes aligned with corpus events
    manifest: dict

    @property
    def num_users(self) -> int:
        return self.corpus.num_users

    @property
    def num_items(self) -> int:
        return self.corpus.num_items

    def positive_items(self, user: int) -> np.ndarray:
        """Distinct items this user interacted with positively (any split)."""
        mask = self.corpus.positive[user]
        return np.unique(self.corpus.items[user][mask])

    def split_sizes(self) -> dict[str, int]:
        sizes = {name: 0 for name in SPLIT_NAMES.values()}
        for codes in self.assign:
            for code, name in SPLIT_NAMES.items():
                sizes[name] += int((codes == code).sum())
        return sizes


def leave_one_out_split(corpus: Corpus, seed: int | None = None) -> SplitDataset:
    """Hold out each eligible user's latest positives for test and validation.

    For users with at least five interactions, the latest positive event
    outside the earliest five goes to test and the second-latest to
    validation; the earliest five interactions are guaranteed to stay in
    train, as does everything unassigned. Users with fewer than five
    interactions contribute training events only.
    """
    if corpus.num_users == 0:
        raise ContractError("leave_one_out_split: corpus has no users")
    assign: list[np.ndarray] = []
    no_holdout = 0
    for u in range(corpus.num_users):
        n = len(corpus.items[u])
        codes = np.zeros(n, dtype=np.int8)
        if n >= 5:
            eligible = [i for i in range(5, n) if corpus.positive[u][i]]
            if eligible:
                codes[eligible[-1]] = SPLIT_TEST
                if len(eligible) >= 2:
                    codes[eligible[-2]] = SPLIT_VAL
            else:
                no_holdout += 1
                log.info("user %s has no positive events outside the earliest five; "
                         "no test/validation held out", corpus.user_raw[u])
        assign.append(codes)

    manifest = {
        "format_version": MANIFEST_VERSION,
        "splitter": "leave-one-out-latest-positive",
        "threshold": corpus.meta.get("threshold"),
        "dedupe": bool(corpus.meta.get("dedupe", False)),
        "seed": seed,
        "source_format": corpus.meta.get("source_format"),
        "source_sha256": corpus.meta.get("source_sha256"),
        "skipped_lines": corpus.meta.get("skipped_lines", 0),
        "num_users": corpus.num_users,
        "num_items": corpus.num_items,
        "num_interactions": corpus.num_interactions,
        "density_pct": round(100.0 * corpus.density(), 2),
        "users_without_holdout": no_holdout,
    }
    return SplitDataset(corpus=corpus, assign=assign, manifest=manifest)


def prepare(fmt: str, source, threshold: float = DEFAULT_THRESHOLD, dedupe: bool = False,
            seed: int | None = None) -> tuple[SplitDataset, ParseStats]:
    """Full ingestion: parse, binarize, sequence, and split."""
    raw, stats = parse_dataset(fmt, source)
    corpus = binarize_and_sequence(raw, threshold=threshold, dedupe=dedupe)
    corpus.meta.update({
        "source_format": fmt,
        "source_sha256": stats.sha256,
        "skipped_lines": stats.skipped,
    })
    split = leave_one_out_split(corpus, seed=seed)
    return split, stats


# --- prepared-dataset directory -------------------------------------------

_FILES = ("interactions.tsv", "users.map", "items.map", "split.tsv", "manifest.json")


def _manifest_bytes(manifest: dict) -> bytes:
    return (json.dumps(manifest, sort_keys=True, indent=2) + "\n").encode("utf-8")


def manifest_sha256(manifest: dict) -> str:
    return hashlib.sha256(_manifest_bytes(manifest)).hexdigest()


def save_prepared(split: SplitDataset, out_dir) -> Path:
    """Write the prepared-dataset directory; byte-identical for equal inputs."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    corpus = split.corpus

    with open(out / "interactions.tsv", "w", encoding="utf-8", newline="\n") as fh:
        for u in range(corpus.num_users):
            for i in range(len(corpus.items[u])):
                fh.write(f"{u}\t{corpus.items[u][i]}\t{int(corpus.positive[u][i])}\t"
                         f"{corpus.timestamps[u][i]}\n")
    with open(out / "users.map", "w", encoding="utf-8", newline="\n") as fh:
        for dense, raw_id in enumerate(corpus.user_raw):
            fh.write(f"{raw_id}\t{dense}\n")
    with open(out / "items.map", "w", encoding="utf-8", newline="\n") as fh:
        for dense, raw_id in enumerate(corpus.item_raw):
            fh.write(f"{raw_id}\t{dense}\n")
    with open(out / "split.tsv", "w", encoding="utf-8", newline="\n") as fh:
        for u in range(corpus.num_users):
            for ordinal, code in enumerate(split.assign[u]):
                fh.write(f"{u}\t{ordinal}\t{SPLIT_NAMES[int(code)]}\n")
    with open(out / "manifest.json", "wb") as fh:
        fh.write(_manifest_bytes(split.manifest))
    return out


def load_prepared(data_dir) -> SplitDataset:
    """Load a prepared-dataset directory written by :func:`save_prepared`."""
    root = Path(data_dir)
    for name in _FILES:
        if not (root / name).is_file():
            raise ConfigError(f"prepared dataset at {root} is missing {name}")
    manifest = json.loads((root / "manifest.json").read_text("utf-8"))
    if manifest.get("format_version") != MANIFEST_VERSION:
        raise ConfigError(
            f"prepared dataset version {manifest.get('format_version')} != "
            f"{MANIFEST_VERSION}")

    def read_map(path) -> list[str]:
        pairs = []
        for line in path.read_text("utf-8").splitlines():
            raw_id, dense = line.split("\t")
            pairs.append((int(dense), raw_id))
        pairs.sort()
        return [raw_id for _, raw_id in pairs]

    user_raw = read_map(root / "users.map")
    item_raw = read_map(root / "items.map")

    items = [[] for _ in user_raw]
    positive = [[] for _ in user_raw]
    timestamps = [[] for _ in user_raw]
    for line in (root / "interactions.tsv").read_text("utf-8").splitlines():
        u, i, p, ts = line.split("\t")
        items[int(u)].append(int(i))
        positive[int(u)].append(bool(int(p)))
        timestamps[int(u)].append(int(ts))

    assign = [np.zeros(len(ev), dtype=np.int8) for ev in items]
    for line in (root / "split.tsv").read_text("utf-8").splitlines():
        u, ordinal, tag = line.split("\t")
        assign[int(u)][int(ordinal)] = SPLIT_CODES[tag]

    corpus = Corpus(
        user_raw=user_raw, item_raw=item_raw,
        items=[np.array(a, dtype=np.int64) for a in items],
        positive=[np.array(a, dtype=bool) for a in positive],
        timestamps=[np.array(a, dtype=np.int64) for a in timestamps],
        meta={
            "threshold": manifest.get("threshold"),
            "dedupe": manifest.get("dedupe"),
            "source_format": manifest.get("source_format"),
            "source_sha256": manifest.get("source_sha256"),
            "skipped_lines": manifest.get("skipped_lines", 0),
        },
    )
    return SplitDataset(corpus=corpus, assign=assign, manifest=manifest)
