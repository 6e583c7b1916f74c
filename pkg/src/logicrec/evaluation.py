"""Top-K ranking evaluation over fixed candidate slates.

Each held-out instance ranks its target among 101 candidates by model
score, descending. Ties break pessimistically: the target is placed below
every equal-scoring negative, so reported metrics never benefit from
degenerate score collisions. Gains use the 0-based rank i with discount
ln(2)/ln(i+2), so a top-ranked target scores exactly 1.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import ContractError
from .instances import EvalInstance
from .model import ModelState, score_candidates

DEFAULT_KS = (5, 10)


@dataclass(frozen=True)
class RankedResult:
    instance_index: int
    target_rank: int  # 0-based position after the pessimistic tie-break


@dataclass
class MetricsReport:
    ndcg: dict[int, float]
    hr: dict[int, float]
    count: int

    def row(self, k: int) -> tuple[float, float]:
        return self.ndcg[k], self.hr[k]


def target_ranks(scores: np.ndarray) -> np.ndarray:
    """0-based target ranks from a (N, C) score matrix with target in col 0."""
    if scores.ndim != 2 or scores.shape[1] < 2:
        raise ContractError(f"target_ranks: bad score matrix shape {scores.shape}")
    t = scores[:, :1]
    higher = (scores > t).sum(axis=1)
    tied = (scores == t).sum(axis=1) - 1  # the target itself ties with itself
    return (higher + tied).astype(np.int64)


def ndcg_hr(ranks: Sequence[int], k: int) -> tuple[float, float]:
    """Mean NDCG gain and hit ratio at cutoff ``k`` for 0-based ranks.

    A rank-i target inside the cutoff contributes ln(2)/ln(i+2); outside it
    contributes 0 to the gain and misses the hit count. Gains accumulate
    through correctly-rounded summation, so the result is exact at double
    precision.
    """
    arr = np.asarray(ranks, dtype=np.int64)
    if arr.size == 0:
        raise ContractError("ndcg_hr: empty rank list")
    if (arr < 0).any():
        raise ContractError("ndcg_hr: ranks must be non-negative")
    if k < 1:
        raise ContractError(f"ndcg_hr: k must be >= 1, got {k}")
    ln2 = math.log(2.0)
    gains = [ln2 / math.log(r + 2.0) for r in arr if r < k]
    hits = len(gains)
    return math.fsum(gains) / arr.size, hits / arr.size


def evaluate(state: ModelState, instances: Sequence[EvalInstance],
             ks: Sequence[int] = DEFAULT_KS) -> MetricsReport:
    """Score, rank, and aggregate one split's instances. Read-only."""
    if not instances:
        raise ContractError("evaluate: no instances")
    ranks = target_ranks(score_candidates(state, instances))
    report = MetricsReport(ndcg={}, hr={}, count=len(instances))
    for k in ks:
        report.ndcg[k], report.hr[k] = ndcg_hr(ranks, k)
    return report


def ranked_results(state: ModelState, instances: Sequence[EvalInstance]) -> list[RankedResult]:
    ranks = target_ranks(score_candidates(state, instances))
    return [RankedResult(i, int(r)) for i, r in enumerate(ranks)]


def average_reports(reports: Sequence[MetricsReport]) -> MetricsReport:
    """Plain mean of per-seed reports (counts must agree on the split)."""
    if not reports:
        raise ContractError("average_reports: nothing to average")
    ks = sorted(reports[0].ndcg)
    return MetricsReport(
        ndcg={k: float(np.mean([r.ndcg[k] for r in reports])) for k in ks},
        hr={k: float(np.mean([r.hr[k] for r in reports])) for k in ks},
        count=reports[0].count,
    )


def metrics_csv(rows: Sequence[tuple]) -> str:
    """CSV body for (seed, split, k, report) rows."""
    lines = ["seed,split,K,ndcg,hr,n_instances"]
    for seed, split_name, k, report in rows:
        ndcg, hr = report.row(k)
        lines.append(f"{seed},{split_name},{k},{ndcg:.6f},{hr:.6f},{report.count}")
    return "\n".join(lines) + "\n"


def metrics_table(rows: Sequence[tuple]) -> str:
    """Aligned human-readable table for (label, report) rows."""
    ks = sorted(rows[0][1].ndcg) if rows else []
    header = f"{'run':<24}" + "".join(f"{f'NDCG@{k}':>10}{f'HR@{k}':>10}" for k in ks)
    out = [header, "-" * len(header)]
    for label, report in rows:
        cells = "".join(f"{report.ndcg[k]:>10.4f}{report.hr[k]:>10.4f}" for k in ks)
        out.append(f"{label:<24}" + cells)
    return "\n".join(out) + "\n"
