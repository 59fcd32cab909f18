"""
Leave-N-out folds and top-n accuracy / beyond-accuracy metrics.
"""

from __future__ import annotations

import logging
import math
from collections import Counter
from dataclasses import dataclass, field, fields
from typing import Iterable, Mapping, Sequence

import numpy as np

from .interactions import InteractionMatrix, PopularityIndex
from .recsys import RecommendationList, Recommender, recommend_top_n
from .rng import derive_rng

_log = logging.getLogger(__name__)

CANDIDATE_MODES = ("testset", "catalog")


class EvaluationError(Exception):
    pass


@dataclass(frozen=True)
class FoldSpec:
    n_folds: int = 3
    held_out: int = 10
    min_artists: int = 20
    list_size: int = 5
    seed: int = 0

    def __post_init__(self):
        if self.n_folds < 1:
            raise ValueError("n_folds must be >= 1")
        if not (self.min_artists > self.held_out > self.list_size >= 1):
            raise ValueError(
                f"need min_artists > held_out > list_size >= 1, got "
                f"{self.min_artists}, {self.held_out}, {self.list_size}"
            )


@dataclass(frozen=True, eq=False)
class EvalFold:
    index: int
    test: Mapping[int, np.ndarray]
    train: InteractionMatrix

    @property
    def users(self) -> list[int]:
        return sorted(self.test)


def make_folds(matrix: InteractionMatrix, spec: FoldSpec) -> list[EvalFold]:
    """
    Build ``spec.n_folds`` independent leave-N-out folds.

    Users with fewer than ``spec.min_artists`` artists get no test set but
    keep all their ratings in every train view.  Each (fold, user) draw uses
    its own random stream keyed on the user id.
    """
    counts = np.diff(matrix.ratings.indptr)
    eligible = np.flatnonzero(counts >= spec.min_artists)
    if eligible.size == 0:
        raise EvaluationError(f"no user has >= {spec.min_artists} artists")
    folds = []
    for f in range(spec.n_folds):
        test = {}
        for u in eligible:
            items = matrix.user_items(u)
            rng = derive_rng(spec.seed, "fold", f, matrix.user_ids[u])
            test[int(u)] = np.sort(rng.choice(items, size=spec.held_out, replace=False))
        rows = np.repeat(np.fromiter(test, dtype=np.int64), spec.held_out)
        cols = np.concatenate(list(test.values()))
        folds.append(EvalFold(f, test, matrix.without(rows, cols)))
    _log.info("built %d folds over %d eligible users", spec.n_folds, eligible.size)
    return folds


def relevance_threshold(ratings: Sequence[float]) -> float:
    """
    Mean rating after dropping values outside the 1.5 IQR fences.

    Quartiles use linear interpolation between order statistics.
    """
    r = np.asarray(ratings, dtype=np.float64)
    if r.size == 0:
        raise ValueError("no ratings")
    q1, q3 = np.percentile(r, [25, 75], method="linear")
    iqr = q3 - q1
    kept = r[(r >= q1 - 1.5 * iqr) & (r <= q3 + 1.5 * iqr)]
    if kept.size == 0:
        return float(r.mean())
    return float(kept.mean())


def _relevance(items, test_ratings, threshold):
    return [1.0 if test_ratings.get(int(i), -math.inf) >= threshold else 0.0 for i in items]


def precision_at_n(reclist: Sequence[int], test_ratings: Mapping[int, float], threshold: float) -> float | None:
    """Share of recommended items whose held-out rating reaches ``threshold``; None if empty."""
    if len(reclist) == 0:
        return None
    return sum(_relevance(reclist, test_ratings, threshold)) / len(reclist)


def dcg(rels: Iterable[float]) -> float:
    return sum(r / math.log2(p + 2) for p, r in enumerate(rels))


def ndcg_at_n(reclist: Sequence[int], test_ratings: Mapping[int, float], threshold: float,
              n: int | None = None) -> float | None:
    """
    Binary-relevance nDCG, normalised by the ideal ordering of the test set
    at depth ``n``.  Returns None when the list is empty or the test set has
    no relevant item.
    """
    if len(reclist) == 0:
        return None
    n = len(reclist) if n is None else n
    n_rel = sum(1 for r in test_ratings.values() if r >= threshold)
    if n_rel == 0:
        return None
    ideal = dcg([1.0] * min(n, n_rel))
    return dcg(_relevance(reclist[:n], test_ratings, threshold)) / ideal


def beyond_accuracy(reclists: Iterable[Sequence[int]], popularity: PopularityIndex, n_artists: int):
    """Return ``(coverage, spread, longtail_pct)`` over all recommendation slots."""
    slots = Counter()
    for rl in reclists:
        slots.update(int(i) for i in rl)
    total = sum(slots.values())
    if total == 0:
        raise ValueError("no recommendations")
    coverage = len(slots) / n_artists
    p = np.array([c / total for _, c in sorted(slots.items())])
    spread = float(-np.sum(p * np.log2(p)))
    tail = popularity.long_tail
    longtail = sum(c for i, c in slots.items() if i in tail) / total
    return coverage, spread, longtail


@dataclass
class MetricReport:
    precision: float = math.nan
    ndcg: float = math.nan
    coverage: float = math.nan
    spread: float = math.nan
    longtail_pct: float = math.nan
    users_evaluated: int = 0
    precision_skipped: int = 0
    ndcg_skipped: int = 0

    @property
    def users_skipped(self) -> int:
        return max(self.precision_skipped, self.ndcg_skipped)

    @classmethod
    def mean(cls, reports: Sequence["MetricReport"]) -> "MetricReport":
        out = cls()
        for f in fields(cls):
            vals = [getattr(r, f.name) for r in reports]
            if f.type in ("int", int):
                setattr(out, f.name, int(round(np.mean(vals))))
            else:
                setattr(out, f.name, float(np.mean(vals)))
        return out


@dataclass
class FoldResult:
    reclists: dict[int, tuple[int, ...]]
    metrics: MetricReport
    thresholds: dict[int, float] = field(default_factory=dict)


def candidates_for(fold: EvalFold, user: int, mode: str) -> np.ndarray:
    if mode == "testset":
        return fold.test[user]
    if mode == "catalog":
        seen = np.zeros(fold.train.n_artists, dtype=bool)
        seen[fold.train.user_items(user)] = True
        return np.flatnonzero(~seen)
    raise ValueError(f"candidate mode must be one of {CANDIDATE_MODES}, got {mode!r}")


def evaluate_fold(model: Recommender, fold: EvalFold, full: InteractionMatrix,
                  popularity: PopularityIndex, n: int = 5, candidates: str = "testset") -> FoldResult:
    """Recommend for every test user of ``fold`` and score the lists."""
    reclists = {}
    for u in fold.users:
        reclists[u] = recommend_top_n(model, u, candidates_for(fold, u, candidates), n)
    return score_reclists(reclists, fold, full, popularity, n)


def score_reclists(reclists: Mapping[int, RecommendationList | Sequence[int]], fold: EvalFold,
                   full: InteractionMatrix, popularity: PopularityIndex, n: int = 5) -> FoldResult:
    precisions, ndcgs = [], []
    p_skip = n_skip = 0
    thresholds = {}
    lists = {}
    for u in fold.users:
        rl = reclists.get(u)
        items = list(rl.items) if isinstance(rl, RecommendationList) else list(rl or ())
        lists[u] = items
        test_items = fold.test[u]
        row = dict(zip(full.user_items(u).tolist(), full.user_ratings(u).tolist()))
        test_ratings = {int(i): row[int(i)] for i in test_items}
        thr = relevance_threshold(fold.train.user_ratings(u))
        thresholds[u] = thr
        p = precision_at_n(items, test_ratings, thr)
        if p is None:
            p_skip += 1
        else:
            precisions.append(p)
        g = ndcg_at_n(items, test_ratings, thr, n)
        if g is None:
            n_skip += 1
        else:
            ndcgs.append(g)
    non_empty = [items for items in lists.values() if items]
    if non_empty:
        cov, spread, lt = beyond_accuracy(non_empty, popularity, full.n_artists)
    else:
        cov = spread = lt = math.nan
    report = MetricReport(
        precision=float(np.mean(precisions)) if precisions else math.nan,
        ndcg=float(np.mean(ndcgs)) if ndcgs else math.nan,
        coverage=cov,
        spread=spread,
        longtail_pct=lt,
        users_evaluated=len(fold.users),
        precision_skipped=p_skip,
        ndcg_skipped=n_skip,
    )
    return FoldResult({u: tuple(items) for u, items in lists.items()}, report, thresholds)
