"""
Brute-force reference implementations used to cross-check the package.

Everything here works on plain dicts and lists with explicit loops, and
shares no code with the package under test.
"""

from __future__ import annotations

import math
import statistics
from collections import Counter


def preference_ratio(selected: dict[str, set[str]], group: set[str], category: set[str]) -> float:
    num = den = 0
    for u in group:
        for i in selected.get(u, ()):
            den += 1
            if i in category:
                num += 1
    return num / den


def bias_disparity(pr_in: float, pr_out: float) -> float:
    return (pr_out - pr_in) / pr_in


def relevance_threshold(ratings: list[float]) -> float:
    if len(ratings) == 1:
        return ratings[0]
    q1, _, q3 = statistics.quantiles(ratings, n=4, method="inclusive")
    lo, hi = q1 - 1.5 * (q3 - q1), q3 + 1.5 * (q3 - q1)
    kept = [r for r in ratings if lo <= r <= hi]
    return sum(kept) / len(kept)


def precision(reclist, test: dict, thr: float) -> float:
    hits = 0
    for i in reclist:
        if i in test and test[i] >= thr:
            hits += 1
    return hits / len(reclist)


def ndcg(reclist, test: dict, thr: float, n: int) -> float | None:
    gains = [1 if (i in test and test[i] >= thr) else 0 for i in reclist[:n]]
    actual = 0.0
    for pos, g in enumerate(gains, start=1):
        actual += g / math.log2(pos + 1)
    ideal_gains = sorted((1 if r >= thr else 0 for r in test.values()), reverse=True)[:n]
    ideal = 0.0
    for pos, g in enumerate(ideal_gains, start=1):
        ideal += g / math.log2(pos + 1)
    return None if ideal == 0 else actual / ideal


def coverage(reclists, n_items: int) -> float:
    seen = set()
    for rl in reclists:
        seen.update(rl)
    return len(seen) / n_items


def spread(reclists) -> float:
    counts = Counter(i for rl in reclists for i in rl)
    total = sum(counts.values())
    h = 0.0
    for c in counts.values():
        p = c / total
        h -= p * math.log(p, 2)
    return h


def _similarity(ru: dict, rv: dict, kind: str) -> float:
    common = [i for i in ru if i in rv]
    if not common:
        return 0.0
    if kind == "cosine":
        num = sum(ru[i] * rv[i] for i in common)
        den = math.sqrt(sum(ru[i] ** 2 for i in common) * sum(rv[i] ** 2 for i in common))
        return num / den if den else 0.0
    msd = sum((ru[i] - rv[i]) ** 2 for i in common) / len(common)
    return 1.0 / (msd + 1.0)


def knn_predict(ratings: dict[int, dict[int, float]], user: int, item: int, k: int,
                kind: str = "cosine") -> float:
    """User-based KNN with mean offsets, neighbours ranked by (-sim, user)."""
    mean = {u: sum(r.values()) / len(r) for u, r in ratings.items() if r}
    mu_u = mean[user]
    neigh = []
    for v, rv in ratings.items():
        if v == user or item not in rv:
            continue
        s = _similarity(ratings[user], rv, kind)
        if s > 0:
            neigh.append((-s, v))
    neigh.sort()
    neigh = neigh[:k]
    if not neigh:
        return mu_u
    num = sum(-s * (ratings[v][item] - mean[v]) for s, v in neigh)
    den = sum(-s for s, _ in neigh)
    return mu_u + num / den
