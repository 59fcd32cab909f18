"""
Rating-prediction recommenders sharing a fit / predict / recommend interface.

All models are fit on an :class:`~artistbias.interactions.InteractionMatrix`
train view and score artists by column index.  Scores for several items are
computed in one call with :meth:`Recommender.score`.
"""

from __future__ import annotations

import enum
import logging
from dataclasses import dataclass, field
from typing import Iterable

import numpy as np
import scipy.sparse as sps

from .interactions import InteractionMatrix

_log = logging.getLogger(__name__)


class Algorithm(str, enum.Enum):
    MOST_POPULAR = "MostPopular"
    USER_ITEM_AVG = "UserItemAvg"
    USER_KNN_AVG = "UserKNNAvg"
    NMF = "NMF"

    @classmethod
    def parse(cls, name: str) -> "Algorithm":
        for a in cls:
            if a.value.lower() == name.strip().lower():
                return a
        raise ValueError(f"unknown algorithm {name!r}; expected one of {[a.value for a in cls]}")


class Similarity(str, enum.Enum):
    COSINE = "cosine"
    MSD = "msd"


@dataclass(frozen=True)
class ModelConfig:
    algorithm: Algorithm = Algorithm.NMF
    k_neighbors: int = 40
    similarity: Similarity = Similarity.COSINE
    min_support: int = 1
    nmf_factors: int = 15
    nmf_epochs: int = 50
    nmf_reg: float = 0.06
    nmf_init_low: float = 0.0
    nmf_init_high: float = 1.0
    #: MostPopular scores by distinct listeners or by summed playcounts
    popularity_by: str = "listeners"
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "algorithm", Algorithm(self.algorithm))
        object.__setattr__(self, "similarity", Similarity(self.similarity))
        if self.k_neighbors < 1:
            raise ValueError("k_neighbors must be >= 1")
        if self.min_support < 1:
            raise ValueError("min_support must be >= 1")
        if self.nmf_factors < 1 or self.nmf_epochs < 0:
            raise ValueError("nmf_factors must be >= 1 and nmf_epochs >= 0")
        if self.nmf_reg < 0:
            raise ValueError("nmf_reg must be non-negative")
        if not (self.nmf_init_high > self.nmf_init_low >= 0):
            raise ValueError("need nmf_init_high > nmf_init_low >= 0")
        if self.popularity_by not in ("listeners", "plays"):
            raise ValueError("popularity_by must be 'listeners' or 'plays'")


@dataclass(frozen=True)
class RecommendationList:
    user: int
    items: tuple[int, ...]
    scores: tuple[float, ...] = field(compare=False)

    def __len__(self):
        return len(self.items)


class Recommender:
    """Base class; subclasses implement :meth:`fit` and :meth:`score`."""

    algorithm: Algorithm
    n_users: int = 0
    n_items: int = 0

    def fit(self, train: InteractionMatrix) -> "Recommender":
        raise NotImplementedError

    def score(self, user: int, items: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def _check(self, user, items):
        if not 0 <= user < self.n_users:
            raise IndexError(f"user index {user} out of range [0, {self.n_users})")
        items = np.asarray(items, dtype=np.int64)
        if items.size and (items.min() < 0 or items.max() >= self.n_items):
            raise IndexError(f"artist index out of range [0, {self.n_items})")
        return items

    def predict(self, user: int, item: int) -> float:
        return float(self.score(user, np.array([item]))[0])

    def state(self) -> dict[str, np.ndarray]:
        raise NotImplementedError


def _row_means(mat: sps.csr_matrix, fallback: float) -> np.ndarray:
    counts = np.diff(mat.indptr)
    sums = np.asarray(mat.sum(axis=1)).ravel()
    return np.divide(sums, counts, out=np.full(len(counts), fallback), where=counts > 0)


class MostPopular(Recommender):
    algorithm = Algorithm.MOST_POPULAR

    def __init__(self, popularity_by="listeners"):
        self.popularity_by = popularity_by

    def fit(self, train):
        self.n_users, self.n_items = train.n_users, train.n_artists
        if self.popularity_by == "plays":
            self.popularity_ = np.asarray(train.playcounts.sum(axis=0)).ravel().astype(np.float64)
        else:
            self.popularity_ = np.diff(train.csc.indptr).astype(np.float64)
        return self

    def score(self, user, items):
        items = self._check(user, items)
        return self.popularity_[items]

    def state(self):
        return {"popularity": self.popularity_}


class UserItemAvg(Recommender):
    """Global mean plus user and item offsets."""

    algorithm = Algorithm.USER_ITEM_AVG

    def fit(self, train):
        r = train.ratings
        self.n_users, self.n_items = r.shape
        self.global_mean_ = float(r.data.mean()) if r.nnz else 0.0
        self.user_means_ = _row_means(r, self.global_mean_)
        self.item_means_ = _row_means(train.csc.T.tocsr(), self.global_mean_)
        return self

    def score(self, user, items):
        items = self._check(user, items)
        g = self.global_mean_
        return g + (self.user_means_[user] - g) + (self.item_means_[items] - g)

    def state(self):
        return {
            "global_mean": np.array([self.global_mean_]),
            "user_means": self.user_means_,
            "item_means": self.item_means_,
        }


class UserKNNAvg(Recommender):
    """
    User-based k-nearest neighbours with mean offsets.

    Similarities are computed over co-rated items, on demand per target
    user.  The neighbourhood for (u, i) is the ``k`` most similar other users
    who rated ``i`` with positive similarity; ties go to the lower user index.
    """

    algorithm = Algorithm.USER_KNN_AVG

    def __init__(self, k=40, similarity=Similarity.COSINE, min_support=1, cache_size=4096):
        self.k = k
        self.similarity = Similarity(similarity)
        self.min_support = min_support
        self.cache_size = cache_size

    def fit(self, train):
        r = train.ratings.astype(np.float64)
        self.n_users, self.n_items = r.shape
        self.ratings_ = r
        self.binary_ = r.copy()
        self.binary_.data[:] = 1.0
        self.squares_ = r.multiply(r).tocsr()
        self.global_mean_ = float(r.data.mean()) if r.nnz else 0.0
        self.user_means_ = _row_means(r, self.global_mean_)
        dev = r.copy()
        rows = np.repeat(np.arange(self.n_users), np.diff(r.indptr))
        dev.data = r.data - self.user_means_[rows]
        self.deviations_ = dev
        self._cache: dict[int, np.ndarray] = {}
        return self

    def similarities(self, user: int) -> np.ndarray:
        """Similarity of ``user`` to every user; zero for self and unsupported pairs."""
        sim = self._cache.get(user)
        if sim is not None:
            return sim
        r_u = self.ratings_[user].toarray().ravel()
        b_u = (r_u != 0).astype(np.float64)
        support = self.binary_ @ b_u
        dot = self.ratings_ @ r_u
        # sum of own squares over items co-rated with each v, and v's squares likewise
        own_sq = self.binary_ @ (r_u * r_u)
        other_sq = self.squares_ @ b_u
        sim = np.zeros(self.n_users)
        if self.similarity == Similarity.COSINE:
            den = np.sqrt(own_sq * other_sq)
            ok = den > 0
            sim[ok] = dot[ok] / den[ok]
        else:
            ok = support > 0
            msd = (own_sq[ok] + other_sq[ok] - 2.0 * dot[ok]) / support[ok]
            sim[ok] = 1.0 / (np.maximum(msd, 0.0) + 1.0)
        sim[support < self.min_support] = 0.0
        sim[user] = 0.0
        if len(self._cache) >= self.cache_size:
            self._cache.pop(next(iter(self._cache)))
        self._cache[user] = sim
        return sim

    def score(self, user, items):
        items = self._check(user, items)
        base = self.user_means_[user]
        if items.size == 0:
            return np.zeros(0)
        sim = self.similarities(user)
        cands = np.flatnonzero(sim > 0)
        if cands.size == 0:
            return np.full(items.size, base)
        order = cands[np.lexsort((cands, -sim[cands]))]
        dev = self.deviations_[order][:, items].toarray()
        rated = self.binary_[order][:, items].toarray()
        within_k = np.cumsum(rated, axis=0) <= self.k
        w = sim[order][:, None] * (rated * within_k)
        num = (w * dev).sum(axis=0)
        den = w.sum(axis=0)
        out = np.full(items.size, base)
        np.add(out, num / np.where(den > 0, den, 1.0), out=out, where=den > 0)
        return out

    def state(self):
        coo = self.ratings_.tocoo()
        return {
            "user_means": self.user_means_,
            "rows": coo.row.astype(np.int64),
            "cols": coo.col.astype(np.int64),
            "ratings": coo.data,
        }


class NMF(Recommender):
    """
    Regularised non-negative matrix factorisation over observed entries.

    Each epoch applies a multiplicative update to all user factors, then to
    all item factors.  Regularisation of a factor vector is weighted by the
    number of ratings of its user or item.
    """

    algorithm = Algorithm.NMF

    def __init__(self, factors=15, epochs=50, reg=0.06, init_low=0.0, init_high=1.0, seed=0):
        self.factors = factors
        self.epochs = epochs
        self.reg = reg
        self.init_low = init_low
        self.init_high = init_high
        self.seed = seed

    def objective(self, r: sps.csr_matrix | None = None) -> float:
        """Squared error on observed entries plus count-weighted L2 penalty."""
        r = self.ratings_ if r is None else r
        coo = r.tocoo()
        est = np.einsum("ij,ij->i", self.P_[coo.row], self.Q_[coo.col])
        err = float(np.sum((coo.data - est) ** 2))
        pen = np.sum(self._n_u * np.sum(self.P_ ** 2, axis=1)) + np.sum(self._n_i * np.sum(self.Q_ ** 2, axis=1))
        return err + self.reg * float(pen)

    def fit(self, train, callback=None):
        r = train.ratings.astype(np.float64)
        self.n_users, self.n_items = r.shape
        self.ratings_ = r
        rng = np.random.default_rng(self.seed)
        self.P_ = rng.uniform(self.init_low, self.init_high, (self.n_users, self.factors))
        self.Q_ = rng.uniform(self.init_low, self.init_high, (self.n_items, self.factors))
        self.global_mean_ = float(r.data.mean()) if r.nnz else 0.0
        self._n_u = np.diff(r.indptr).astype(np.float64)
        rt = r.T.tocsr()
        self._n_i = np.diff(rt.indptr).astype(np.float64)
        rows = np.repeat(np.arange(self.n_users), np.diff(r.indptr))
        cols = r.indices

        est_mat = r.copy()
        for epoch in range(self.epochs):
            est_mat.data = np.einsum("ij,ij->i", self.P_[rows], self.Q_[cols])
            num = r @ self.Q_
            den = est_mat @ self.Q_ + self.reg * self._n_u[:, None] * self.P_
            np.multiply(self.P_, num / np.where(den > 0, den, 1.0), out=self.P_, where=den > 0)

            est_mat.data = np.einsum("ij,ij->i", self.P_[rows], self.Q_[cols])
            num = rt @ self.P_
            den = est_mat.T @ self.P_ + self.reg * self._n_i[:, None] * self.Q_
            np.multiply(self.Q_, num / np.where(den > 0, den, 1.0), out=self.Q_, where=den > 0)
            if callback is not None:
                callback(epoch, self)
        return self

    def score(self, user, items):
        items = self._check(user, items)
        out = self.Q_[items] @ self.P_[user]
        if self._n_u[user] == 0:
            out[:] = self.global_mean_
        else:
            out[self._n_i[items] == 0] = self.global_mean_
        return out

    def state(self):
        return {"P": self.P_, "Q": self.Q_, "global_mean": np.array([self.global_mean_])}


def make_model(config: ModelConfig) -> Recommender:
    match config.algorithm:
        case Algorithm.MOST_POPULAR:
            return MostPopular(config.popularity_by)
        case Algorithm.USER_ITEM_AVG:
            return UserItemAvg()
        case Algorithm.USER_KNN_AVG:
            return UserKNNAvg(config.k_neighbors, config.similarity, config.min_support)
        case Algorithm.NMF:
            return NMF(
                config.nmf_factors, config.nmf_epochs, config.nmf_reg,
                config.nmf_init_low, config.nmf_init_high, config.seed,
            )


def fit(train: InteractionMatrix, config: ModelConfig) -> Recommender:
    if train.nnz == 0:
        raise ValueError("cannot fit on an empty train view")
    _log.debug("fitting %s on %d ratings", config.algorithm.value, train.nnz)
    return make_model(config).fit(train)


def predict(model: Recommender, user: int, item: int) -> float:
    return model.predict(user, item)


def recommend_top_n(model: Recommender, user: int, candidates: Iterable[int], n: int = 5) -> RecommendationList:
    """
    Rank ``candidates`` by predicted score, highest first.

    Equal scores are ordered by ascending artist index, which is ascending
    artist id because matrix columns are sorted by id.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    cands = np.unique(np.fromiter(candidates, dtype=np.int64))
    if cands.size == 0:
        raise ValueError("empty candidate set")
    scores = model.score(user, cands)
    order = np.lexsort((cands, -scores))[:n]
    return RecommendationList(user, tuple(int(i) for i in cands[order]), tuple(float(s) for s in scores[order]))


def save_model(model: Recommender, path) -> None:
    """Dump learned state as ``.npz``; the ``algorithm`` key holds the tag."""
    np.savez(path, algorithm=np.array(model.algorithm.value), **model.state())


def load_state(path) -> tuple[Algorithm, dict[str, np.ndarray]]:
    with np.load(path, allow_pickle=False) as data:
        algo = Algorithm.parse(str(data["algorithm"]))
        return algo, {k: data[k] for k in data.files if k != "algorithm"}
