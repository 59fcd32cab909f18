"""
Sparse user x artist rating matrices built from a filtered corpus.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path

import numpy as np
import scipy.sparse as sps

from .corpus import FilteredCorpus

TOP_HEAD_FRACTION = 0.2


def log_scale(playcount):
    """Map a playcount to a rating ``log2(1 + playcount)``."""
    pc = np.asarray(playcount)
    if np.any(pc < 1):
        raise ValueError("playcount must be >= 1")
    out = np.log2(1.0 + pc)
    return float(out) if out.ndim == 0 else out


@dataclass(frozen=True, eq=False)
class InteractionMatrix:
    """
    User x artist matrix of log-scaled ratings.

    Rows and columns follow ``user_ids`` and ``artist_ids``, both sorted.
    ``playcounts`` has the same sparsity pattern as ``ratings``.  Train
    views share the id tuples of the matrix they were cut from.
    """

    user_ids: tuple[str, ...]
    artist_ids: tuple[str, ...]
    ratings: sps.csr_matrix
    playcounts: sps.csr_matrix

    @property
    def n_users(self) -> int:
        return len(self.user_ids)

    @property
    def n_artists(self) -> int:
        return len(self.artist_ids)

    @property
    def nnz(self) -> int:
        return self.ratings.nnz

    @cached_property
    def user_index(self) -> dict[str, int]:
        return {u: i for i, u in enumerate(self.user_ids)}

    @cached_property
    def artist_index(self) -> dict[str, int]:
        return {a: i for i, a in enumerate(self.artist_ids)}

    @cached_property
    def csc(self) -> sps.csc_matrix:
        return self.ratings.tocsc()

    def user_items(self, u: int) -> np.ndarray:
        return self.ratings.indices[self.ratings.indptr[u]:self.ratings.indptr[u + 1]]

    def user_ratings(self, u: int) -> np.ndarray:
        return self.ratings.data[self.ratings.indptr[u]:self.ratings.indptr[u + 1]]

    def without(self, rows: np.ndarray, cols: np.ndarray) -> "InteractionMatrix":
        """Copy with the given (row, col) entries removed."""
        r = self.ratings
        n = self.n_artists
        entry_rows = np.repeat(np.arange(self.n_users, dtype=np.int64), np.diff(r.indptr))
        keys = entry_rows * n + r.indices
        drop = np.asarray(rows, dtype=np.int64) * n + np.asarray(cols, dtype=np.int64)
        keep = ~np.isin(keys, drop)
        indptr = np.zeros(self.n_users + 1, dtype=r.indptr.dtype)
        np.cumsum(np.bincount(entry_rows[keep], minlength=self.n_users), out=indptr[1:])
        ratings = sps.csr_matrix((r.data[keep], r.indices[keep], indptr), shape=r.shape)
        playcounts = sps.csr_matrix(
            (self.playcounts.data[keep], self.playcounts.indices[keep], indptr.copy()), shape=r.shape
        )
        return InteractionMatrix(self.user_ids, self.artist_ids, ratings, playcounts)

    def __eq__(self, other):
        if not isinstance(other, InteractionMatrix):
            return NotImplemented
        return (
            self.user_ids == other.user_ids
            and self.artist_ids == other.artist_ids
            and (self.ratings != other.ratings).nnz == 0
            and (self.playcounts != other.playcounts).nnz == 0
        )


def build_matrix(corpus: FilteredCorpus) -> InteractionMatrix:
    if not corpus.records:
        raise ValueError("cannot build a matrix from an empty corpus")
    user_ids = tuple(sorted({r.user_id for r in corpus.records}))
    artist_ids = tuple(sorted({r.artist_id for r in corpus.records}))
    uidx = {u: i for i, u in enumerate(user_ids)}
    aidx = {a: i for i, a in enumerate(artist_ids)}
    rows = np.fromiter((uidx[r.user_id] for r in corpus.records), np.int64, len(corpus.records))
    cols = np.fromiter((aidx[r.artist_id] for r in corpus.records), np.int64, len(corpus.records))
    plays = np.fromiter((r.playcount for r in corpus.records), np.int64, len(corpus.records))
    shape = (len(user_ids), len(artist_ids))
    pc = sps.csr_matrix((plays, (rows, cols)), shape=shape)
    pc.sum_duplicates()
    pc.sort_indices()
    ratings = pc.astype(np.float64)
    ratings.data = log_scale(pc.data)
    return InteractionMatrix(user_ids, artist_ids, ratings, pc)


def binarize(matrix: InteractionMatrix) -> sps.csr_matrix:
    """0/1 selection matrix with the same sparsity pattern as ``matrix``."""
    b = matrix.ratings.copy()
    b.data = np.ones_like(b.data)
    return b


@dataclass(frozen=True)
class PopularityIndex:
    total_plays: np.ndarray
    listener_count: np.ndarray
    top_head: frozenset[int]
    long_tail: frozenset[int]

    def is_long_tail(self, items) -> np.ndarray:
        mask = np.zeros(len(self.total_plays), dtype=bool)
        mask[list(self.long_tail)] = True
        return mask[np.asarray(items, dtype=np.int64)]


def popularity_index(matrix: InteractionMatrix, head_fraction: float = TOP_HEAD_FRACTION) -> PopularityIndex:
    """
    Split artists into the top ``head_fraction`` by total plays and the long tail.

    Ties at the boundary go to the lexicographically smaller artist id.
    """
    plays = np.asarray(matrix.playcounts.sum(axis=0)).ravel().astype(np.int64)
    listeners = np.diff(matrix.csc.indptr).astype(np.int64)
    n = matrix.n_artists
    n_head = math.ceil(head_fraction * n)
    # artist index order equals artist_id order
    order = np.lexsort((np.arange(n), -plays))
    head = frozenset(int(i) for i in order[:n_head])
    tail = frozenset(int(i) for i in order[n_head:])
    return PopularityIndex(plays, listeners, head, tail)


_MAGIC = b"ABIM"
_HEADER = struct.Struct("<4sQQQ")
_TRIPLE = np.dtype([("row", "<u4"), ("col", "<u4"), ("plays", "<u8")])


def save_snapshot(matrix: InteractionMatrix, path) -> None:
    """
    Write a little-endian snapshot.

    Layout: magic ``b"ABIM"``; ``n_users``, ``n_artists``, ``nnz`` as u64;
    ``nnz`` triples of (u32 row, u32 col, u64 playcount) in row-major order;
    then ``n_users + n_artists`` ids, each a u32 byte length followed by
    UTF-8 bytes.  Ratings are recomputed from playcounts on load.
    """
    coo = matrix.playcounts.tocoo()
    order = np.lexsort((coo.col, coo.row))
    triples = np.empty(coo.nnz, dtype=_TRIPLE)
    triples["row"] = coo.row[order]
    triples["col"] = coo.col[order]
    triples["plays"] = coo.data[order]
    with open(path, "wb") as f:
        f.write(_HEADER.pack(_MAGIC, matrix.n_users, matrix.n_artists, coo.nnz))
        f.write(triples.tobytes())
        for ident in matrix.user_ids + matrix.artist_ids:
            raw = ident.encode("utf-8")
            f.write(struct.pack("<I", len(raw)))
            f.write(raw)


def load_snapshot(path) -> InteractionMatrix:
    data = Path(path).read_bytes()
    magic, n_users, n_artists, nnz = _HEADER.unpack_from(data, 0)
    if magic != _MAGIC:
        raise ValueError(f"{path} is not a matrix snapshot")
    off = _HEADER.size
    triples = np.frombuffer(data, dtype=_TRIPLE, count=nnz, offset=off)
    off += triples.nbytes
    ids = []
    for _ in range(n_users + n_artists):
        (length,) = struct.unpack_from("<I", data, off)
        off += 4
        ids.append(data[off:off + length].decode("utf-8"))
        off += length
    shape = (n_users, n_artists)
    pc = sps.csr_matrix(
        (triples["plays"].astype(np.int64), (triples["row"].astype(np.int64), triples["col"].astype(np.int64))),
        shape=shape,
    )
    pc.sort_indices()
    ratings = pc.astype(np.float64)
    ratings.data = log_scale(pc.data) if pc.nnz else ratings.data
    return InteractionMatrix(tuple(ids[:n_users]), tuple(ids[n_users:]), ratings, pc)
