"""Exact cosine top-k index and the default feature-hashing text embedder."""

from __future__ import annotations

import hashlib
import re
import threading
from dataclasses import dataclass

import numpy as np

DEFAULT_DIMENSION = 64

_TOKEN_SPLIT = re.compile(r"[\W_]+")


class DimensionMismatch(ValueError):
    pass


def tokenize(text: str) -> list[str]:
    return [t for t in _TOKEN_SPLIT.split(text.lower()) if t]


def _bucket(token: str, dimension: int) -> int:
    digest = hashlib.sha256(token.encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "big") % dimension


def embed(text: str, dimension: int = DEFAULT_DIMENSION) -> np.ndarray:
    """Bag-of-words feature hash, L2-normalised.

    Text without any alphanumeric token maps to the zero vector.
    """
    vec = np.zeros(dimension, dtype=np.float64)
    for token in tokenize(text):
        vec[_bucket(token, dimension)] += 1.0
    norm = float(np.linalg.norm(vec))
    if norm > 0.0:
        vec /= norm
    return vec


def cosine(u: np.ndarray, v: np.ndarray) -> float:
    """Dot product of pre-normalised vectors (zero vectors score 0)."""
    if u.shape != v.shape:
        raise DimensionMismatch(f"dimension mismatch: {u.shape} vs {v.shape}")
    return float(np.dot(u, v))


def _unit(vector: np.ndarray) -> np.ndarray:
    norm = np.linalg.norm(vector)
    return vector / norm if norm > 0 else vector


@dataclass(frozen=True)
class IndexEntry:
    entry_id: str
    vector: np.ndarray
    payload_id: str | None = None


class VectorIndex:
    """Linear-scan index. Results are exact; ties go to the older entry.

    Stored vectors and queries are scaled to unit length (zero vectors stay
    zero and score 0 against everything).
    """

    def __init__(self, dimension: int = DEFAULT_DIMENSION) -> None:
        if dimension < 1:
            raise ValueError("dimension must be positive")
        self.dimension = dimension
        self._entries: dict[str, tuple[int, IndexEntry]] = {}
        self._seq = 0
        self._lock = threading.RLock()
        self._matrix: np.ndarray | None = None
        self._order: list[str] = []

    def __len__(self) -> int:
        return len(self._entries)

    def __contains__(self, entry_id: str) -> bool:
        return entry_id in self._entries

    def _check(self, vector: np.ndarray) -> None:
        if vector.shape != (self.dimension,):
            raise DimensionMismatch(
                f"vector has shape {vector.shape}, index dimension is {self.dimension}"
            )

    def upsert(self, entry: IndexEntry) -> None:
        vector = np.asarray(entry.vector, dtype=np.float64)
        self._check(vector)
        vector = _unit(vector)
        with self._lock:
            prior = self._entries.get(entry.entry_id)
            if prior is None:
                seq = self._seq
                self._seq += 1
            else:
                seq = prior[0]  # replacement keeps its place in the tie order
            self._entries[entry.entry_id] = (
                seq,
                IndexEntry(entry.entry_id, vector, entry.payload_id),
            )
            self._matrix = None

    def remove(self, entry_id: str) -> bool:
        with self._lock:
            if self._entries.pop(entry_id, None) is None:
                return False
            self._matrix = None
            return True

    def get(self, entry_id: str) -> IndexEntry | None:
        with self._lock:
            item = self._entries.get(entry_id)
            return item[1] if item else None

    def ids(self) -> list[str]:
        """Entry ids in insertion order."""
        with self._lock:
            return [eid for eid, _ in sorted(self._entries.items(), key=lambda kv: kv[1][0])]

    def _snapshot(self) -> tuple[np.ndarray, list[str]]:
        if self._matrix is None:
            self._order = self.ids()
            if self._order:
                self._matrix = np.stack([self._entries[i][1].vector for i in self._order])
            else:
                self._matrix = np.zeros((0, self.dimension))
        return self._matrix, self._order

    def search_top_k(
        self, query: np.ndarray, k: int, min_sim: float = -1.0
    ) -> list[tuple[str, float]]:
        if k < 1:
            raise ValueError("k must be >= 1")
        query = np.asarray(query, dtype=np.float64)
        self._check(query)
        query = _unit(query)
        with self._lock:
            matrix, order = self._snapshot()
            if not order:
                return []
            sims = matrix @ query
        keep = np.nonzero(sims >= min_sim)[0]
        # order is insertion order, so a stable sort on -sim breaks ties oldest-first
        ranked = keep[np.argsort(-sims[keep], kind="stable")][:k]
        return [(order[i], float(sims[i])) for i in ranked]
