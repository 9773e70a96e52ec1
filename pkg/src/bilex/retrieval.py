"""Translation retrieval in a shared embedding space.

Four scoring modes rank every target word for a mapped source query:

``nn``
    cosine similarity.
``csls``
    ``2 cos(x, y) - r_T(x) - r_S(y)``, where ``r_T(x)`` is the mean cosine of
    ``x`` to its ``k`` nearest targets and ``r_S(y)`` that of ``y`` to its ``k``
    nearest mapped sources.
``isf``
    inverted softmax, ``exp(beta cos(x, y))`` normalized over all sources.
``inn``
    inverted nearest neighbour: targets are ranked by the position of ``x``
    among all sources sorted by similarity to ``y`` (score ``-rank``), ties
    going to the higher cosine.

Remaining ties are broken by target table order, so rankings are
deterministic.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .embeddings import EmbeddingTable
from .mapping import normalize_rows

MODES = ("nn", "inn", "isf", "csls")


@dataclass(frozen=True)
class RetrievalConfig:
    mode: str = "nn"
    k: int = 10
    beta: float = 30.0
    batch_size: int = 1024
    top_n: int | None = 10

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"unknown retrieval mode {self.mode!r}; expected one of {MODES}")
        if self.k < 1:
            raise ValueError("k must be >= 1")
        if not self.beta > 0:
            raise ValueError("beta must be > 0")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.top_n is not None and self.top_n < 1:
            raise ValueError("top_n must be >= 1 or None")


@dataclass(frozen=True)
class RankedCandidates:
    query: str
    candidates: tuple[tuple[str, float], ...] = ()
    oov: bool = False

    @property
    def top1(self) -> str | None:
        return self.candidates[0][0] if self.candidates else None


def cosine(u, v) -> float:
    u = np.asarray(u, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    if u.shape != v.shape or u.ndim != 1:
        raise ValueError(f"dimension mismatch: {u.shape} vs {v.shape}")
    nu, nv = np.linalg.norm(u), np.linalg.norm(v)
    if nu == 0 or nv == 0:
        return 0.0
    return float(np.clip(u @ v / (nu * nv), -1.0, 1.0))


def _topk_mean(sim: np.ndarray, k: int) -> np.ndarray:
    """Row-wise mean of the k largest entries."""
    top = np.partition(sim, sim.shape[1] - k, axis=1)[:, sim.shape[1] - k:]
    return np.sort(top, axis=1).sum(axis=1) / k


def mean_topk(x, table: EmbeddingTable, k: int) -> float:
    """Mean cosine between ``x`` and its ``k`` most similar rows of ``table``."""
    if k < 1 or k > len(table):
        raise ValueError(f"k={k} out of range for a table of {len(table)} rows")
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (table.dim,):
        raise ValueError(f"dimension mismatch: {x.shape} vs table dim {table.dim}")
    sim = normalize_rows(x[None, :]) @ normalize_rows(table.vectors).T
    return float(_topk_mean(sim, k)[0])


def _batches(n: int, size: int):
    for lo in range(0, n, size):
        yield lo, min(n, lo + size)


def _rank(scores: np.ndarray, top_n: int | None, *secondary: np.ndarray) -> np.ndarray:
    """Column order by descending score, then descending secondary keys, then index."""
    n = scores.shape[0]
    if not secondary:
        order = np.argsort(-scores, kind="stable")
    else:
        keys = [np.arange(n)] + [-s for s in reversed(secondary)] + [-scores]
        order = np.lexsort(keys)
    return order if top_n is None else order[:top_n]


class Retriever:
    """Holds normalized tables and per-target statistics for one retrieval session."""

    def __init__(self, src_mapped: EmbeddingTable, tgt: EmbeddingTable, config: RetrievalConfig):
        if src_mapped.dim != tgt.dim:
            raise ValueError(f"source dim {src_mapped.dim} != target dim {tgt.dim}")
        if len(tgt) == 0 or len(src_mapped) == 0:
            raise ValueError("empty embedding table")
        self.src = src_mapped
        self.tgt = tgt
        self.config = config
        self.S = normalize_rows(src_mapped.vectors)
        self.T = normalize_rows(tgt.vectors)
        self.r_src = None
        self.lse = None
        if config.mode == "csls":
            if config.k > len(tgt) or config.k > len(src_mapped):
                raise ValueError(f"k={config.k} exceeds table size "
                                 f"(source {len(src_mapped)}, target {len(tgt)})")
            self.r_src = np.concatenate([
                _topk_mean(self.T[lo:hi] @ self.S.T, config.k)
                for lo, hi in _batches(len(tgt), config.batch_size)
            ])
        elif config.mode == "isf":
            parts = []
            for lo, hi in _batches(len(tgt), config.batch_size):
                logits = config.beta * (self.T[lo:hi] @ self.S.T)
                m = logits.max(axis=1)
                parts.append(m + np.log(np.exp(logits - m[:, None]).sum(axis=1)))
            self.lse = np.concatenate(parts)

    def scores(self, rows: np.ndarray) -> np.ndarray:
        """Score matrix (len(rows) x targets) for source row indices, modes nn/csls/isf."""
        sim = self.S[rows] @ self.T.T
        mode = self.config.mode
        if mode == "nn":
            return sim
        if mode == "csls":
            r_tgt = _topk_mean(sim, self.config.k)
            return 2 * sim - r_tgt[:, None] - self.r_src[None, :]
        if mode == "isf":
            return np.exp(self.config.beta * sim - self.lse[None, :])
        raise ValueError(f"mode {mode!r} has no dense score matrix")

    def inverted_ranks(self, rows: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """(rank, cosine) matrices for the queries; rank 1 = most similar source to the target."""
        n_src = len(self.src)
        ranks = np.empty((len(rows), len(self.tgt)), dtype=np.int64)
        cos = np.empty((len(rows), len(self.tgt)))
        for lo, hi in _batches(len(self.tgt), self.config.batch_size):
            col = self.S @ self.T[lo:hi].T
            qcos = col[rows]
            col.sort(axis=0)
            for j in range(hi - lo):
                above = n_src - np.searchsorted(col[:, j], qcos[:, j], side="right")
                ranks[:, lo + j] = above + 1
            cos[:, lo:hi] = qcos
        return ranks, cos

    def retrieve(self, queries: Sequence[str]) -> list[RankedCandidates]:
        cfg = self.config
        known = [(i, self.src.get(q)) for i, q in enumerate(queries)]
        rows = np.array([r for _, r in known if r is not None], dtype=np.int64)
        positions = [i for i, r in known if r is not None]
        out: list[RankedCandidates] = [RankedCandidates(q, (), oov=True) for q in queries]
        if len(rows) == 0:
            return out
        words = self.tgt.words
        if cfg.mode == "inn":
            ranks, cos = self.inverted_ranks(rows)
            for p, rk, cs in zip(positions, ranks, cos):
                score = -rk.astype(np.float64)
                order = _rank(score, cfg.top_n, cs)
                out[p] = RankedCandidates(queries[p], tuple((words[j], float(score[j])) for j in order))
            return out
        for lo, hi in _batches(len(rows), cfg.batch_size):
            block = self.scores(rows[lo:hi])
            for p, sc in zip(positions[lo:hi], block):
                order = _rank(sc, cfg.top_n)
                out[p] = RankedCandidates(queries[p], tuple((words[j], float(sc[j])) for j in order))
        return out


def retrieve(queries: Sequence[str], src_mapped: EmbeddingTable, tgt: EmbeddingTable,
             config: RetrievalConfig = RetrievalConfig()) -> list[RankedCandidates]:
    """Ranked target candidates for each query, in query order.

    Queries missing from ``src_mapped`` come back with ``oov=True`` and no
    candidates.
    """
    return Retriever(src_mapped, tgt, config).retrieve(queries)


def write_predictions(results: Iterable[RankedCandidates], path: str | Path, top_n: int = 10) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        for res in results:
            for rank, (cand, score) in enumerate(res.candidates[:top_n], 1):
                f.write(f"{res.query}\t{rank}\t{cand}\t{score:.8g}\n")
