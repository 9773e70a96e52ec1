"""Skip-gram negative-sampling training and word2vec text-format I/O."""

from __future__ import annotations

import io
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence, TextIO

import numpy as np
from numba import njit

from .corpus import build_vocab

logger = logging.getLogger(__name__)


class EmptyVocabularyError(ValueError):
    pass


class EmbeddingFormatError(ValueError):
    """Malformed word2vec text file; ``lineno`` is 1-based."""

    def __init__(self, lineno: int, message: str):
        super().__init__(f"line {lineno}: {message}")
        self.lineno = lineno


@dataclass(frozen=True)
class SgnsConfig:
    dimension: int = 300
    window: int = 5
    epochs: int = 10
    negatives: int = 5
    min_count: int = 5
    learning_rate: float = 0.025
    min_learning_rate: float = 1e-4
    seed: int = 1
    threads: int = 1

    def __post_init__(self):
        for name in ("dimension", "window", "epochs", "negatives", "min_count", "threads"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")
        if not self.learning_rate > 0:
            raise ValueError("learning_rate must be > 0")


@dataclass(frozen=True)
class EmbeddingTable:
    """Ordered vocabulary with one vector row per word. Immutable."""

    words: tuple[str, ...]
    vectors: np.ndarray
    _index: dict = field(default=None, init=False, repr=False, compare=False)

    def __post_init__(self):
        words = tuple(self.words)
        vectors = np.array(self.vectors, dtype=np.float64, copy=True)
        if vectors.ndim != 2:
            raise ValueError("vectors must be a 2-D matrix")
        if vectors.shape[0] != len(words):
            raise ValueError(f"{len(words)} words but {vectors.shape[0]} vector rows")
        if not np.all(np.isfinite(vectors)):
            raise ValueError("vectors contain non-finite values")
        index = {w: i for i, w in enumerate(words)}
        if len(index) != len(words):
            raise ValueError("duplicate words in embedding table")
        vectors.setflags(write=False)
        object.__setattr__(self, "words", words)
        object.__setattr__(self, "vectors", vectors)
        object.__setattr__(self, "_index", index)

    def __len__(self) -> int:
        return len(self.words)

    def __contains__(self, word: str) -> bool:
        return word in self._index

    @property
    def dim(self) -> int:
        return self.vectors.shape[1]

    def index(self, word: str) -> int:
        return self._index[word]

    def get(self, word: str) -> int | None:
        return self._index.get(word)

    def vector(self, word: str) -> np.ndarray:
        return self.vectors[self._index[word]]

    def __eq__(self, other):
        if not isinstance(other, EmbeddingTable):
            return NotImplemented
        return self.words == other.words and np.array_equal(self.vectors, other.vectors)

    __hash__ = None


# --------------------------------------------------------------------------
# SGNS objective and gradient

@dataclass(frozen=True)
class SgnsGradient:
    center: np.ndarray
    context: np.ndarray
    negatives: np.ndarray


def _sigmoid(x):
    return 0.5 * (1.0 + np.tanh(0.5 * np.asarray(x, dtype=np.float64)))


def _check_event(center, context, negatives):
    u = np.asarray(center, dtype=np.float64)
    v = np.asarray(context, dtype=np.float64)
    n = np.asarray(negatives, dtype=np.float64)
    if n.size == 0:
        n = n.reshape(0, u.shape[0] if u.ndim == 1 else 0)
    if u.ndim != 1 or v.shape != u.shape or n.ndim != 2 or n.shape[1] != u.shape[0]:
        raise ValueError(
            f"dimension mismatch: center {u.shape}, context {v.shape}, negatives {n.shape}"
        )
    return u, v, n


def sgns_objective(center, context, negatives=()) -> float:
    """log s(u.v) + sum_k log s(-u.n_k) for one observed pair and its negatives."""
    u, v, n = _check_event(center, context, negatives)
    # log s(x) = -log1p(exp(-x)), written overflow-safe
    obj = -np.logaddexp(0.0, -(u @ v))
    if len(n):
        obj -= np.logaddexp(0.0, n @ u).sum()
    return float(obj)


def sgns_gradient(center, context, negatives=()) -> SgnsGradient:
    """Gradient of :func:`sgns_objective` with respect to every vector involved.

    The objective is maximized during training, so this is the ascent
    direction: for ``u.v = 0`` and no negatives the context gradient is
    ``0.5 * u``.
    """
    u, v, n = _check_event(center, context, negatives)
    pos = 1.0 - _sigmoid(u @ v)
    neg = _sigmoid(n @ u) if len(n) else np.zeros(0)
    return SgnsGradient(
        center=pos * v - neg @ n,
        context=pos * u,
        negatives=-np.outer(neg, u),
    )


# --------------------------------------------------------------------------
# training kernel

_LCG_MUL = np.uint64(25214903917)
_LCG_ADD = np.uint64(11)
_U16 = np.uint64(16)
_TWO48 = float(2**48)


@njit(cache=True, nogil=True)
def _sig(x):
    if x >= 0:
        return 1.0 / (1.0 + math.exp(-x))
    e = math.exp(x)
    return e / (1.0 + e)


@njit(cache=True, nogil=True)
def _sgns_event(syn0, syn1, center, context, negs, n_negs, alpha, neu1e):
    """One ascent step on a (center, context) pair plus negatives, in place."""
    dim = syn0.shape[1]
    for j in range(dim):
        neu1e[j] = 0.0
    for k in range(n_negs + 1):
        if k == 0:
            target = context
            label = 1.0
        else:
            target = negs[k - 1]
            label = 0.0
        f = 0.0
        for j in range(dim):
            f += syn0[center, j] * syn1[target, j]
        g = (label - _sig(f)) * alpha
        for j in range(dim):
            neu1e[j] += g * syn1[target, j]
        for j in range(dim):
            syn1[target, j] += g * syn0[center, j]
    for j in range(dim):
        syn0[center, j] += neu1e[j]


@njit(cache=True, nogil=True)
def _draw(cum, r):
    lo = 0
    hi = cum.shape[0] - 1
    while lo < hi:
        mid = (lo + hi) // 2
        if cum[mid] <= r:
            lo = mid + 1
        else:
            hi = mid
    return lo


@njit(cache=True, nogil=True)
def _train_span(syn0, syn1, tokens, offsets, first, last, cum, window, negatives,
                alpha0, alpha_min, done, total, state):
    dim = syn0.shape[1]
    neu1e = np.zeros(dim)
    negs = np.zeros(negatives, dtype=np.int64)
    rng = state[0]
    uwin = np.uint64(window)
    for s in range(first, last):
        a = offsets[s]
        b = offsets[s + 1]
        for pos in range(a, b):
            alpha = alpha0 - (alpha0 - alpha_min) * (done / total)
            if alpha < alpha_min:
                alpha = alpha_min
            center = tokens[pos]
            rng = rng * _LCG_MUL + _LCG_ADD
            reach = window - np.int64((rng >> _U16) % uwin)
            lo = max(a, pos - reach)
            hi = min(b, pos + reach + 1)
            for cpos in range(lo, hi):
                if cpos == pos:
                    continue
                context = tokens[cpos]
                n_negs = 0
                for _ in range(negatives):
                    rng = rng * _LCG_MUL + _LCG_ADD
                    t = _draw(cum, np.float64(rng >> _U16) / _TWO48)
                    if t != context:
                        negs[n_negs] = t
                        n_negs += 1
                _sgns_event(syn0, syn1, center, context, negs, n_negs, alpha, neu1e)
            done += 1
    state[0] = rng
    return done


def _spans(offsets: np.ndarray, parts: int) -> list[tuple[int, int]]:
    """Split sentences into ``parts`` contiguous runs of roughly equal token count."""
    n_sent = len(offsets) - 1
    total = offsets[-1]
    bounds = [0]
    for p in range(1, parts):
        bounds.append(int(np.searchsorted(offsets, total * p / parts)))
    bounds.append(n_sent)
    bounds = sorted(set(min(max(b, 0), n_sent) for b in bounds))
    return [(lo, hi) for lo, hi in zip(bounds, bounds[1:]) if hi > lo]


def train_sgns(sentences: Iterable[Sequence[str]], config: SgnsConfig = SgnsConfig()) -> EmbeddingTable:
    """Train skip-gram word vectors with negative sampling.

    Negatives are drawn from the unigram distribution raised to 0.75 and the
    learning rate decays linearly over all epochs. With ``threads == 1`` the
    result is bit-reproducible for a given seed; with more threads updates
    race (Hogwild style) and results vary between runs.
    """
    sentences = [list(s) for s in sentences]
    vocab = build_vocab(sentences, config.min_count)
    if len(vocab) == 0:
        raise EmptyVocabularyError(
            f"empty vocabulary: no word occurs at least {config.min_count} times"
        )
    index = {w: i for i, w in enumerate(vocab.words)}
    encoded = [[index[w] for w in s if w in index] for s in sentences]
    encoded = [s for s in encoded if s]
    lengths = np.array([len(s) for s in encoded], dtype=np.int64)
    offsets = np.concatenate([[0], np.cumsum(lengths)]).astype(np.int64)
    tokens = np.fromiter((w for s in encoded for w in s), dtype=np.int64, count=int(offsets[-1]))

    counts = np.array([c for _, c in vocab.entries], dtype=np.float64)
    weights = counts ** 0.75
    cum = np.cumsum(weights / weights.sum())
    cum[-1] = 1.0

    V, dim = len(vocab), config.dimension
    rng = np.random.default_rng(config.seed)
    syn0 = (rng.random((V, dim)) - 0.5) / dim
    syn1 = np.zeros((V, dim))

    spans = _spans(offsets, config.threads)
    seeds = np.random.SeedSequence(config.seed).generate_state(len(spans), dtype=np.uint64)
    states = [np.array([s], dtype=np.uint64) for s in seeds]
    span_tokens = [int(offsets[hi] - offsets[lo]) for lo, hi in spans]
    done = [0] * len(spans)

    def run(i: int) -> int:
        lo, hi = spans[i]
        return _train_span(
            syn0, syn1, tokens, offsets, lo, hi, cum, config.window, config.negatives,
            config.learning_rate, config.min_learning_rate, done[i],
            float(config.epochs * span_tokens[i]), states[i],
        )

    logger.info("training SGNS: %d words, %d tokens, dim %d", V, offsets[-1], dim)
    pool = ThreadPoolExecutor(len(spans)) if len(spans) > 1 else None
    try:
        for epoch in range(config.epochs):
            if pool is None:
                done[0] = run(0)
            else:
                done = list(pool.map(run, range(len(spans))))
            logger.debug("epoch %d/%d done", epoch + 1, config.epochs)
    finally:
        if pool is not None:
            pool.shutdown()

    if not np.all(np.isfinite(syn0)):
        raise FloatingPointError("SGNS training diverged (non-finite vectors)")
    return EmbeddingTable(tuple(vocab.words), syn0)


# --------------------------------------------------------------------------
# word2vec text format

def format_value(x: float) -> str:
    """Six decimal places, trailing zeros dropped; ``1.0`` -> ``"1"``."""
    s = f"{x:.6f}".rstrip("0").rstrip(".")
    return "0" if s in ("-0", "") else s


def _dump(table: EmbeddingTable, f: TextIO) -> None:
    f.write(f"{len(table)} {table.dim}\n")
    for word, row in zip(table.words, table.vectors):
        f.write(word + " " + " ".join(format_value(x) for x in row.tolist()) + "\n")


def save_embeddings(table: EmbeddingTable, destination: str | Path | TextIO) -> None:
    if hasattr(destination, "write"):
        _dump(table, destination)
        return
    with open(destination, "w", encoding="utf-8", newline="\n") as f:
        _dump(table, f)


def _parse(f: TextIO) -> EmbeddingTable:
    header = f.readline()
    parts = header.split()
    if len(parts) != 2:
        raise EmbeddingFormatError(1, f"malformed header {header.rstrip()!r}")
    try:
        n_words, dim = int(parts[0]), int(parts[1])
    except ValueError:
        raise EmbeddingFormatError(1, f"malformed header {header.rstrip()!r}") from None
    if n_words < 0 or dim < 1:
        raise EmbeddingFormatError(1, f"malformed header {header.rstrip()!r}")

    words = []
    vectors = np.empty((n_words, dim))
    seen = set()
    lineno = 1
    for lineno, line in enumerate(f, 2):
        fields = line.split()
        if not fields:
            raise EmbeddingFormatError(lineno, "empty line")
        row = len(words)
        if row >= n_words:
            raise EmbeddingFormatError(lineno, f"more rows than the {n_words} declared in the header")
        if len(fields) != dim + 1:
            raise EmbeddingFormatError(lineno, f"expected {dim} values, got {len(fields) - 1}")
        word = fields[0]
        if word in seen:
            raise EmbeddingFormatError(lineno, f"duplicate word {word!r}")
        for j, tok in enumerate(fields[1:]):
            try:
                vectors[row, j] = float(tok)
            except ValueError:
                raise EmbeddingFormatError(lineno, f"non-numeric field {tok!r}") from None
        if not np.all(np.isfinite(vectors[row])):
            raise EmbeddingFormatError(lineno, "non-finite value")
        seen.add(word)
        words.append(word)
    if len(words) != n_words:
        raise EmbeddingFormatError(
            lineno + 1, f"unexpected end of file: header declares {n_words} rows, found {len(words)}"
        )
    return EmbeddingTable(tuple(words), vectors)


def load_embeddings(source: str | Path | TextIO) -> EmbeddingTable:
    if hasattr(source, "read"):
        return _parse(source)
    with open(source, encoding="utf-8") as f:
        return _parse(f)


def dumps(table: EmbeddingTable) -> str:
    buf = io.StringIO()
    _dump(table, buf)
    return buf.getvalue()
