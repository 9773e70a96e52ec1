"""Sentence tokenization and frequency-filtered vocabularies."""

from __future__ import annotations

import unicodedata
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Iterator, Sequence


@dataclass(frozen=True)
class TokenRules:
    lowercase: bool = True
    normalization: str | None = "NFC"
    min_token_length: int = 1


def _strip_non_letters(piece: str) -> str:
    start, end = 0, len(piece)
    while start < end and not piece[start].isalpha():
        start += 1
    while end > start and not piece[end - 1].isalpha():
        end -= 1
    return piece[start:end]


def tokenize(line: str, rules: TokenRules = TokenRules()) -> list[str]:
    """Split one sentence into word tokens.

    Whitespace-separated pieces containing any digit are dropped whole
    (``"b2c"`` and ``"1990."`` alike); the rest are trimmed of leading and
    trailing non-letter characters and kept unless empty or shorter than
    ``rules.min_token_length``.
    """
    if rules.normalization:
        line = unicodedata.normalize(rules.normalization, line)
    if rules.lowercase:
        line = line.lower()
        # lowercasing can emit decomposed sequences (e.g. U+0130)
        if rules.normalization:
            line = unicodedata.normalize(rules.normalization, line)
    tokens = []
    for piece in line.split():
        if any(ch.isdigit() for ch in piece):
            continue
        word = _strip_non_letters(piece)
        if word and len(word) >= rules.min_token_length:
            tokens.append(word)
    return tokens


def tokenize_lines(lines: Iterable[str], rules: TokenRules = TokenRules()) -> Iterator[list[str]]:
    for line in lines:
        yield tokenize(line, rules)


@dataclass(frozen=True)
class Vocabulary:
    """Words with corpus counts, in descending count then lexicographic order."""

    entries: tuple[tuple[str, int], ...]
    min_count: int = 1
    _index: dict = field(default=None, init=False, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "_index", {w: i for i, (w, _) in enumerate(self.entries)})
        if len(self._index) != len(self.entries):
            raise ValueError("duplicate words in vocabulary")

    def __len__(self) -> int:
        return len(self.entries)

    def __contains__(self, word: str) -> bool:
        return word in self._index

    def __iter__(self) -> Iterator[str]:
        return (w for w, _ in self.entries)

    @property
    def words(self) -> list[str]:
        return [w for w, _ in self.entries]

    def count(self, word: str) -> int:
        return self.entries[self._index[word]][1]

    def index(self, word: str) -> int:
        return self._index[word]


def _canonical(counts: Counter, min_count: int) -> Vocabulary:
    kept = [(w, c) for w, c in counts.items() if c >= min_count]
    kept.sort(key=lambda wc: (-wc[1], wc[0]))
    return Vocabulary(tuple(kept), min_count)


def count_tokens(sentences: Iterable[Sequence[str]]) -> Counter:
    counts: Counter = Counter()
    for sentence in sentences:
        counts.update(sentence)
    return counts


def build_vocab(sentences: Iterable[Sequence[str]], min_count: int = 5) -> Vocabulary:
    """Count tokens over a stream of tokenized sentences and keep frequent ones."""
    if min_count < 1:
        raise ValueError(f"min_count must be >= 1, got {min_count}")
    return _canonical(count_tokens(sentences), min_count)


def merge_counts(shards: Iterable[Counter], min_count: int = 5) -> Vocabulary:
    """Combine per-shard token counts; equal to counting the concatenated shards."""
    if min_count < 1:
        raise ValueError(f"min_count must be >= 1, got {min_count}")
    total: Counter = Counter()
    for shard in shards:
        total.update(shard)
    return _canonical(total, min_count)


def read_corpus(path: str | Path, rules: TokenRules = TokenRules()) -> list[list[str]]:
    with open(path, encoding="utf-8") as f:
        return [tokenize(line, rules) for line in f]


def write_tokenized(sentences: Iterable[Sequence[str]], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        for sentence in sentences:
            f.write(" ".join(sentence) + "\n")


def read_tokenized(path: str | Path) -> list[list[str]]:
    with open(path, encoding="utf-8") as f:
        return [line.split() for line in f]


def save_vocab(vocab: Vocabulary, path: str | Path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        for word, count in vocab.entries:
            f.write(f"{word}\t{count}\n")


def load_vocab(path: str | Path, min_count: int = 1) -> Vocabulary:
    entries = []
    with open(path, encoding="utf-8") as f:
        for lineno, line in enumerate(f, 1):
            parts = line.rstrip("\n").split("\t")
            if len(parts) != 2:
                raise ValueError(f"{path}:{lineno}: expected 'word<TAB>count'")
            entries.append((parts[0], int(parts[1])))
    return Vocabulary(tuple(entries), min_count)
