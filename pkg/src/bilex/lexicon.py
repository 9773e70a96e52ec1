"""Seed-dictionary construction: translation backends, budget, cache, split."""

from __future__ import annotations

import datetime as dt
import json
import logging
import math
import os
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from fractions import Fraction
from pathlib import Path
from typing import Callable, Iterable, Iterator, Mapping, Protocol

import numpy as np
import requests

from .corpus import TokenRules, tokenize

logger = logging.getLogger(__name__)


# --------------------------------------------------------------------------
# dictionary

@dataclass(frozen=True)
class BilingualDictionary:
    """Ordered, duplicate-free (source, target) word pairs."""

    pairs: tuple[tuple[str, str], ...] = ()

    def __post_init__(self):
        pairs = tuple((str(s), str(t)) for s, t in self.pairs)
        seen = set()
        for s, t in pairs:
            if not s or not t or len(s.split()) != 1 or len(t.split()) != 1 or s != s.strip() or t != t.strip():
                raise ValueError(f"dictionary entries must be single tokens: {(s, t)!r}")
            if (s, t) in seen:
                raise ValueError(f"duplicate dictionary pair {(s, t)!r}")
            seen.add((s, t))
        object.__setattr__(self, "pairs", pairs)

    def __len__(self) -> int:
        return len(self.pairs)

    def __iter__(self) -> Iterator[tuple[str, str]]:
        return iter(self.pairs)

    def sources(self) -> list[str]:
        """Distinct source words in first-occurrence order."""
        return list(dict.fromkeys(s for s, _ in self.pairs))

    def gold(self) -> dict[str, list[str]]:
        """Source word -> its target words, in dictionary order."""
        out: dict[str, list[str]] = {}
        for s, t in self.pairs:
            out.setdefault(s, []).append(t)
        return out


def read_dictionary(path: str | Path) -> BilingualDictionary:
    pairs = []
    seen = set()
    with open(path, encoding="utf-8") as f:
        for lineno, line in enumerate(f, 1):
            line = line.rstrip("\n")
            if not line.strip():
                continue
            parts = line.split("\t")
            if len(parts) != 2:
                parts = line.split()
            if len(parts) != 2:
                raise ValueError(f"{path}:{lineno}: expected 'source<TAB>target'")
            pair = (parts[0].strip(), parts[1].strip())
            if pair not in seen:
                seen.add(pair)
                pairs.append(pair)
    return BilingualDictionary(tuple(pairs))


def write_dictionary(dictionary: BilingualDictionary, path: str | Path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        for s, t in dictionary:
            f.write(f"{s}\t{t}\n")


# --------------------------------------------------------------------------
# backends

class TranslationBackend(Protocol):
    def translate(self, word: str) -> str | None:
        """Translation text, or None when unavailable."""


class StaticTableBackend:
    """Looks words up in a fixed table. Used for tests and offline runs."""

    def __init__(self, table: Mapping[str, str]):
        self.table = dict(table)

    @classmethod
    def from_file(cls, path: str | Path) -> "StaticTableBackend":
        table = {}
        with open(path, encoding="utf-8") as f:
            for line in f:
                line = line.rstrip("\n")
                if not line or "\t" not in line:
                    continue
                src, tgt = line.split("\t", 1)
                table.setdefault(src, tgt)
        return cls(table)

    def translate(self, word: str) -> str | None:
        return self.table.get(word)


def _clean(text: str) -> str:
    return " ".join(text.split())


class TranslationCache:
    """Append-only TSV of backend answers for one language pair.

    Only successful answers are stored; unavailable words are retried on
    the next run.
    """

    def __init__(self, directory: str | Path, language_pair: str):
        self.path = Path(directory) / f"{language_pair}.tsv"
        self.path.parent.mkdir(parents=True, exist_ok=True)
        self._entries: dict[str, str] = {}
        self._lock = threading.Lock()
        if self.path.exists():
            with open(self.path, encoding="utf-8") as f:
                for line in f:
                    line = line.rstrip("\n")
                    if "\t" in line:
                        src, tgt = line.split("\t", 1)
                        self._entries.setdefault(src, tgt)

    def __contains__(self, word: str) -> bool:
        return word in self._entries

    def __len__(self) -> int:
        return len(self._entries)

    def translate(self, word: str) -> str | None:
        return self._entries.get(word)

    def add(self, word: str, translation: str) -> None:
        translation = _clean(translation)
        with self._lock:
            if word in self._entries:
                return
            self._entries[word] = translation
            with open(self.path, "a", encoding="utf-8", newline="\n") as f:
                f.write(f"{word}\t{translation}\n")


class HttpTranslationBackend:
    """Remote translation over HTTP GET (Yandex v1.5 JSON API shape).

    Request: ``GET endpoint?key=...&text=word&lang=en-et``; response JSON
    carries the translation in ``text[0]``. Failed requests are retried
    ``retries`` times with exponential backoff, then reported unavailable.
    """

    def __init__(self, endpoint: str, lang: str, api_key: str | None = None,
                 api_key_env: str = "YANDEX_API_KEY", retries: int = 3,
                 backoff: float = 1.0, timeout: float = 10.0,
                 session: requests.Session | None = None,
                 sleep: Callable[[float], None] = time.sleep):
        if api_key is None:
            api_key = os.environ.get(api_key_env)
        if not api_key:
            raise RuntimeError(f"translation API key missing: set ${api_key_env}")
        self.endpoint = endpoint
        self.lang = lang
        self.api_key = api_key
        self.retries = retries
        self.backoff = backoff
        self.timeout = timeout
        self.session = session or requests.Session()
        self.sleep = sleep
        self.failures = 0

    def _request(self, word: str) -> str:
        resp = self.session.get(
            self.endpoint,
            params={"key": self.api_key, "text": word, "lang": self.lang},
            timeout=self.timeout,
        )
        resp.raise_for_status()
        text = resp.json()["text"]
        return text[0] if isinstance(text, list) else text

    def translate(self, word: str) -> str | None:
        for attempt in range(self.retries + 1):
            try:
                return self._request(word)
            except (requests.RequestException, ValueError, KeyError, IndexError, TypeError) as e:
                if attempt == self.retries:
                    logger.warning("giving up on %r after %d attempts: %s", word, attempt + 1, e)
                    self.failures += 1
                    return None
                self.sleep(self.backoff * 2 ** attempt)
        return None


# --------------------------------------------------------------------------
# budget

class BudgetExceededError(RuntimeError):
    """Raised when the next request would overrun the character budget.

    ``index`` is the position in the de-duplicated word list that could not
    be sent; ``partial`` holds the dictionary built from the words before it.
    """

    def __init__(self, index: int, word: str, partial: "BilingualDictionary | None" = None):
        super().__init__(f"budget exceeded at word {index} ({word!r})")
        self.index = index
        self.word = word
        self.partial = partial


class CharBudget:
    """Daily and monthly character quotas, persisted as JSON when ``path`` is set."""

    def __init__(self, daily_limit: int = 1_000_000, monthly_limit: int = 10_000_000,
                 path: str | Path | None = None,
                 today: Callable[[], dt.date] = dt.date.today):
        self.daily_limit = daily_limit
        self.monthly_limit = monthly_limit
        self.path = Path(path) if path else None
        self._today = today
        self._lock = threading.Lock()
        self.day = today().isoformat()
        self.month = self.day[:7]
        self.consumed_today = 0
        self.consumed_month = 0
        if self.path and self.path.exists():
            state = json.loads(self.path.read_text(encoding="utf-8"))
            self.day = state["day"]
            self.month = state["month"]
            self.consumed_today = int(state["consumed_today"])
            self.consumed_month = int(state["consumed_month"])
        self._roll()

    def _roll(self) -> None:
        day = self._today().isoformat()
        if day[:7] != self.month:
            self.month = day[:7]
            self.consumed_month = 0
        if day != self.day:
            self.day = day
            self.consumed_today = 0

    def remaining(self) -> int:
        with self._lock:
            self._roll()
            return min(self.daily_limit - self.consumed_today,
                       self.monthly_limit - self.consumed_month)

    def try_charge(self, chars: int) -> bool:
        """Consume ``chars`` if both quotas allow it; never overruns."""
        with self._lock:
            self._roll()
            if (self.consumed_today + chars > self.daily_limit
                    or self.consumed_month + chars > self.monthly_limit):
                return False
            self.consumed_today += chars
            self.consumed_month += chars
            self._save()
            return True

    def _save(self) -> None:
        if not self.path:
            return
        self.path.parent.mkdir(parents=True, exist_ok=True)
        tmp = self.path.with_suffix(self.path.suffix + ".tmp")
        tmp.write_text(json.dumps({
            "day": self.day, "month": self.month,
            "consumed_today": self.consumed_today, "consumed_month": self.consumed_month,
        }), encoding="utf-8")
        os.replace(tmp, self.path)


# --------------------------------------------------------------------------
# dictionary building

@dataclass
class BatchResult:
    dictionary: BilingualDictionary
    skipped_multiword: int = 0
    skipped_unavailable: int = 0
    cache_hits: int = 0
    requests: int = 0

    @property
    def skipped(self) -> int:
        return self.skipped_multiword + self.skipped_unavailable


def _collect(words, answers, rules, result: BatchResult) -> BilingualDictionary:
    pairs = []
    for word, raw in zip(words, answers):
        if raw is None:
            result.skipped_unavailable += 1
            continue
        if len(raw.split()) > 1:
            result.skipped_multiword += 1
            continue
        tokens = tokenize(raw, rules)
        if len(tokens) != 1:
            result.skipped_unavailable += 1
            continue
        pairs.append((word, tokens[0]))
    return BilingualDictionary(tuple(pairs))


def translate_batch(words: Iterable[str], backend: TranslationBackend, budget: CharBudget | None = None,
                    cache: TranslationCache | None = None, rules: TokenRules = TokenRules(),
                    max_workers: int = 4) -> BatchResult:
    """Translate single words, keeping only single-token translations.

    Cached words cost nothing. Every other word is charged against the
    budget (by its character count) before its request is issued; requests
    run with at most ``max_workers`` in flight. When the budget cannot cover
    the next word, :class:`BudgetExceededError` is raised after the earlier
    requests complete, so a rerun with the same cache resumes from there.
    """
    words = list(dict.fromkeys(words))
    result = BatchResult(BilingualDictionary())
    answers: list = [None] * len(words)
    futures = {}
    stop = None
    with ThreadPoolExecutor(max(1, max_workers)) as pool:
        for i, word in enumerate(words):
            if cache is not None and word in cache:
                answers[i] = cache.translate(word)
                result.cache_hits += 1
                continue
            if budget is not None and not budget.try_charge(len(word)):
                stop = i
                break
            futures[i] = pool.submit(backend.translate, word)
            result.requests += 1
        for i in sorted(futures):
            answers[i] = futures[i].result()
            if cache is not None and answers[i] is not None:
                cache.add(words[i], answers[i])

    end = len(words) if stop is None else stop
    result.dictionary = _collect(words[:end], answers[:end], rules, result)
    if stop is not None:
        raise BudgetExceededError(stop, words[stop], result.dictionary)
    logger.info("translated %d words: %d pairs, %d multiword, %d unavailable, %d cached",
                len(words), len(result.dictionary), result.skipped_multiword,
                result.skipped_unavailable, result.cache_hits)
    return result


# --------------------------------------------------------------------------
# split

@dataclass(frozen=True)
class SplitSpec:
    train_fraction: float = 0.7
    seed: int = 0

    def __post_init__(self):
        if not 0 < self.train_fraction < 1:
            raise ValueError("train_fraction must be in (0, 1)")


def train_size(n: int, train_fraction: float = 0.7) -> int:
    """round(train_fraction * n) with halves rounded up, in exact arithmetic."""
    return math.floor(Fraction(str(train_fraction)) * n + Fraction(1, 2))


def split_dictionary(dictionary: BilingualDictionary, spec: SplitSpec = SplitSpec()
                     ) -> tuple[BilingualDictionary, BilingualDictionary]:
    if len(dictionary) == 0:
        raise ValueError("cannot split an empty dictionary")
    order = np.random.default_rng(spec.seed).permutation(len(dictionary))
    shuffled = [dictionary.pairs[i] for i in order]
    k = train_size(len(dictionary), spec.train_fraction)
    return BilingualDictionary(tuple(shuffled[:k])), BilingualDictionary(tuple(shuffled[k:]))
