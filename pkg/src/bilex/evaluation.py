"""Coverage and P@1 accuracy of induced translations."""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

from .embeddings import EmbeddingTable
from .lexicon import BilingualDictionary
from .retrieval import RankedCandidates, RetrievalConfig, Retriever


def _pct(num: int, den: int) -> float | None:
    return None if den == 0 else round(100.0 * num / den, 2)


def dictionary_digest(dictionary: BilingualDictionary) -> str:
    """Order-independent digest of a dictionary's pair set."""
    h = hashlib.sha256()
    for s, t in sorted(set(dictionary.pairs)):
        h.update(f"{s}\t{t}\n".encode("utf-8"))
    return h.hexdigest()


@dataclass(frozen=True)
class Coverage:
    covered: tuple[str, ...]
    n_test: int
    n_test_pairs: int

    @property
    def n_covered(self) -> int:
        return len(self.covered)

    @property
    def pct(self) -> float:
        return _pct(self.n_covered, self.n_test) or 0.0


def coverage(test: BilingualDictionary, src_mapped: EmbeddingTable, tgt: EmbeddingTable) -> Coverage:
    """Distinct test sources present in ``src_mapped`` with at least one gold target in ``tgt``."""
    if len(test) == 0:
        raise ValueError("empty test dictionary")
    gold = test.gold()
    covered = tuple(s for s, targets in gold.items()
                    if s in src_mapped and any(t in tgt for t in targets))
    return Coverage(covered, len(gold), len(test))


@dataclass
class ModeResult:
    n_covered: int
    n_correct: int
    accuracy_pct: float | None
    accuracy_all_pct: float | None
    config: dict = field(default_factory=dict)


def accuracy(test: BilingualDictionary, predictions: Mapping[str, str | None],
             covered: Sequence[str], strict: bool = False) -> tuple[int, float | None]:
    """(n_correct, accuracy %) over the covered queries.

    A prediction is correct when it matches any gold target of the query, or
    only the first-listed one when ``strict``. Accuracy is None when nothing
    is covered.
    """
    covered_set = set(covered)
    extra = set(predictions) - covered_set
    if extra:
        raise ValueError(f"predictions for uncovered queries: {sorted(extra)[:5]}")
    missing = covered_set - set(predictions)
    if missing:
        raise ValueError(f"no prediction for covered queries: {sorted(missing)[:5]}")
    gold = test.gold()
    correct = 0
    for q in covered_set:
        targets = gold[q][:1] if strict else gold[q]
        if predictions[q] in targets:
            correct += 1
    return correct, _pct(correct, len(covered_set))


@dataclass
class EvalReport:
    language_pair: str
    coverage_pct: float
    n_test: int
    n_test_pairs: int
    n_covered: int
    test_digest: str
    modes: dict[str, ModeResult] = field(default_factory=dict)
    predictions: dict[str, list[dict]] = field(default_factory=dict)

    def accuracy_pct(self, mode: str) -> float | None:
        return self.modes[mode].accuracy_pct

    def to_json(self) -> str:
        # mode order is meaningful (deltas are taken against the first one)
        return json.dumps(asdict(self), indent=2, ensure_ascii=False) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "EvalReport":
        d = json.loads(text)
        d["modes"] = {m: ModeResult(**r) for m, r in d["modes"].items()}
        return cls(**d)

    def to_text(self) -> str:
        lines = [
            f"language pair: {self.language_pair}",
            f"coverage: {self.coverage_pct:.2f}% "
            f"({self.n_covered}/{self.n_test} distinct source words; {self.n_test_pairs} test pairs)",
        ]
        width = max([4] + [len(m) for m in self.modes])
        lines.append(f"{'mode':<{width}}  {'acc (%)':>8}  {'correct':>8}  {'acc/all (%)':>11}")
        for mode, r in self.modes.items():
            acc = "n/a" if r.accuracy_pct is None else f"{r.accuracy_pct:.2f}"
            acc_all = "n/a" if r.accuracy_all_pct is None else f"{r.accuracy_all_pct:.2f}"
            lines.append(f"{mode:<{width}}  {acc:>8}  {r.n_correct:>8}  {acc_all:>11}")
        return "\n".join(lines) + "\n"


def rank_covered(cov: Coverage, src_mapped: EmbeddingTable, tgt: EmbeddingTable,
                 configs: Sequence[RetrievalConfig]) -> dict[str, list[RankedCandidates]]:
    """Run every retrieval mode over the covered queries."""
    return {cfg.mode: Retriever(src_mapped, tgt, cfg).retrieve(list(cov.covered)) if cov.covered else []
            for cfg in configs}


def build_report(test: BilingualDictionary, cov: Coverage, rankings: Mapping[str, list[RankedCandidates]],
                 configs: Sequence[RetrievalConfig], language_pair: str = "src-tgt",
                 strict: bool = False) -> EvalReport:
    report = EvalReport(language_pair, cov.pct, cov.n_test, cov.n_test_pairs, cov.n_covered,
                        dictionary_digest(test))
    gold = test.gold()
    for cfg in configs:
        results = rankings[cfg.mode]
        top1 = {r.query: r.top1 for r in results}
        n_correct, acc = accuracy(test, top1, cov.covered, strict)
        report.modes[cfg.mode] = ModeResult(
            cov.n_covered, n_correct, acc, _pct(n_correct, cov.n_test),
            {"k": cfg.k, "beta": cfg.beta} if cfg.mode in ("csls", "isf") else {},
        )
        report.predictions[cfg.mode] = [
            {"query": r.query, "prediction": r.top1,
             "correct": r.top1 in (gold[r.query][:1] if strict else gold[r.query])}
            for r in results
        ]
    return report


def evaluate(test: BilingualDictionary, src_mapped: EmbeddingTable, tgt: EmbeddingTable,
             configs: Sequence[RetrievalConfig] = (RetrievalConfig("nn"), RetrievalConfig("csls")),
             language_pair: str = "src-tgt", strict: bool = False) -> EvalReport:
    """Coverage plus P@1 for each retrieval mode on a test dictionary."""
    cov = coverage(test, src_mapped, tgt)
    return build_report(test, cov, rank_covered(cov, src_mapped, tgt, configs),
                        configs, language_pair, strict)


@dataclass(frozen=True)
class Comparison:
    modes: tuple[str, ...]
    accuracy: dict[str, float | None]
    deltas: dict[str, float | None]

    def to_text(self, label: str = "") -> str:
        base = self.modes[0]
        head = ["Language"] + [f"{m} (%)" for m in self.modes]
        row = [label or "-"] + [_fmt(self.accuracy[m]) for m in self.modes]
        if len(self.modes) > 1:
            for m in self.modes[1:]:
                head.append(f"{m}-{base}")
                d = self.deltas[m]
                row.append("n/a" if d is None else f"{d:+.2f}")
        widths = [max(len(h), len(r)) for h, r in zip(head, row)]
        return "\n".join(
            " | ".join(c.ljust(w) for c, w in zip(line, widths)) for line in (head, row)
        ) + "\n"


def _fmt(x: float | None) -> str:
    return "n/a" if x is None else f"{x:.2f}"


def compare_modes(reports: Sequence[EvalReport]) -> Comparison:
    """Side-by-side per-mode accuracies; deltas are relative to the first mode."""
    if not reports:
        raise ValueError("no reports to compare")
    digest = reports[0].test_digest
    if any(r.test_digest != digest for r in reports):
        raise ValueError("reports were computed on different test sets")
    acc: dict[str, float | None] = {}
    for r in reports:
        for mode, res in r.modes.items():
            acc.setdefault(mode, res.accuracy_pct)
    modes = tuple(acc)
    base = acc[modes[0]]
    deltas = {}
    for m in modes[1:]:
        deltas[m] = None if base is None or acc[m] is None else round(acc[m] - base, 2)
    return Comparison(modes, acc, deltas)


def write_report(report: EvalReport, directory: str | Path) -> None:
    directory = Path(directory)
    (directory / "report.json").write_text(report.to_json(), encoding="utf-8")
    text = report.to_text()
    if len(report.modes) > 1:
        text += "\n" + compare_modes([report]).to_text(report.language_pair)
    (directory / "report.txt").write_text(text, encoding="utf-8")
