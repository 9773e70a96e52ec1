"""Staged, cached pipeline: corpus text -> embeddings -> dictionary -> mapping -> report.

Every stage writes plain-text artifacts into the output directory and
records content digests of its inputs, its config section and its outputs
in ``manifest.json``. A stage whose record still matches is skipped.
"""

from __future__ import annotations

import dataclasses
import datetime as dt
import hashlib
import json
import logging
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable

import yaml
from filelock import FileLock, Timeout

from . import corpus, embeddings, evaluation, lexicon, mapping, retrieval

logger = logging.getLogger(__name__)

MANIFEST_NAME = "manifest.json"
MANIFEST_VERSION = 1
STAGES = ("preprocess", "train-embeddings", "build-dict", "split", "map", "evaluate")


class PipelineError(RuntimeError):
    pass


class ManifestError(PipelineError):
    pass


# --------------------------------------------------------------------------
# configuration

@dataclass
class CorpusSection:
    source: Path | None = None
    target: Path | None = None
    lowercase: bool = True
    normalization: str | None = "NFC"
    min_token_length: int = 1

    @property
    def rules(self) -> corpus.TokenRules:
        return corpus.TokenRules(self.lowercase, self.normalization, self.min_token_length)


@dataclass
class EmbeddingsSection:
    dimension: int = 300
    window: int = 5
    epochs: int = 10
    negatives: int = 5
    min_count: int = 5
    learning_rate: float = 0.025
    min_learning_rate: float = 1e-4
    threads: int = 1
    source_vectors: Path | None = None
    target_vectors: Path | None = None


@dataclass
class DictionarySection:
    backend: str = "static"
    table: Path | None = None
    path: Path | None = None
    endpoint: str = "https://translate.yandex.net/api/v1.5/tr.json/translate"
    api_key_env: str = "YANDEX_API_KEY"
    daily_limit: int = 1_000_000
    monthly_limit: int = 10_000_000
    max_workers: int = 4
    cache_dir: Path | None = None


@dataclass
class PipelineConfig:
    output_dir: Path
    language_pair: str = "en-xx"
    seed: int = 1
    corpus: CorpusSection = field(default_factory=CorpusSection)
    embeddings: EmbeddingsSection = field(default_factory=EmbeddingsSection)
    dictionary: DictionarySection = field(default_factory=DictionarySection)
    train_fraction: float = 0.7
    normalize: bool = True
    retrieval: list[retrieval.RetrievalConfig] = field(
        default_factory=lambda: [retrieval.RetrievalConfig("nn"), retrieval.RetrievalConfig("csls")])
    strict_gold: bool = False
    top_n: int = 10

    @property
    def sgns(self) -> embeddings.SgnsConfig:
        e = self.embeddings
        return embeddings.SgnsConfig(e.dimension, e.window, e.epochs, e.negatives, e.min_count,
                                     e.learning_rate, e.min_learning_rate, self.seed, e.threads)

    @property
    def split(self) -> lexicon.SplitSpec:
        return lexicon.SplitSpec(self.train_fraction, self.seed)

    @property
    def cache_dir(self) -> Path:
        return self.dictionary.cache_dir or self.output_dir / "cache"

    def validate(self) -> None:
        paths = [self.corpus.source, self.corpus.target, self.embeddings.source_vectors,
                 self.embeddings.target_vectors, self.dictionary.path]
        if self.dictionary.backend == "static" and self.dictionary.path is None:
            paths.append(self.dictionary.table)
            if self.dictionary.table is None:
                raise PipelineError("static backend needs dictionary.table")
        for p in paths:
            if p is not None and not Path(p).exists():
                raise PipelineError(f"input path does not exist: {p}")
        if self.dictionary.backend not in ("static", "http"):
            raise PipelineError(f"unknown translation backend {self.dictionary.backend!r}")
        modes = [r.mode for r in self.retrieval]
        if not modes or len(set(modes)) != len(modes):
            raise PipelineError(f"retrieval modes must be non-empty and distinct, got {modes}")


def _section(cls, raw: dict | None, base: Path):
    raw = dict(raw or {})
    names = {f.name: f for f in dataclasses.fields(cls)}
    unknown = set(raw) - set(names)
    if unknown:
        raise PipelineError(f"unknown {cls.__name__} keys: {sorted(unknown)}")
    for key, value in raw.items():
        if value is not None and "Path" in str(names[key].type):
            raw[key] = (base / value).resolve()
    return cls(**raw)


def load_config(path: str | Path, **overrides: Any) -> PipelineConfig:
    """Read a YAML config; relative paths are resolved against the file's directory."""
    path = Path(path)
    raw = yaml.safe_load(path.read_text(encoding="utf-8")) or {}
    base = path.parent.resolve()
    raw = dict(raw)
    if "output_dir" not in raw:
        raise PipelineError("config needs output_dir")
    cfg = PipelineConfig(
        output_dir=(base / raw.pop("output_dir")).resolve(),
        corpus=_section(CorpusSection, raw.pop("corpus", None), base),
        embeddings=_section(EmbeddingsSection, raw.pop("embeddings", None), base),
        dictionary=_section(DictionarySection, raw.pop("dictionary", None), base),
        retrieval=[retrieval.RetrievalConfig(**r) for r in raw.pop("retrieval", None)
                   or [{"mode": "nn"}, {"mode": "csls"}]],
        **{k: raw.pop(k) for k in list(raw)
           if k in ("language_pair", "seed", "train_fraction", "normalize", "strict_gold", "top_n")},
    )
    if raw:
        raise PipelineError(f"unknown config keys: {sorted(raw)}")
    for key, value in overrides.items():
        if value is None:
            continue
        if key == "seed":
            cfg.seed = value
        elif key == "threads":
            cfg.embeddings.threads = value
        else:
            raise PipelineError(f"unsupported override {key!r}")
    return cfg


# --------------------------------------------------------------------------
# digests and manifest

def file_digest(path: str | Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def config_digest(section: Any) -> str:
    def default(o):
        if isinstance(o, Path):
            return str(o)
        if dataclasses.is_dataclass(o):
            return dataclasses.asdict(o)
        raise TypeError(type(o))
    blob = json.dumps(section, sort_keys=True, default=default)
    return hashlib.sha256(blob.encode("utf-8")).hexdigest()


class Manifest:
    def __init__(self, path: Path, stages: dict | None = None):
        self.path = path
        self.stages: dict[str, dict] = stages or {}

    @classmethod
    def load(cls, output_dir: Path) -> "Manifest":
        path = output_dir / MANIFEST_NAME
        if not path.exists():
            return cls(path)
        try:
            data = json.loads(path.read_text(encoding="utf-8"))
            if data["format_version"] != MANIFEST_VERSION or not isinstance(data["stages"], dict):
                raise ValueError("unsupported format")
        except (ValueError, KeyError, TypeError, UnicodeDecodeError) as e:
            raise ManifestError(f"manifest unreadable ({path}: {e}), use --reset") from None
        return cls(path, data["stages"])

    def save(self) -> None:
        tmp = self.path.with_name(self.path.name + ".tmp")
        with open(tmp, "w", encoding="utf-8") as f:
            json.dump({"format_version": MANIFEST_VERSION, "stages": self.stages}, f,
                      indent=2, sort_keys=True)
            f.write("\n")
            f.flush()
            os.fsync(f.fileno())
        os.replace(tmp, self.path)

    def outputs_intact(self, name: str, output_dir: Path) -> bool:
        rec = self.stages.get(name)
        if rec is None:
            return False
        for rel, digest in rec["outputs"].items():
            p = output_dir / rel
            if not p.exists() or file_digest(p) != digest:
                return False
        return True


# --------------------------------------------------------------------------
# stages

@dataclass
class StagePlan:
    prerequisites: list[str]
    inputs: list[Path]
    config: Any
    outputs: list[str]
    run: Callable[[], None]


class Pipeline:
    def __init__(self, config: PipelineConfig, no_overwrite: bool = False):
        self.config = config
        self.out = config.output_dir
        self.no_overwrite = no_overwrite
        self.executed: list[str] = []

    def path(self, name: str) -> Path:
        return self.out / name

    # -- plans

    def _plan(self, stage: str) -> StagePlan:
        c = self.config
        p = self.path
        if stage == "preprocess":
            if c.corpus.source is None or c.corpus.target is None:
                raise PipelineError("preprocess needs corpus.source and corpus.target")
            return StagePlan([], [c.corpus.source, c.corpus.target],
                             {"rules": c.corpus.rules, "min_count": c.embeddings.min_count},
                             ["src.tok.txt", "tgt.tok.txt", "src.vocab.tsv", "tgt.vocab.tsv"],
                             self._preprocess)
        if stage == "train-embeddings":
            e = c.embeddings
            external = e.source_vectors is not None and e.target_vectors is not None
            if external:
                return StagePlan([], [e.source_vectors, e.target_vectors], {"external": True},
                                 ["src.vec", "tgt.vec"], self._import_embeddings)
            return StagePlan(["preprocess"], [p("src.tok.txt"), p("tgt.tok.txt")], c.sgns,
                             ["src.vec", "tgt.vec"], self._train_embeddings)
        if stage == "build-dict":
            d = c.dictionary
            if d.path is not None:
                return StagePlan([], [d.path], {"external": True, "rules": c.corpus.rules},
                                 ["dictionary.tsv"], self._import_dictionary)
            inputs = [p("src.vocab.tsv")] + ([d.table] if d.backend == "static" else [])
            section = {"backend": d.backend, "language_pair": c.language_pair,
                       "rules": c.corpus.rules}
            if d.backend == "http":
                section["endpoint"] = d.endpoint
            return StagePlan(["preprocess"], inputs, section,
                             ["dictionary.tsv", "build-dict.json"], self._build_dictionary)
        if stage == "split":
            return StagePlan(["build-dict"], [p("dictionary.tsv")], c.split,
                             ["train.tsv", "test.tsv"], self._split)
        if stage == "map":
            return StagePlan(["split", "train-embeddings"],
                             [p("train.tsv"), p("src.vec"), p("tgt.vec")],
                             {"normalize": c.normalize},
                             ["mapping.txt", "src.mapped.vec", "map.json"], self._map)
        if stage == "evaluate":
            outputs = ["report.json", "report.txt"] + [f"predictions.{r.mode}.tsv" for r in c.retrieval]
            return StagePlan(["map"], [p("test.tsv"), p("src.mapped.vec"), p("tgt.vec")],
                             {"retrieval": c.retrieval, "strict": c.strict_gold,
                              "language_pair": c.language_pair, "top_n": c.top_n},
                             outputs, self._evaluate)
        raise PipelineError(f"unknown stage {stage!r}; expected one of {STAGES}")

    # -- runners

    def run_stage(self, stage: str) -> bool:
        """Run one stage unless its cached record still matches. Returns True if it ran."""
        plan = self._plan(stage)
        self.out.mkdir(parents=True, exist_ok=True)
        manifest = Manifest.load(self.out)
        for pre in plan.prerequisites:
            if not manifest.outputs_intact(pre, self.out):
                raise PipelineError(f"stage '{pre}' incomplete; run it before '{stage}'")
        for inp in plan.inputs:
            if not Path(inp).exists():
                raise PipelineError(f"input missing for stage '{stage}': {inp}")
        inputs = {self._label(i): file_digest(i) for i in plan.inputs}
        cdigest = config_digest(plan.config)
        rec = manifest.stages.get(stage)
        if (rec is not None and rec["inputs"] == inputs and rec["config_digest"] == cdigest
                and manifest.outputs_intact(stage, self.out)):
            logger.info("stage %s: cached", stage)
            return False
        if self.no_overwrite and any(self.path(o).exists() for o in plan.outputs):
            raise PipelineError(f"stage '{stage}' outputs are stale and --no-overwrite is set")

        # drop the record first so an interrupted run never looks complete
        if rec is not None:
            del manifest.stages[stage]
            manifest.save()
        logger.info("stage %s: running", stage)
        plan.run()
        manifest.stages[stage] = {
            "inputs": inputs,
            "config_digest": cdigest,
            "outputs": {o: file_digest(self.path(o)) for o in plan.outputs},
            "completed_at": dt.datetime.now(dt.timezone.utc).isoformat(timespec="seconds"),
        }
        manifest.save()
        self.executed.append(stage)
        return True

    def run_all(self) -> evaluation.EvalReport:
        for stage in STAGES:
            self.run_stage(stage)
        return self.report()

    def report(self) -> evaluation.EvalReport:
        return evaluation.EvalReport.from_json(self.path("report.json").read_text(encoding="utf-8"))

    def _label(self, path: Path) -> str:
        path = Path(path).resolve()
        try:
            return str(path.relative_to(self.out.resolve()))
        except ValueError:
            return str(path)

    # -- stage bodies

    def _preprocess(self) -> None:
        c = self.config
        for side, src in (("src", c.corpus.source), ("tgt", c.corpus.target)):
            sentences = corpus.read_corpus(src, c.corpus.rules)
            corpus.write_tokenized(sentences, self.path(f"{side}.tok.txt"))
            vocab = corpus.build_vocab(sentences, c.embeddings.min_count)
            corpus.save_vocab(vocab, self.path(f"{side}.vocab.tsv"))
            logger.info("%s: %d sentences, %d words with count >= %d",
                        side, len(sentences), len(vocab), c.embeddings.min_count)

    def _train_embeddings(self) -> None:
        for side in ("src", "tgt"):
            sentences = corpus.read_tokenized(self.path(f"{side}.tok.txt"))
            table = embeddings.train_sgns(sentences, self.config.sgns)
            embeddings.save_embeddings(table, self.path(f"{side}.vec"))

    def _import_embeddings(self) -> None:
        e = self.config.embeddings
        for side, src in (("src", e.source_vectors), ("tgt", e.target_vectors)):
            embeddings.save_embeddings(embeddings.load_embeddings(src), self.path(f"{side}.vec"))

    def _import_dictionary(self) -> None:
        rules = self.config.corpus.rules
        pairs, skipped = [], 0
        with open(self.config.dictionary.path, encoding="utf-8") as f:
            for lineno, line in enumerate(f, 1):
                fields = line.rstrip("\n").split("\t")
                if len(fields) != 2:
                    raise PipelineError(f"{self.config.dictionary.path}:{lineno}: expected 'source<TAB>target'")
                s2, t2 = (corpus.tokenize(x, rules) for x in fields)
                if len(s2) == 1 and len(t2) == 1:
                    pairs.append((s2[0], t2[0]))
                else:
                    skipped += 1
        if skipped:
            logger.info("imported dictionary: skipped %d entries that are not single tokens", skipped)
        unique = lexicon.BilingualDictionary(tuple(dict.fromkeys(pairs)))
        lexicon.write_dictionary(unique, self.path("dictionary.tsv"))

    def _backend(self) -> lexicon.TranslationBackend:
        d = self.config.dictionary
        if d.backend == "static":
            return lexicon.StaticTableBackend.from_file(d.table)
        src, _, tgt = self.config.language_pair.partition("-")
        return lexicon.HttpTranslationBackend(d.endpoint, f"{src}-{tgt}", api_key_env=d.api_key_env)

    def _build_dictionary(self) -> None:
        c = self.config
        d = c.dictionary
        words = corpus.load_vocab(self.path("src.vocab.tsv")).words
        cache = lexicon.TranslationCache(c.cache_dir, c.language_pair)
        budget = lexicon.CharBudget(d.daily_limit, d.monthly_limit, c.cache_dir / "budget.json")
        try:
            result = lexicon.translate_batch(words, self._backend(), budget, cache,
                                             c.corpus.rules, d.max_workers)
        except lexicon.BudgetExceededError as e:
            raise PipelineError(f"{e}; translations so far are cached, rerun later to resume") from e
        lexicon.write_dictionary(result.dictionary, self.path("dictionary.tsv"))
        stats = {"words": len(words), "pairs": len(result.dictionary),
                 "skipped_multiword": result.skipped_multiword,
                 "skipped_unavailable": result.skipped_unavailable}
        self.path("build-dict.json").write_text(json.dumps(stats, indent=2, sort_keys=True) + "\n",
                                                encoding="utf-8")

    def _split(self) -> None:
        train, test = lexicon.split_dictionary(lexicon.read_dictionary(self.path("dictionary.tsv")),
                                               self.config.split)
        lexicon.write_dictionary(train, self.path("train.tsv"))
        lexicon.write_dictionary(test, self.path("test.tsv"))

    def _map(self) -> None:
        src = embeddings.load_embeddings(self.path("src.vec"))
        tgt = embeddings.load_embeddings(self.path("tgt.vec"))
        train = lexicon.read_dictionary(self.path("train.tsv"))
        am = mapping.align(train, src, tgt, self.config.normalize)
        model = mapping.fit_orthogonal(am)
        mapping.save_model(model, self.path("mapping.txt"))
        embeddings.save_embeddings(mapping.apply_mapping(model, src), self.path("src.mapped.vec"))
        stats = {"train_pairs": len(train), "used_pairs": len(am.used_pairs), "dropped": am.dropped,
                 "orthogonality_error": float(f"{model.orthogonality_error():.3g}")}
        self.path("map.json").write_text(json.dumps(stats, indent=2, sort_keys=True) + "\n",
                                         encoding="utf-8")

    def _evaluate(self) -> None:
        c = self.config
        test = lexicon.read_dictionary(self.path("test.tsv"))
        src = embeddings.load_embeddings(self.path("src.mapped.vec"))
        tgt = embeddings.load_embeddings(self.path("tgt.vec"))
        configs = [dataclasses.replace(r, top_n=c.top_n) for r in c.retrieval]
        cov = evaluation.coverage(test, src, tgt)
        rankings = evaluation.rank_covered(cov, src, tgt, configs)
        report = evaluation.build_report(test, cov, rankings, configs, c.language_pair, c.strict_gold)
        evaluation.write_report(report, self.out)
        for cfg in configs:
            retrieval.write_predictions(rankings[cfg.mode], self.path(f"predictions.{cfg.mode}.tsv"),
                                        c.top_n)


def reset(output_dir: Path) -> None:
    """Forget all cached stage records (outputs are left in place but will be rebuilt)."""
    manifest = output_dir / MANIFEST_NAME
    if manifest.exists():
        manifest.unlink()


def locked(output_dir: Path) -> FileLock:
    output_dir.mkdir(parents=True, exist_ok=True)
    return FileLock(str(output_dir / ".lock"), timeout=0)


def run(config: PipelineConfig, stages: list[str], do_reset: bool = False,
        no_overwrite: bool = False) -> Pipeline:
    config.validate()
    pipeline = Pipeline(config, no_overwrite)
    try:
        with locked(config.output_dir):
            if do_reset:
                reset(config.output_dir)
            for stage in stages:
                pipeline.run_stage(stage)
    except Timeout:
        raise PipelineError(f"another run holds the lock on {config.output_dir}") from None
    return pipeline
