"""Bilingual word-embedding mapping and lexicon induction."""

from .corpus import TokenRules, Vocabulary, build_vocab, tokenize
from .embeddings import EmbeddingTable, SgnsConfig, load_embeddings, save_embeddings, train_sgns
from .evaluation import EvalReport, compare_modes, coverage, evaluate
from .lexicon import BilingualDictionary, CharBudget, SplitSpec, split_dictionary, translate_batch
from .mapping import MappingModel, align, apply_mapping, fit_orthogonal
from .retrieval import RetrievalConfig, cosine, mean_topk, retrieve

__version__ = "0.1.0"
