import io
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from bilex.corpus import build_vocab
from bilex.embeddings import (
    EmbeddingFormatError, EmbeddingTable, EmptyVocabularyError, SgnsConfig, _sgns_event,
    dumps, load_embeddings, save_embeddings, sgns_gradient, sgns_objective, train_sgns,
)


def objective_oracle(u, v, negs):
    """log sigma(u.v) + sum log sigma(-u.n), plain floats."""
    def log_sig(x):
        return -math.log1p(math.exp(-x)) if x > -30 else x - math.log1p(math.exp(x))
    dot = lambda a, b: sum(x * y for x, y in zip(a, b))
    return log_sig(dot(u, v)) + sum(log_sig(-dot(u, n)) for n in negs)


def finite_difference(u, v, negs, h=1e-5):
    params = np.concatenate([u, v, negs.ravel()])
    d = len(u)

    def f(p):
        return objective_oracle(p[:d], p[d:2 * d], p[2 * d:].reshape(-1, d))

    grad = np.empty_like(params)
    for i in range(len(params)):
        up, dn = params.copy(), params.copy()
        up[i] += h
        dn[i] -= h
        grad[i] = (f(up) - f(dn)) / (2 * h)
    return grad


def max_relative_error(analytic, numeric):
    return float(np.max(np.abs(analytic - numeric) / np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), 1e-8)))


def flat(g):
    return np.concatenate([g.center, g.context, g.negatives.ravel()])


def test_gradient_at_orthogonal_pair_without_negatives():
    u = np.array([1.0, 0.0, 2.0])
    v = np.array([0.0, 3.0, 0.0])
    g = sgns_gradient(u, v)
    np.testing.assert_allclose(g.context, 0.5 * u)
    np.testing.assert_allclose(g.center, 0.5 * v)
    assert g.negatives.shape == (0, 3)


def test_gradient_all_zero_vectors_finite():
    g = sgns_gradient(np.zeros(4), np.zeros(4), np.zeros((3, 4)))
    assert np.all(np.isfinite(flat(g)))


def test_gradient_dimension_mismatch():
    with pytest.raises(ValueError, match="dimension"):
        sgns_gradient(np.zeros(3), np.zeros(4))
    with pytest.raises(ValueError, match="dimension"):
        sgns_gradient(np.zeros(3), np.zeros(3), np.zeros((2, 4)))


def test_gradient_matches_finite_differences():
    rng = np.random.default_rng(7)
    worst = 0.0
    for _ in range(100):
        u, v = rng.standard_normal(10), rng.standard_normal(10)
        negs = rng.standard_normal((rng.integers(0, 6), 10))
        worst = max(worst, max_relative_error(flat(sgns_gradient(u, v, negs)), finite_difference(u, v, negs)))
    assert worst <= 1e-4


def test_objective_matches_oracle():
    rng = np.random.default_rng(3)
    for _ in range(20):
        u, v, n = rng.standard_normal(5), rng.standard_normal(5), rng.standard_normal((3, 5))
        assert sgns_objective(u, v, n) == pytest.approx(objective_oracle(u, v, n), rel=1e-12)


def test_kernel_step_is_gradient_ascent():
    rng = np.random.default_rng(11)
    syn0 = rng.standard_normal((6, 8))
    syn1 = rng.standard_normal((6, 8))
    center, context, negs = 0, 1, np.array([2, 4, 5])
    g = sgns_gradient(syn0[center], syn1[context], syn1[negs])
    alpha = 0.05
    expect0, expect1 = syn0.copy(), syn1.copy()
    expect0[center] += alpha * g.center
    expect1[context] += alpha * g.context
    expect1[negs] += alpha * g.negatives
    _sgns_event(syn0, syn1, center, context, negs, len(negs), alpha, np.zeros(8))
    np.testing.assert_allclose(syn0, expect0, atol=1e-12)
    np.testing.assert_allclose(syn1, expect1, atol=1e-12)


# ---------------------------------------------------------------- training

def toy_corpus(rng, n=400):
    shared = [f"p{i}" for i in range(5)]
    other = [f"q{i}" for i in range(5)]
    sentences = []
    for _ in range(n):
        word = rng.choice(["a", "b"])
        sentences.append([rng.choice(shared), rng.choice(shared), word, rng.choice(shared)])
        sentences.append([rng.choice(other), "c", rng.choice(other), rng.choice(other)])
    return sentences


def cos(u, v):
    return float(u @ v / (np.linalg.norm(u) * np.linalg.norm(v)))


def test_shared_contexts_give_similar_vectors():
    wins = 0
    for seed in range(10):
        sentences = toy_corpus(np.random.default_rng(seed), 200)
        t = train_sgns(sentences, SgnsConfig(dimension=16, epochs=50, min_count=1, seed=seed))
        wins += cos(t.vector("a"), t.vector("b")) > cos(t.vector("a"), t.vector("c"))
    assert wins >= 9


def test_default_dimension_is_300():
    t = train_sgns([["x", "y", "z"] * 3] * 5)
    assert t.vectors.shape == (3, 300)


def test_training_is_deterministic_single_thread():
    sentences = toy_corpus(np.random.default_rng(0), 100)
    cfg = SgnsConfig(dimension=20, epochs=3, min_count=1, seed=5)
    assert train_sgns(sentences, cfg) == train_sgns(sentences, cfg)
    other = train_sgns(sentences, SgnsConfig(dimension=20, epochs=3, min_count=1, seed=6))
    assert not np.array_equal(other.vectors, train_sgns(sentences, cfg).vectors)


def test_multithreaded_training_runs():
    sentences = toy_corpus(np.random.default_rng(0), 300)
    t = train_sgns(sentences, SgnsConfig(dimension=20, epochs=2, min_count=1, threads=3))
    assert t.vectors.shape == (len(build_vocab(sentences, 1)), 20)
    assert np.all(np.isfinite(t.vectors))


def test_vocabulary_equals_build_vocab():
    rng = np.random.default_rng(2)
    sentences = [[f"w{rng.zipf(1.5) % 40}" for _ in range(10)] for _ in range(200)]
    t = train_sgns(sentences, SgnsConfig(dimension=8, epochs=1, min_count=5))
    assert list(t.words) == build_vocab(sentences, 5).words
    assert np.all(np.isfinite(t.vectors))


def test_empty_vocabulary_error():
    with pytest.raises(EmptyVocabularyError, match="empty vocabulary"):
        train_sgns([["rare", "words"]], SgnsConfig(min_count=5))


@pytest.mark.parametrize("field, value", [("dimension", 0), ("window", 0), ("learning_rate", 0.0)])
def test_config_validation(field, value):
    with pytest.raises(ValueError):
        SgnsConfig(**{field: value})


# ---------------------------------------------------------------- format

def test_save_format_exact():
    t = EmbeddingTable(("a", "b"), np.array([[1.0, 0.0], [0.0, 1.0]]))
    assert dumps(t) == "2 2\na 1 0\nb 0 1\n"


def test_save_to_path_and_load(tmp_path):
    t = EmbeddingTable(("koer", "öö"), np.array([[0.25, -1.5], [1e-9, -0.0000004]]))
    save_embeddings(t, tmp_path / "v.vec")
    assert (tmp_path / "v.vec").read_text(encoding="utf-8") == "2 2\nkoer 0.25 -1.5\nöö 0 0\n"
    back = load_embeddings(tmp_path / "v.vec")
    assert back.words == t.words
    np.testing.assert_allclose(back.vectors, t.vectors, atol=1e-6)


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 12), st.integers(1, 9), st.integers(0, 2**32 - 1), st.floats(0.01, 100))
def test_round_trip_random_tables(n, d, seed, scale):
    rng = np.random.default_rng(seed)
    t = EmbeddingTable(tuple(f"w{i}" for i in range(n)), scale * rng.standard_normal((n, d)))
    back = load_embeddings(io.StringIO(dumps(t)))
    assert back.words == t.words
    assert np.max(np.abs(back.vectors - t.vectors), initial=0.0) <= 1e-6


@pytest.mark.parametrize("text, lineno, message", [
    ("3 2\na 1 0\nb 0 1\n", 4, "end of file"),
    ("2\na 1 0\nb 0 1\n", 1, "header"),
    ("x 2\na 1 0\n", 1, "header"),
    ("2 2\na 1 0\nb 0\n", 3, "expected 2 values"),
    ("2 2\na 1 zero\nb 0 1\n", 2, "non-numeric"),
    ("1 2\na 1 0\nb 0 1\n", 3, "more rows"),
    ("2 2\na 1 0\na 0 1\n", 3, "duplicate"),
    ("1 2\na nan 0\n", 2, "non-finite"),
])
def test_malformed_files(text, lineno, message):
    with pytest.raises(EmbeddingFormatError, match=message) as exc:
        load_embeddings(io.StringIO(text))
    assert exc.value.lineno == lineno
    assert f"line {lineno}" in str(exc.value)


def test_table_invariants():
    with pytest.raises(ValueError):
        EmbeddingTable(("a",), np.zeros((2, 3)))
    with pytest.raises(ValueError):
        EmbeddingTable(("a", "a"), np.zeros((2, 3)))
    with pytest.raises(ValueError):
        EmbeddingTable(("a",), np.array([[np.inf]]))
    t = EmbeddingTable(("a",), np.zeros((1, 2)))
    with pytest.raises(ValueError):
        t.vectors[0, 0] = 1.0
