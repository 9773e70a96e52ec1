import math

import numpy as np
import pytest

from bilex.embeddings import EmbeddingTable
from bilex.retrieval import MODES, RetrievalConfig, Retriever, cosine, mean_topk, retrieve, write_predictions


def table(prefix, rows):
    rows = np.asarray(rows, dtype=float)
    return EmbeddingTable(tuple(f"{prefix}{i}" for i in range(len(rows))), rows)


# ---------------------------------------------------------------- brute-force oracle

def _cos(u, v):
    dot = sum(a * b for a, b in zip(u, v))
    nu = math.sqrt(sum(a * a for a in u))
    nv = math.sqrt(sum(b * b for b in v))
    return 0.0 if nu == 0 or nv == 0 else dot / (nu * nv)


def _mean_top(values, k):
    return sum(sorted(values, reverse=True)[:k]) / k


def oracle(query, src, tgt, mode, k=10, beta=30.0):
    """Full (target word, score) ranking by direct pairwise evaluation of the mode formula."""
    S = src.vectors.tolist()
    T = tgt.vectors.tolist()
    x = S[src.words.index(query)]
    cos_x = [_cos(x, t) for t in T]
    if mode == "nn":
        keys = [(-c, j) for j, c in enumerate(cos_x)]
        scores = cos_x
    elif mode == "csls":
        r_t = _mean_top(cos_x, k)
        r_s = [_mean_top([_cos(t, s) for s in S], k) for t in T]
        scores = [2 * c - r_t - r for c, r in zip(cos_x, r_s)]
        keys = [(-sc, j) for j, sc in enumerate(scores)]
    elif mode == "isf":
        scores = [math.exp(beta * c) / sum(math.exp(beta * _cos(s, t)) for s in S)
                  for c, t in zip(cos_x, T)]
        keys = [(-sc, j) for j, sc in enumerate(scores)]
    elif mode == "inn":
        scores, keys = [], []
        for j, t in enumerate(T):
            col = [_cos(s, t) for s in S]
            mine = col[src.words.index(query)]
            rank = 1 + sum(1 for c in col if c > mine)
            scores.append(-rank)
            keys.append((rank, -mine, j))
    order = sorted(range(len(T)), key=lambda j: keys[j])
    return [(tgt.words[j], scores[j]) for j in order]


@pytest.mark.parametrize("mode", MODES)
def test_rankings_match_brute_force(mode):
    rng = np.random.default_rng(hash(mode) % 2**32)
    for trial in range(50):
        n_src, n_tgt, d = rng.integers(3, 40), rng.integers(3, 51), rng.integers(2, 12)
        src = table("s", rng.standard_normal((n_src, d)))
        tgt = table("t", rng.standard_normal((n_tgt, d)))
        k = int(rng.integers(1, min(n_src, n_tgt) + 1))
        cfg = RetrievalConfig(mode, k=k, beta=float(rng.uniform(1, 40)), top_n=None,
                              batch_size=int(rng.integers(1, 20)))
        queries = list(rng.choice(src.words, size=5))
        for q, got in zip(queries, retrieve(queries, src, tgt, cfg)):
            expect = oracle(q, src, tgt, mode, k, cfg.beta)
            assert [w for w, _ in got.candidates] == [w for w, _ in expect]
            np.testing.assert_allclose([s for _, s in got.candidates], [s for _, s in expect],
                                       rtol=1e-9, atol=1e-12)


# ---------------------------------------------------------------- examples

def test_cosine_examples():
    assert cosine([1, 0], [1, 0]) == 1.0
    assert cosine([1, 0], [0, 1]) == 0.0
    assert cosine([1, 1], [1, 0]) == pytest.approx(0.7071, abs=1e-4)
    assert cosine([0, 0], [1, 0]) == 0.0
    with pytest.raises(ValueError):
        cosine([1, 0], [1, 0, 0])


def test_mean_topk_examples():
    t = table("t", [[1, 0], [0, 1], [-1, 0]])
    assert mean_topk([1, 0], t, 2) == pytest.approx(0.5)
    assert mean_topk([1, 0], t, 1) == pytest.approx(1.0)
    assert mean_topk([1, 0], t, 3) == pytest.approx(0.0)
    with pytest.raises(ValueError):
        mean_topk([1, 0], t, 4)


def test_nn_exact_match():
    src = table("x", [[1, 0]])
    tgt = EmbeddingTable(("α", "γ"), np.array([[1.0, 0.0], [0.0, 1.0]]))
    assert retrieve(["x0"], src, tgt, RetrievalConfig("nn"))[0].top1 == "α"


def test_csls_hand_computed():
    src = table("x", [[1, 0]])
    tgt = table("y", [[0.9, math.sqrt(1 - 0.81)], [0.8, -0.6]])
    res = retrieve(["x0"], src, tgt, RetrievalConfig("csls", k=1))[0]
    assert res.top1 == "y0"
    scores = dict(res.candidates)
    assert scores["y0"] == pytest.approx(0.0, abs=1e-12)
    assert scores["y1"] == pytest.approx(-0.1, abs=1e-12)


@pytest.mark.parametrize("beta", [0.5, 30.0, 200.0])
def test_isf_symmetric_sources_split_evenly(beta):
    src = table("s", [[1, 1], [1, -1]])
    tgt = table("y", [[1, 0]])
    res = retrieve(["s0", "s1"], src, tgt, RetrievalConfig("isf", beta=beta))
    assert [r.candidates[0][1] for r in res] == pytest.approx([0.5, 0.5], abs=1e-12)


def test_isf_columns_sum_to_one():
    rng = np.random.default_rng(4)
    src, tgt = table("s", rng.standard_normal((30, 6))), table("t", rng.standard_normal((20, 6)))
    r = Retriever(src, tgt, RetrievalConfig("isf", beta=30, batch_size=7))
    probs = r.scores(np.arange(30))
    np.testing.assert_allclose(probs.sum(axis=0), 1.0, atol=1e-9)


def test_isf_no_overflow_for_large_beta():
    rng = np.random.default_rng(0)
    src, tgt = table("s", rng.standard_normal((10, 4))), table("t", rng.standard_normal((10, 4)))
    res = retrieve(list(src.words), src, tgt, RetrievalConfig("isf", beta=5000.0, top_n=None))
    assert all(np.isfinite(s) for r in res for _, s in r.candidates)


def test_isf_argmax_source_stable_in_beta():
    rng = np.random.default_rng(8)
    src, tgt = table("s", rng.standard_normal((25, 5))), table("t", rng.standard_normal((15, 5)))
    winners = None
    for beta in (1.0, 10.0, 30.0, 100.0):
        w = Retriever(src, tgt, RetrievalConfig("isf", beta=beta)).scores(np.arange(25)).argmax(axis=0)
        if winners is not None:
            np.testing.assert_array_equal(w, winners)
        winners = w


def test_csls_argmax_ignores_query_term():
    rng = np.random.default_rng(6)
    src, tgt = table("s", rng.standard_normal((40, 8))), table("t", rng.standard_normal((30, 8)))
    r = Retriever(src, tgt, RetrievalConfig("csls", k=5))
    S = src.vectors / np.linalg.norm(src.vectors, axis=1, keepdims=True)
    T = tgt.vectors / np.linalg.norm(tgt.vectors, axis=1, keepdims=True)
    reduced = 2 * S @ T.T - r.r_src[None, :]
    np.testing.assert_array_equal(r.scores(np.arange(40)).argmax(axis=1), reduced.argmax(axis=1))


def test_csls_equals_nn_when_hubness_uniform():
    # targets at the vertices of a regular polygon, sources identical: every r_S equal
    angles = np.linspace(0, 2 * np.pi, 8, endpoint=False)
    ring = np.c_[np.cos(angles), np.sin(angles)]
    src, tgt = table("s", ring), table("t", ring)
    nn = retrieve(list(src.words), src, tgt, RetrievalConfig("nn"))
    csls = retrieve(list(src.words), src, tgt, RetrievalConfig("csls", k=3))
    assert [r.top1 for r in nn] == [r.top1 for r in csls]


def test_ties_follow_target_order():
    src = table("s", [[1, 0], [0, 1]])
    tgt = EmbeddingTable(("b", "a", "c"), np.array([[0.0, 1.0], [0.0, 1.0], [1.0, 0.0]]))
    for mode in MODES:
        res = retrieve(["s0"], src, tgt, RetrievalConfig(mode, k=1, top_n=None))[0]
        assert [w for w, _ in res.candidates] == ["c", "b", "a"], mode


@pytest.mark.parametrize("mode", MODES)
def test_batching_does_not_change_results(mode):
    rng = np.random.default_rng(12)
    src, tgt = table("s", rng.standard_normal((60, 10))), table("t", rng.standard_normal((45, 10)))
    queries = list(src.words)
    full = retrieve(queries, src, tgt, RetrievalConfig(mode, k=4, top_n=None, batch_size=1000))
    for bs in (1, 7, 45):
        got = retrieve(queries, src, tgt, RetrievalConfig(mode, k=4, top_n=None, batch_size=bs))
        for a, b in zip(full, got):
            assert [w for w, _ in a.candidates] == [w for w, _ in b.candidates]
            np.testing.assert_allclose([s for _, s in a.candidates], [s for _, s in b.candidates],
                                       rtol=1e-12, atol=1e-15)


def test_scores_non_increasing_and_top_n():
    rng = np.random.default_rng(3)
    src, tgt = table("s", rng.standard_normal((20, 4))), table("t", rng.standard_normal((20, 4)))
    for mode in MODES:
        for res in retrieve(list(src.words), src, tgt, RetrievalConfig(mode, k=3, top_n=5)):
            scores = [s for _, s in res.candidates]
            assert len(scores) == 5
            assert all(a >= b for a, b in zip(scores, scores[1:]))


def test_oov_query_marked_not_fatal():
    src, tgt = table("s", [[1, 0]]), table("t", [[1, 0]])
    res = retrieve(["s0", "missing"], src, tgt, RetrievalConfig("nn"))
    assert res[0].top1 == "t0" and not res[0].oov
    assert res[1].oov and res[1].candidates == () and res[1].top1 is None


def test_config_validation():
    with pytest.raises(ValueError):
        RetrievalConfig("knn")
    with pytest.raises(ValueError):
        RetrievalConfig("isf", beta=0)
    with pytest.raises(ValueError, match="exceeds"):
        retrieve(["s0"], table("s", [[1, 0]]), table("t", [[1, 0]]), RetrievalConfig("csls", k=2))


def test_prediction_dump(tmp_path):
    src, tgt = table("s", [[1, 0]]), table("t", [[1, 0], [0, 1]])
    res = retrieve(["s0"], src, tgt, RetrievalConfig("nn"))
    write_predictions(res, tmp_path / "p.tsv", top_n=2)
    assert (tmp_path / "p.tsv").read_text(encoding="utf-8") == "s0\t1\tt0\t1\ns0\t2\tt1\t0\n"
