"""Metric hand cases: BLEU, embedding similarity, rankers, t-test."""

import math

import numpy as np
import pytest

from paag.errors import ContractError
from paag.metrics import (bm25_rank, bm25_scores, corpus_bleu,
                          embedding_metrics, paired_t_test, rank_reviews,
                          sentence_bleu1, tfidf_rank, tfidf_scores)


# -- BLEU -------------------------------------------------------------------


def test_bleu_perfect_match_scores_hundred():
    report = corpus_bleu([["the", "cat", "sat", "down"]],
                         [["the", "cat", "sat", "down"]])
    assert report.bleu == pytest.approx(100.0, abs=1e-9)
    assert report.bleu1 == pytest.approx(100.0, abs=1e-9)
    assert report.brevity_penalty == pytest.approx(1.0)


def test_bleu_disjoint_tokens_score_zero():
    report = corpus_bleu([["a", "b", "c"]], [["x", "y", "z"]])
    assert report.bleu1 == 0.0
    assert report.bleu == 0.0


def test_bleu_short_candidate_pays_brevity_penalty():
    # Every n-gram of "a b c" appears in "a b c d" (the missing 4-gram
    # count is smoothed to 1/1), so each score reduces to the penalty.
    report = corpus_bleu([["a", "b", "c"]], [["a", "b", "c", "d"]])
    want = 100.0 * math.exp(1.0 - 4.0 / 3.0)
    assert want == pytest.approx(71.65313, abs=1e-4)
    assert report.brevity_penalty == pytest.approx(math.exp(-1.0 / 3.0))
    for got in (report.bleu1, report.bleu2, report.bleu3, report.bleu4):
        assert got == pytest.approx(want, abs=1e-9)


def test_bleu_repeated_candidate_tokens_are_clipped():
    report = corpus_bleu([["the", "the", "the", "the"]], [["the", "cat"]])
    assert report.precisions[0] == pytest.approx(0.25)
    assert report.brevity_penalty == pytest.approx(1.0)
    assert report.bleu1 == pytest.approx(25.0, abs=1e-9)


def test_bleu_half_overlap_with_bigram_smoothing():
    report = corpus_bleu([["a", "b", "c", "d"]], [["a", "x", "c", "y"]])
    assert report.precisions[0] == pytest.approx(0.5)
    assert report.precisions[1] == pytest.approx(0.25)   # 1 / (3 + 1)
    assert report.bleu2 == pytest.approx(100.0 * math.sqrt(0.125), abs=1e-9)


def test_bleu1_ignores_token_order():
    ref = [["one", "two", "three", "four"]]
    a = corpus_bleu([["one", "two", "three", "four"]], ref).bleu1
    b = corpus_bleu([["four", "two", "one", "three"]], ref).bleu1
    assert a == pytest.approx(b)


def test_bleu_empty_candidate_reports_zero():
    report = corpus_bleu([[]], [["a", "b"]])
    assert report.bleu == 0.0
    assert report.bleu1 == 0.0


def test_sentence_bleu1_matches_singleton_corpus():
    cand, ref = ["u", "v", "w"], ["u", "w", "z"]
    assert sentence_bleu1(cand, ref) == pytest.approx(
        corpus_bleu([cand], [ref]).bleu1)


def test_bleu_rejects_mismatched_or_empty_corpora():
    with pytest.raises(ContractError):
        corpus_bleu([["a"]], [])
    with pytest.raises(ContractError):
        corpus_bleu([], [])


# -- embedding similarity ---------------------------------------------------


VECS = np.array([
    [1.0, 0.0],    # a
    [0.6, 0.8],    # b
    [0.0, 1.0],    # c
    [0.5, 0.5],    # unk row
])
LOOKUP = {"a": 0, "b": 1, "c": 2}


def test_embedding_identical_sides_score_one():
    rep = embedding_metrics([["a", "b"]], [["a", "b"]], VECS, LOOKUP, unk=3)
    assert rep.average == pytest.approx(1.0)
    assert rep.greedy == pytest.approx(1.0)
    assert rep.extrema == pytest.approx(1.0)


def test_embedding_orthogonal_sides_score_zero():
    rep = embedding_metrics([["a"]], [["c"]], VECS, LOOKUP, unk=3)
    assert rep.average == pytest.approx(0.0, abs=1e-12)
    assert rep.greedy == pytest.approx(0.0, abs=1e-12)
    assert rep.extrema == pytest.approx(0.0, abs=1e-12)


def test_embedding_greedy_two_by_two_hand_case():
    # sim matrix between (a, b) and (a, c):
    #   a: 1.0 to a, 0.0 to c      b: 0.6 to a, 0.8 to c
    # each direction averages its row/column maxima: (1.0 + 0.8) / 2.
    rep = embedding_metrics([["a", "b"]], [["a", "c"]], VECS, LOOKUP, unk=3)
    assert rep.greedy == pytest.approx(0.9, abs=1e-12)
    assert rep.average == pytest.approx(0.6 / math.sqrt(0.8 * 0.5), abs=1e-12)
    # extrema keeps the largest-magnitude entry per dimension:
    # (1.0, 0.8) against (1.0, 1.0).
    assert rep.extrema == pytest.approx(1.8 / math.sqrt(1.64 * 2.0), abs=1e-12)


def test_embedding_unknown_tokens_use_unk_row():
    rep_a = embedding_metrics([["zzz"]], [["yyy"]], VECS, LOOKUP, unk=3)
    assert rep_a.average == pytest.approx(1.0)


def test_embedding_size_mismatch_rejected():
    with pytest.raises(ContractError):
        embedding_metrics([["a"]], [], VECS, LOOKUP)


# -- BM25 -------------------------------------------------------------------


def test_bm25_matching_review_outranks_nonmatching():
    order = bm25_rank(["battery"],
                      [["screen", "nice"], ["battery", "great"]])
    assert order == [1, 0]


def test_bm25_scores_match_hand_formula():
    question = ["q", "w"]
    reviews = [["q", "q", "z"], ["w"], ["z", "p"]]
    idf = math.log(1.0 + (3 - 1 + 0.5) / (1 + 0.5))
    s0 = idf * 2 * 2.2 / (2 + 1.2 * (0.25 + 0.75 * 3 / 2))
    s1 = idf * 1 * 2.2 / (1 + 1.2 * (0.25 + 0.75 * 1 / 2))
    got = bm25_scores(question, reviews)
    assert got[0] == pytest.approx(s0, abs=1e-12)
    assert got[1] == pytest.approx(s1, abs=1e-12)
    assert got[2] == 0.0


def test_bm25_tie_keeps_input_order():
    order = bm25_rank(["cheap"], [["cheap", "case"], ["cheap", "case"]])
    assert order == [0, 1]


def test_bm25_empty_reviews():
    assert bm25_scores(["q"], []) == []
    with pytest.raises(ContractError):
        bm25_rank(["q"], [])


# -- TF-IDF -----------------------------------------------------------------


def test_tfidf_identical_review_scores_one():
    scores = tfidf_scores(["a", "b"], [["a", "b"], ["c"]])
    assert scores[0] == pytest.approx(1.0)
    assert scores[1] == pytest.approx(0.0)


def test_tfidf_scores_match_hand_formula():
    # Vocabulary {a, b, c}, each term in exactly one of three reviews,
    # so every idf equals log(2) + 1 and cosines reduce to 1/sqrt(2).
    scores = tfidf_scores(["a", "b"], [["a"], ["b", "b"], ["c"]])
    assert scores[0] == pytest.approx(1.0 / math.sqrt(2.0), abs=1e-12)
    assert scores[1] == pytest.approx(1.0 / math.sqrt(2.0), abs=1e-12)
    assert scores[2] == 0.0


def test_tfidf_rank_and_empty_contract():
    assert tfidf_rank(["a"], [["b"], ["a"]]) == [1, 0]
    with pytest.raises(ContractError):
        tfidf_rank(["a"], [])


def test_rank_reviews_descending_with_stable_ties():
    assert rank_reviews([1.0, 3.0, 3.0, 0.5]) == [1, 2, 0, 3]


# -- paired t-test ----------------------------------------------------------


def test_t_test_hand_statistic():
    stat, p = paired_t_test([1.0, 2.0, 3.0, 4.0], [0.0, 0.0, 0.0, 0.0])
    want = 2.5 / (math.sqrt(5.0 / 3.0) / 2.0)
    assert stat == pytest.approx(want, abs=1e-9)
    assert p < 0.05          # t = 3.873 at 3 dof clears the 3.182 cutoff
    flipped, p2 = paired_t_test([0.0] * 4, [1.0, 2.0, 3.0, 4.0])
    assert flipped == pytest.approx(-stat)
    assert p2 == pytest.approx(p)


def test_t_test_degenerate_inputs():
    assert paired_t_test([1.0], [2.0]) == (0.0, 1.0)
    assert paired_t_test([2.0, 3.0], [1.0, 2.0]) == (0.0, 1.0)
    with pytest.raises(ContractError):
        paired_t_test([1.0, 2.0], [1.0])
