"""Evaluation metrics: BLEU, embedding similarity, extractive rankers.

All BLEU numbers live on a 0..100 scale. ``bleu_n`` is the geometric
mean of modified n-gram precisions up to n, times the corpus brevity
penalty. Zero match counts for n >= 2 are smoothed by adding one to
both numerator and denominator; unigram counts are never smoothed.

The extractive rankers (BM25 and TF-IDF cosine) score one example's
reviews against its question, with corpus statistics computed over that
example's reviews only. Ties rank the earlier review first.
"""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass
from typing import Dict, List, Sequence, Tuple

import numpy as np
from scipy.stats import t as student_t

from paag.errors import ContractError

Tokens = Sequence[str]


# -- BLEU ---------------------------------------------------------------


def _ngrams(tokens: Tokens, n: int) -> Counter:
    return Counter(tuple(tokens[i:i + n]) for i in range(len(tokens) - n + 1))


@dataclass
class BleuReport:
    bleu: float
    bleu1: float
    bleu2: float
    bleu3: float
    bleu4: float
    precisions: Tuple[float, float, float, float]
    brevity_penalty: float

    def as_dict(self) -> Dict[str, float]:
        return {
            "bleu": self.bleu, "bleu1": self.bleu1, "bleu2": self.bleu2,
            "bleu3": self.bleu3, "bleu4": self.bleu4,
            "brevity_penalty": self.brevity_penalty,
            "p1": self.precisions[0], "p2": self.precisions[1],
            "p3": self.precisions[2], "p4": self.precisions[3],
        }


def corpus_bleu(candidates: Sequence[Tokens], references: Sequence[Tokens],
                max_n: int = 4) -> BleuReport:
    if len(candidates) != len(references):
        raise ContractError(
            f"corpus size mismatch: {len(candidates)} candidates, "
            f"{len(references)} references")
    if not candidates:
        raise ContractError("corpus_bleu needs at least one pair")

    cand_len = sum(len(c) for c in candidates)
    ref_len = sum(len(r) for r in references)
    if cand_len == 0:
        zero = (0.0, 0.0, 0.0, 0.0)
        return BleuReport(0.0, 0.0, 0.0, 0.0, 0.0, zero, 0.0)
    bp = 1.0 if cand_len > ref_len else math.exp(1.0 - ref_len / cand_len)

    precisions = []
    for n in range(1, max_n + 1):
        matched = 0
        total = 0
        for cand, ref in zip(candidates, references):
            cand_counts = _ngrams(cand, n)
            ref_counts = _ngrams(ref, n)
            total += sum(cand_counts.values())
            matched += sum(min(count, ref_counts[gram])
                           for gram, count in cand_counts.items())
        if n >= 2 and matched == 0:
            matched, total = 1, total + 1
        precisions.append(matched / total if total else 0.0)

    def cumulative(n: int) -> float:
        ps = precisions[:n]
        if any(p == 0.0 for p in ps):
            return 0.0
        return 100.0 * bp * math.exp(sum(math.log(p) for p in ps) / n)

    scores = [cumulative(n) for n in range(1, max_n + 1)]
    return BleuReport(
        bleu=scores[max_n - 1], bleu1=scores[0], bleu2=scores[1],
        bleu3=scores[2], bleu4=scores[3],
        precisions=tuple(precisions), brevity_penalty=bp)


def sentence_bleu1(candidate: Tokens, reference: Tokens) -> float:
    return corpus_bleu([candidate], [reference]).bleu1


# -- embedding similarity ----------------------------------------------


def _cosine(a: np.ndarray, b: np.ndarray) -> float:
    na, nb = np.linalg.norm(a), np.linalg.norm(b)
    if na == 0.0 or nb == 0.0:
        return 0.0
    return float(a @ b / (na * nb))


def _vectors(tokens: Tokens, embedding: np.ndarray,
             lookup: Dict[str, int], unk: int) -> np.ndarray:
    ids = [lookup.get(tok, unk) for tok in tokens]
    return embedding[ids] if ids else np.zeros((0, embedding.shape[1]))


@dataclass
class EmbeddingReport:
    average: float
    greedy: float
    extrema: float

    def as_dict(self) -> Dict[str, float]:
        return {"average": self.average, "greedy": self.greedy,
                "extrema": self.extrema}


def embedding_metrics(candidates: Sequence[Tokens], references: Sequence[Tokens],
                      embedding: np.ndarray, lookup: Dict[str, int],
                      unk: int = 1) -> EmbeddingReport:
    """Mean per-pair similarity of composed word vectors.

    average: cosine of mean vectors. greedy: each side's tokens matched
    to their best counterpart, both directions averaged. extrema: per
    dimension, keep the entry of largest magnitude across tokens.
    """
    if len(candidates) != len(references):
        raise ContractError("corpus size mismatch in embedding metrics")
    avg_scores, greedy_scores, ext_scores = [], [], []
    for cand, ref in zip(candidates, references):
        cv = _vectors(cand, embedding, lookup, unk)
        rv = _vectors(ref, embedding, lookup, unk)
        if cv.shape[0] == 0 or rv.shape[0] == 0:
            avg_scores.append(0.0)
            greedy_scores.append(0.0)
            ext_scores.append(0.0)
            continue
        avg_scores.append(_cosine(cv.mean(axis=0), rv.mean(axis=0)))
        sim = np.zeros((cv.shape[0], rv.shape[0]))
        for i in range(cv.shape[0]):
            for j in range(rv.shape[0]):
                sim[i, j] = _cosine(cv[i], rv[j])
        greedy_scores.append(0.5 * (sim.max(axis=1).mean() + sim.max(axis=0).mean()))
        ext_scores.append(_cosine(_extrema(cv), _extrema(rv)))
    return EmbeddingReport(
        average=float(np.mean(avg_scores)),
        greedy=float(np.mean(greedy_scores)),
        extrema=float(np.mean(ext_scores)))


def _extrema(vectors: np.ndarray) -> np.ndarray:
    hi = vectors.max(axis=0)
    lo = vectors.min(axis=0)
    return np.where(np.abs(hi) >= np.abs(lo), hi, lo)


# -- extractive rankers -------------------------------------------------


def bm25_scores(question: Tokens, reviews: Sequence[Tokens],
                k1: float = 1.2, b: float = 0.75) -> List[float]:
    """BM25 of each review against the question, stats over the reviews."""
    if not reviews:
        return []
    n_docs = len(reviews)
    doc_counts = [Counter(r) for r in reviews]
    avg_len = sum(len(r) for r in reviews) / n_docs
    df = Counter()
    for counts in doc_counts:
        df.update(counts.keys())
    scores = []
    for counts, review in zip(doc_counts, reviews):
        score = 0.0
        dl = len(review)
        for term in question:
            tf = counts.get(term, 0)
            if tf == 0:
                continue
            idf = math.log(1.0 + (n_docs - df[term] + 0.5) / (df[term] + 0.5))
            denom_len = 1.0 - b + b * (dl / avg_len if avg_len else 0.0)
            score += idf * tf * (k1 + 1.0) / (tf + k1 * denom_len)
        scores.append(score)
    return scores


def tfidf_scores(question: Tokens, reviews: Sequence[Tokens]) -> List[float]:
    """Cosine between tf-idf vectors; idf = log((N + 1) / (df + 1)) + 1."""
    if not reviews:
        return []
    n_docs = len(reviews)
    df = Counter()
    for review in reviews:
        df.update(set(review))
    vocab = sorted(set(question) | set().union(*[set(r) for r in reviews]))
    pos = {term: i for i, term in enumerate(vocab)}
    idf = np.array([math.log((n_docs + 1.0) / (df[t] + 1.0)) + 1.0 for t in vocab])

    def vec(tokens: Tokens) -> np.ndarray:
        v = np.zeros(len(vocab))
        for tok in tokens:
            v[pos[tok]] += 1.0
        return v * idf

    q_vec = vec(question)
    return [_cosine(q_vec, vec(r)) for r in reviews]


def rank_reviews(scores: Sequence[float]) -> List[int]:
    """Indices sorted by descending score; equal scores keep input order."""
    return sorted(range(len(scores)), key=lambda i: (-scores[i], i))


def bm25_rank(question: Tokens, reviews: Sequence[Tokens],
              k1: float = 1.2, b: float = 0.75) -> List[int]:
    if not reviews:
        raise ContractError("bm25_rank needs at least one review")
    return rank_reviews(bm25_scores(question, reviews, k1=k1, b=b))


def tfidf_rank(question: Tokens, reviews: Sequence[Tokens]) -> List[int]:
    if not reviews:
        raise ContractError("tfidf_rank needs at least one review")
    return rank_reviews(tfidf_scores(question, reviews))


# -- significance -------------------------------------------------------


def paired_t_test(xs: Sequence[float], ys: Sequence[float]) -> Tuple[float, float]:
    """Two-tailed paired t-test; returns (statistic, p value).

    Degenerate inputs (fewer than two pairs, or identical differences
    with zero spread) return a p value of 1.0.
    """
    if len(xs) != len(ys):
        raise ContractError("paired_t_test needs equal length samples")
    n = len(xs)
    if n < 2:
        return 0.0, 1.0
    diffs = np.asarray(xs, dtype=np.float64) - np.asarray(ys, dtype=np.float64)
    sd = diffs.std(ddof=1)
    if sd == 0.0:
        return 0.0, 1.0
    stat = diffs.mean() / (sd / math.sqrt(n))
    p = 2.0 * float(student_t.sf(abs(stat), df=n - 1))
    return float(stat), p
