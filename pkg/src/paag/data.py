"""Corpus handling: vocabulary, encoding with copy-extended ids, batching.

A dataset is JSON lines, one object per example:

    {"question": str, "answer": str, "reviews": [str, ...],
     "attributes": [[key, value], ...]}

Token ids reserve 0..3 for PAD, UNK, SOS and EOS. Question words
outside the vocabulary get per-example extended ids starting at
``len(vocab)``, in order of first appearance, so the decoder can place
probability mass on copying them. Answer words reuse a question word's
extended id when there is one; other unknown answer words collapse to
UNK. Review and attribute tokens never get extended ids, copying is
from the question only.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Sequence, Tuple

import numpy as np

from paag.errors import ConfigError, DataError

PAD, UNK, SOS, EOS = 0, 1, 2, 3
RESERVED = ("<pad>", "<unk>", "<sos>", "<eos>")


def tokenize(text: str) -> List[str]:
    return text.split()


@dataclass
class Vocabulary:
    words: List[str]
    index: Dict[str, int] = field(default_factory=dict)

    def __post_init__(self):
        if not self.index:
            self.index = {w: i for i, w in enumerate(self.words)}

    def __len__(self) -> int:
        return len(self.words)

    def lookup(self, word: str) -> int:
        return self.index.get(word, UNK)

    def word(self, idx: int) -> str:
        return self.words[idx]


def build_vocab(token_streams: Iterable[Sequence[str]], max_size: int) -> Vocabulary:
    """Frequency-ranked vocabulary; ties broken lexicographically.

    ``max_size`` caps the number of non-reserved words kept. Values
    below 4 are rejected outright: a vocabulary that cannot even hold
    the reserved symbols is a configuration mistake.
    """
    if max_size < 4:
        raise ConfigError(f"build_vocab: max_size must be at least 4, got {max_size}")
    counts: Dict[str, int] = {}
    for stream in token_streams:
        for tok in stream:
            counts[tok] = counts.get(tok, 0) + 1
    ranked = sorted(counts.items(), key=lambda kv: (-kv[1], kv[0]))
    kept = [w for w, _ in ranked[:max_size]]
    return Vocabulary(list(RESERVED) + kept)


@dataclass
class RawExample:
    question: str
    answer: str
    reviews: List[str]
    attributes: List[Tuple[str, str]]


@dataclass
class QAExample:
    """One encoded example. ``question`` and ``answer`` may contain
    extended ids at or above ``len(vocab)``; ``oov_map`` translates the
    out-of-vocabulary word to its extended id."""

    question: np.ndarray
    reviews: List[np.ndarray]
    attributes: np.ndarray  # shape (n_attrs, 2): key id, value id
    answer: np.ndarray
    oov_map: Dict[str, int]

    @property
    def n_oov(self) -> int:
        return len(self.oov_map)


def encode_example(raw: RawExample, vocab: Vocabulary,
                   stats: Dict[str, int] | None = None) -> QAExample:
    q_tokens = tokenize(raw.question)
    a_tokens = tokenize(raw.answer)
    if not q_tokens:
        raise DataError("empty question")
    if not a_tokens:
        raise DataError("empty answer")
    if not raw.reviews or all(not tokenize(r) for r in raw.reviews):
        raise DataError("example has no non-empty review")

    oov_map: Dict[str, int] = {}
    q_ids = []
    for tok in q_tokens:
        idx = vocab.lookup(tok)
        if idx == UNK:
            if tok not in oov_map:
                oov_map[tok] = len(vocab) + len(oov_map)
            idx = oov_map[tok]
        q_ids.append(idx)

    a_ids = []
    for tok in a_tokens:
        idx = vocab.lookup(tok)
        if idx == UNK:
            idx = oov_map.get(tok, UNK)
        a_ids.append(idx)
    a_ids.append(EOS)

    reviews = [np.array([vocab.lookup(t) for t in tokenize(r)], dtype=np.int64)
               for r in raw.reviews if tokenize(r)]

    attr_rows = []
    for pair in raw.attributes:
        if len(pair) != 2:
            raise DataError(f"attribute entry {pair!r} is not a key/value pair")
        key, value = pair
        k_toks, v_toks = tokenize(str(key)), tokenize(str(value))
        if not k_toks or not v_toks:
            raise DataError(f"attribute entry {pair!r} has an empty side")
        if (len(k_toks) > 1 or len(v_toks) > 1) and stats is not None:
            stats["multiword_attributes"] = stats.get("multiword_attributes", 0) + 1
        attr_rows.append((vocab.lookup(k_toks[0]), vocab.lookup(v_toks[0])))
    attributes = (np.array(attr_rows, dtype=np.int64) if attr_rows
                  else np.zeros((0, 2), dtype=np.int64))

    return QAExample(
        question=np.array(q_ids, dtype=np.int64),
        reviews=reviews,
        attributes=attributes,
        answer=np.array(a_ids, dtype=np.int64),
        oov_map=oov_map,
    )


def decode_ids(ids: Sequence[int], vocab: Vocabulary,
               oov_map: Dict[str, int] | None = None,
               strip_eos: bool = True) -> List[str]:
    reverse = {v: k for k, v in (oov_map or {}).items()}
    out = []
    for idx in ids:
        idx = int(idx)
        if strip_eos and idx == EOS:
            break
        if idx < len(vocab):
            out.append(vocab.word(idx))
        elif idx in reverse:
            out.append(reverse[idx])
        else:
            raise DataError(f"id {idx} is outside the vocabulary and the oov map")
    return out


@dataclass
class Batch:
    """Padded arrays plus boolean masks; True marks real content.

    ``review_mask`` flags whole reviews (an all-PAD review row is a
    filler to equalise review counts), ``review_token_mask`` flags
    tokens inside each review.
    """

    question: np.ndarray            # (B, Tq)
    question_mask: np.ndarray       # (B, Tq) bool
    reviews: np.ndarray             # (B, R, L)
    review_token_mask: np.ndarray   # (B, R, L) bool
    review_mask: np.ndarray         # (B, R) bool
    attributes: np.ndarray          # (B, A, 2)
    attribute_mask: np.ndarray      # (B, A) bool
    answer: np.ndarray              # (B, Ta)
    answer_mask: np.ndarray         # (B, Ta) bool
    examples: List[QAExample]


def make_batch(examples: Sequence[QAExample]) -> Batch:
    if not examples:
        raise DataError("cannot batch zero examples")
    B = len(examples)
    tq = max(len(e.question) for e in examples)
    ta = max(len(e.answer) for e in examples)
    n_rev = max(len(e.reviews) for e in examples)
    lrev = max((len(r) for e in examples for r in e.reviews), default=1)
    n_att = max((e.attributes.shape[0] for e in examples), default=0)

    question = np.full((B, tq), PAD, dtype=np.int64)
    q_mask = np.zeros((B, tq), dtype=bool)
    reviews = np.full((B, n_rev, lrev), PAD, dtype=np.int64)
    r_tok_mask = np.zeros((B, n_rev, lrev), dtype=bool)
    r_mask = np.zeros((B, n_rev), dtype=bool)
    attributes = np.full((B, max(n_att, 1), 2), PAD, dtype=np.int64)
    a_mask = np.zeros((B, max(n_att, 1)), dtype=bool)
    answer = np.full((B, ta), PAD, dtype=np.int64)
    ans_mask = np.zeros((B, ta), dtype=bool)

    for i, ex in enumerate(examples):
        question[i, :len(ex.question)] = ex.question
        q_mask[i, :len(ex.question)] = True
        for j, rev in enumerate(ex.reviews):
            reviews[i, j, :len(rev)] = rev
            r_tok_mask[i, j, :len(rev)] = True
            r_mask[i, j] = True
        n = ex.attributes.shape[0]
        if n:
            attributes[i, :n] = ex.attributes
            a_mask[i, :n] = True
        answer[i, :len(ex.answer)] = ex.answer
        ans_mask[i, :len(ex.answer)] = True

    return Batch(question, q_mask, reviews, r_tok_mask, r_mask,
                 attributes, a_mask, answer, ans_mask, list(examples))


def iter_batches(examples: Sequence[QAExample], batch_size: int) -> Iterable[Batch]:
    if batch_size < 1:
        raise ConfigError(f"batch_size must be positive, got {batch_size}")
    for lo in range(0, len(examples), batch_size):
        yield make_batch(examples[lo:lo + batch_size])


# -- file I/O -----------------------------------------------------------


def load_jsonl(path) -> List[RawExample]:
    records = []
    try:
        fh = open(path, "r", encoding="utf-8")
    except OSError as exc:
        raise DataError(f"{path}: {exc.strerror or exc}") from exc
    with fh:
        for i, line in enumerate(fh):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise DataError(f"record {i}: invalid JSON: {exc}") from exc
            try:
                records.append(RawExample(
                    question=obj["question"],
                    answer=obj["answer"],
                    reviews=list(obj["reviews"]),
                    attributes=[tuple(p) for p in obj["attributes"]],
                ))
            except (KeyError, TypeError) as exc:
                raise DataError(f"record {i}: missing or malformed field: {exc}") from exc
    return records


def save_jsonl(path, records: Iterable[RawExample]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for rec in records:
            obj = {
                "question": rec.question,
                "answer": rec.answer,
                "reviews": list(rec.reviews),
                "attributes": [list(p) for p in rec.attributes],
            }
            fh.write(json.dumps(obj, sort_keys=True) + "\n")


def encode_corpus(records: Sequence[RawExample], vocab: Vocabulary,
                  stats: Dict[str, int] | None = None) -> List[QAExample]:
    out = []
    for i, rec in enumerate(records):
        try:
            out.append(encode_example(rec, vocab, stats=stats))
        except DataError as exc:
            raise DataError(f"record {i}: {exc}") from exc
    return out


def corpus_token_streams(records: Sequence[RawExample]) -> Iterable[List[str]]:
    for rec in records:
        yield tokenize(rec.question)
        yield tokenize(rec.answer)
        for rev in rec.reviews:
            yield tokenize(rev)
        for key, value in rec.attributes:
            yield tokenize(str(key)) + tokenize(str(value))
