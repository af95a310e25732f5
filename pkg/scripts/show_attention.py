#!/usr/bin/env python3
"""Decode one example from a checkpoint and print its routing trace.

For each emitted token: the review/question balance gate, the
generate-vs-copy weight, and where the two attention heads put most of
their mass. Good for eyeballing whether the pointer actually fires on
out-of-vocabulary question words.
"""

import argparse

import numpy as np

from paag import autograd as ag
from paag.data import decode_ids, encode_corpus, load_jsonl
from paag.train import load_model


def describe(ids, vocab, oov_map):
    return " ".join(decode_ids(ids, vocab, oov_map, strip_eos=True))


def main():
    ap = argparse.ArgumentParser(description="per-step decode trace")
    ap.add_argument("--checkpoint", required=True)
    ap.add_argument("--data", required=True, help="JSONL dataset")
    ap.add_argument("--index", type=int, default=0,
                    help="which example to decode")
    ap.add_argument("--beam", type=int, default=0,
                    help="beam width, 0 for greedy")
    args = ap.parse_args()

    model, config, vocab = load_model(args.checkpoint)
    records = load_jsonl(args.data)
    if not 0 <= args.index < len(records):
        raise SystemExit(f"index {args.index} outside 0..{len(records) - 1}")
    ex = encode_corpus([records[args.index]], vocab)[0]

    with ag.no_grad():
        if args.beam > 0:
            trace = model.beam(ex, width=args.beam,
                               max_len=config.max_answer_len)
        else:
            trace = model.greedy(ex, max_len=config.max_answer_len)

    question_words = decode_ids(ex.question, vocab, ex.oov_map,
                                strip_eos=False)
    print(f"question : {' '.join(question_words)}")
    print(f"reference: {describe(ex.answer, vocab, ex.oov_map)}")
    print(f"generated: {describe(trace.tokens, vocab, ex.oov_map)}")
    print(f"log prob {trace.log_prob:.3f}, per-token "
          f"{trace.normalized_score:.3f}\n")

    header = f"{'token':<12s} {'logp':>7s} {'gate':>5s} {'p_gen':>6s}  focus"
    print(header)
    print("-" * len(header))
    for record in trace.steps:
        word = decode_ids([record.token], vocab, ex.oov_map,
                          strip_eos=False)[0]
        qa = np.asarray(record.question_attention)
        focus = question_words[int(qa.argmax())] if qa.size else "-"
        print(f"{word:<12s} {record.log_prob:7.3f} {record.gate:5.2f} "
              f"{record.p_gen:6.2f}  q->{focus} ({qa.max():.2f})")


if __name__ == "__main__":
    main()
