#!/usr/bin/env python3
"""Small-corpus smoke evaluation.

Generates a synthetic topic corpus, trains a model, and runs the whole
evaluation stack on ground-truth fixtures: contextual similarity (MaxSimC /
AvgSimC), context-free MaxSim, and nearest-neighbor listings for a few words.

Usage:
    python3 scripts/smoke_eval.py --tokens 2000000 --dim 50 --epochs 2
"""

import argparse
import sys
import tempfile
import time
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parent.parent / "src"))

from senseforge.attention import AttentionMode
from senseforge.corpus import build_vocab, read_tokens
from senseforge.evalsuite import evaluate_similarity, nearest_words
from senseforge.synth import TopicCorpusSpec, make_contextual_fixture, write_topic_corpus
from senseforge.trainer import TrainConfig, train


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--tokens", type=int, default=2_000_000)
    ap.add_argument("--dim", type=int, default=50)
    ap.add_argument("--senses", type=int, default=3)
    ap.add_argument("--epochs", type=int, default=2)
    ap.add_argument("--mode", default="gasi-beta")
    ap.add_argument("--pairs", type=int, default=300)
    ap.add_argument("--seed", type=int, default=9)
    args = ap.parse_args()

    spec = TopicCorpusSpec(seed=13)
    corpus = Path(tempfile.mkdtemp()) / "smoke.txt"
    t0 = time.time()
    write_topic_corpus(corpus, spec, args.tokens)
    vocab = build_vocab(read_tokens(corpus), 100_000, 5)
    print(f"corpus: {args.tokens} tokens ({corpus.stat().st_size / 1e6:.1f} MB), "
          f"|V|={len(vocab)} ({time.time() - t0:.1f}s)")

    cfg = TrainConfig(
        dim=args.dim, senses=args.senses, epochs=args.epochs,
        mode=AttentionMode.from_name(args.mode), seed=args.seed,
    )
    t0 = time.time()
    params = train(corpus, vocab, cfg)
    print(f"trained {args.mode} in {time.time() - t0:.1f}s")

    pairs = make_contextual_fixture(spec, args.pairs)
    for metric in ("maxsimc", "avgsimc"):
        res = evaluate_similarity(pairs, metric, vocab, params, None)
        print(f"{metric}\trho {res.rho:.4f}\tcoverage {res.coverage:.3f}")

    for word in ("t0w0", "t5w1"):
        wid = vocab.id_of.get(word)
        if wid is None:
            continue
        for k in range(params.K):
            top = nearest_words(params, vocab, wid, k, 5, None)
            shown = ", ".join(f"{w}#{s}:{sim:.2f}" for w, s, sim in top)
            print(f"{word}#{k}\t{shown}")


if __name__ == "__main__":
    main()
