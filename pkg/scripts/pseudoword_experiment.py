#!/usr/bin/env python3
"""Pseudoword sense-separation experiment.

Merges two frequent, semantically distant words of a synthetic topic corpus
into a single ambiguous pseudotoken, trains each attention variant, and
reports how purely the learned senses separate the two source words on
held-out sentences.

Usage:
    python3 scripts/pseudoword_experiment.py --tokens 5000000 --dim 50
"""

import argparse
import sys
import tempfile
import time
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parent.parent / "src"))

from senseforge.attention import AttentionMode, hard_select
from senseforge.corpus import build_vocab, read_tokens
from senseforge.evalsuite import _eval_context_ids
from senseforge.synth import build_pseudoword_corpus
from senseforge.trainer import TrainConfig, context_mean, train


def sense_purity(pc, vocab, params, window=5):
    wid = vocab.id_of[pc.pseudo_token]
    by_sense = {}
    total = 0
    groups = [(pc.held_out_a, pc.target_a), (pc.held_out_b, pc.target_b)]
    for group, (sents, targets) in enumerate(groups):
        for tokens, tgt in zip(sents, targets):
            ctx = _eval_context_ids(tokens, tgt, vocab, window)
            if not ctx:
                continue
            k = hard_select(context_mean(ctx, params.C), params.S[wid])
            by_sense.setdefault(k, [0, 0])[group] += 1
            total += 1
    return sum(max(v) for v in by_sense.values()) / total, by_sense


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--tokens", type=int, default=5_000_000)
    ap.add_argument("--dim", type=int, default=50)
    ap.add_argument("--senses", type=int, default=3)
    ap.add_argument("--epochs", type=int, default=3)
    ap.add_argument("--held-out", type=int, default=200)
    ap.add_argument("--seed", type=int, default=3)
    ap.add_argument("--corpus", help="reuse/keep the generated corpus at this path")
    ap.add_argument("--modes", default="gasi-beta,gasi,sasi")
    args = ap.parse_args()

    if args.corpus:
        corpus_path = Path(args.corpus)
    else:
        corpus_path = Path(tempfile.mkdtemp()) / "pseudoword.txt"
    t0 = time.time()
    pc = build_pseudoword_corpus(corpus_path, args.tokens, held_out_per_word=args.held_out)
    vocab = build_vocab(read_tokens(corpus_path), 100_000, 5)
    print(f"corpus: {args.tokens} tokens, |V|={len(vocab)}, "
          f"pseudotoken {pc.pseudo_token!r} ({time.time() - t0:.1f}s)")

    for name in args.modes.split(","):
        cfg = TrainConfig(
            dim=args.dim, senses=args.senses, epochs=args.epochs,
            mode=AttentionMode.from_name(name), seed=args.seed,
        )
        t0 = time.time()
        params = train(corpus_path, vocab, cfg)
        purity, by_sense = sense_purity(pc, vocab, params)
        counts = {k: tuple(v) for k, v in sorted(by_sense.items())}
        print(f"{name:>10}  purity {purity:.4f}  per-sense (groupA, groupB) {counts}  "
              f"({time.time() - t0:.1f}s)")


if __name__ == "__main__":
    main()
