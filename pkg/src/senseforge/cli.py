"""senseforge command line: train, prune, retrain, evaluate, query, export.

Machine-readable results go to stdout; diagnostics to stderr. Every flag can
also be set through an environment variable ``SENSEFORGE_<FLAG>`` (dashes
become underscores). Exit codes: 0 success, 1 runtime failure, 2 usage error.
"""

from __future__ import annotations

import argparse
import os
import sys

import numpy as np

from . import corpus as corpusmod
from . import evalsuite, modelio, pruning, synth, trainer
from .attention import AttentionMode

ENV_PREFIX = "SENSEFORGE_"


def _env(name: str, default):
    raw = os.environ.get(ENV_PREFIX + name.upper().replace("-", "_"))
    if raw is None:
        return default
    if isinstance(default, bool):
        return raw.lower() in ("1", "true", "yes")
    if default is None:
        return raw
    return type(default)(raw)


def _add_train_flags(p: argparse.ArgumentParser) -> None:
    cfg = trainer.TrainConfig(dim=1)  # defaults holder; dim overridden below
    p.add_argument("--corpus", default=_env("corpus", None), help="training corpus (UTF-8, whitespace tokens)")
    p.add_argument("--vocab", default=_env("vocab", None), help="load vocabulary file instead of building one")
    p.add_argument("--max-vocab", type=int, default=_env("max_vocab", 100000))
    p.add_argument("--min-count", type=int, default=_env("min_count", 5))
    p.add_argument("--mode", choices=["sasi", "gasi", "gasi-beta"], default=_env("mode", "gasi-beta"))
    p.add_argument("--dim", type=int, default=_env("dim", 300))
    p.add_argument("--senses", type=int, default=_env("senses", 3))
    p.add_argument("--window", type=int, default=_env("window", cfg.window))
    p.add_argument("--epochs", type=int, default=_env("epochs", cfg.epochs))
    p.add_argument("--lr", type=float, default=_env("lr", cfg.initial_lr))
    p.add_argument("--batch", type=int, default=_env("batch", cfg.batch))
    p.add_argument("--negatives", type=int, default=_env("negatives", cfg.negatives))
    p.add_argument("--subsample", type=float, default=_env("subsample", cfg.subsample))
    p.add_argument("--temperature", type=float, default=_env("temperature", 0.5))
    p.add_argument("--beta", type=float, default=_env("beta", 0.4))
    p.add_argument("--seed", type=int, default=_env("seed", 1))
    p.add_argument("--threads", type=int, default=_env("threads", 1))
    p.add_argument("--output", default=_env("output", "model.bin"), help="model file to write")
    p.add_argument("--log-every", type=int, default=_env("log_every", 100))


def _config_from_args(args) -> trainer.TrainConfig:
    mode = AttentionMode.from_name(args.mode, tau=args.temperature, beta=args.beta)
    return trainer.TrainConfig(
        dim=args.dim,
        senses=args.senses,
        window=args.window,
        epochs=args.epochs,
        initial_lr=args.lr,
        batch=args.batch,
        negatives=args.negatives,
        subsample=args.subsample,
        mode=mode,
        seed=args.seed,
    )


def _progress_printer(every: int):
    def sink(rec: trainer.ProgressRecord):
        if rec.batch % every == 0:
            print(rec.line(), file=sys.stderr)

    return sink


def _run_train(args, mask=None, vocab=None) -> int:
    if not args.corpus:
        raise UsageError("--corpus is required")
    if vocab is None:
        if args.vocab:
            vocab = corpusmod.load_vocab(args.vocab)
        else:
            print("building vocabulary...", file=sys.stderr)
            vocab = corpusmod.build_vocab(
                corpusmod.read_tokens(args.corpus), args.max_vocab, args.min_count
            )
    if len(vocab) == 0:
        raise RuntimeError("empty vocabulary; nothing to train")
    config = _config_from_args(args)
    params = trainer.train(
        args.corpus,
        vocab,
        config,
        mask=mask,
        progress_sink=_progress_printer(args.log_every),
        threads=args.threads,
    )
    modelio.save_model(params, vocab, args.output, mask=mask)
    print(f"wrote {args.output} (|V|={len(vocab)}, K={config.senses}, d={config.dim})",
          file=sys.stderr)
    return 0


class UsageError(Exception):
    pass


def cmd_train(args) -> int:
    return _run_train(args)


def cmd_retrain(args) -> int:
    params, vocab, _ = modelio.load_model(args.model)
    mask, _ = pruning.load_mask(args.mask, vocab, params.K)
    args.senses = params.K
    args.dim = params.d
    return _run_train(args, mask=mask, vocab=vocab)


def cmd_prune(args) -> int:
    params, vocab, _ = modelio.load_model(args.model)
    rng = np.random.default_rng(args.seed)
    if args.lam is not None:
        lam = args.lam
    else:
        table = corpusmod.build_negative_table(vocab)
        est = pruning.estimate_threshold(params, table, rng)
        lam = est.lam
        if est.dup_empty:
            print("warning: no duplicate senses found; lambda from neighbor mean / 2",
                  file=sys.stderr)
    mask = pruning.prune_model(params, lam)
    pruning.save_mask(mask, vocab, lam, args.output)
    removed = params.K * len(vocab) - int(mask.sum())
    print(f"lambda\t{lam:.6f}")
    print(f"senses_removed\t{removed}")
    for dec, mean_removed in pruning.removed_by_decile(mask, vocab):
        print(f"decile_{dec}\t{mean_removed:.3f}")
    return 0


def _load_model_and_mask(args):
    params, vocab, stored_mask = modelio.load_model(args.model)
    mask = stored_mask
    if getattr(args, "mask", None):
        mask, _ = pruning.load_mask(args.mask, vocab, params.K)
    return params, vocab, mask


def cmd_neighbors(args) -> int:
    params, vocab, mask = _load_model_and_mask(args)
    wid = vocab.id_of.get(args.word)
    if wid is None:
        raise RuntimeError(f"word {args.word!r} not in vocabulary")
    senses = [args.sense] if args.sense is not None else range(params.K)
    for k in senses:
        if mask is not None and not mask[wid, k]:
            continue
        for w, s, sim in evalsuite.nearest_words(
            params, vocab, wid, k, args.top, mask, dedup=args.dedup
        ):
            print(f"{args.word}#{k}\t{w}#{s}\t{sim:.6f}")
    return 0


def cmd_eval_sim(args) -> int:
    params, vocab, mask = _load_model_and_mask(args)
    pairs = modelio.parse_plain_pairs(args.dataset, strict=args.strict)
    res = evalsuite.evaluate_similarity(pairs, "maxsim", vocab, params, mask)
    print(f"maxsim\t{res.rho:.6f}\t{res.coverage:.4f}")
    return 0


def cmd_eval_contextual(args) -> int:
    params, vocab, mask = _load_model_and_mask(args)
    pairs = modelio.parse_contextual(args.dataset, strict=args.strict)
    for metric in ("maxsimc", "avgsimc"):
        res = evalsuite.evaluate_similarity(
            pairs, metric, vocab, params, mask, window=args.window
        )
        print(f"{metric}\t{res.rho:.6f}\t{res.coverage:.4f}")
    return 0


def cmd_eval_wic(args) -> int:
    params, vocab, mask = _load_model_and_mask(args)
    instances = modelio.parse_wic(args.dataset, args.gold, strict=args.strict)
    if any(inst.gold is None for inst in instances):
        raise RuntimeError("--gold labels are required for accuracy")
    rng = np.random.default_rng(args.seed)
    acc = evalsuite.evaluate_wic(instances, vocab, params, mask, rng, window=args.window)
    print(f"wic_accuracy\t{acc:.6f}\t{1.0:.4f}")
    return 0


def cmd_export_tasks(args) -> int:
    params, vocab, mask = _load_model_and_mask(args)
    rng = np.random.default_rng(args.seed)
    words = args.words.split(",") if args.words else vocab.words[: args.n_words]
    tasks = evalsuite.export_intrusion_tasks(params, vocab, words, args.per_sense, rng, mask)
    modelio.write_intrusion_csv(tasks, args.output)
    print(f"intrusion_tasks\t{len(tasks)}\t{args.output}")
    return 0


def cmd_info(args) -> int:
    params, vocab, mask = modelio.load_model(args.model)
    print(f"vocab_size\t{params.vocab_size}")
    print(f"senses\t{params.K}")
    print(f"dim\t{params.d}")
    print(f"has_mask\t{int(mask is not None)}")
    if mask is not None:
        print(f"active_senses\t{int(mask.sum())}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="senseforge",
        description="Multi-sense word embeddings with Gumbel-softmax sense attention.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train a model on a text corpus")
    _add_train_flags(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("prune", help="estimate lambda and write a duplicate-sense mask")
    p.add_argument("--model", required=True)
    p.add_argument("--lambda", dest="lam", type=float, default=_env("lambda", None))
    p.add_argument("--seed", type=int, default=_env("seed", 1))
    p.add_argument("--output", default=_env("output", "mask.txt"))
    p.set_defaults(func=cmd_prune)

    p = sub.add_parser("retrain", help="retrain from scratch with a sense mask")
    _add_train_flags(p)
    p.add_argument("--model", required=True, help="model whose vocabulary/shape to reuse")
    p.add_argument("--mask", required=True)
    p.set_defaults(func=cmd_retrain)

    p = sub.add_parser("neighbors", help="nearest neighbors of a word's senses")
    p.add_argument("--model", required=True)
    p.add_argument("--mask")
    p.add_argument("--word", required=True)
    p.add_argument("--sense", type=int)
    p.add_argument("--top", type=int, default=_env("top", 10))
    p.add_argument("--dedup", action="store_true", default=_env("dedup", False))
    p.set_defaults(func=cmd_neighbors)

    p = sub.add_parser("eval-sim", help="non-contextual similarity (MaxSim + Spearman)")
    p.add_argument("--model", required=True)
    p.add_argument("--mask")
    p.add_argument("--dataset", required=True)
    p.add_argument("--strict", action="store_true")
    p.set_defaults(func=cmd_eval_sim)

    p = sub.add_parser("eval-contextual", help="contextual similarity (MaxSimC/AvgSimC)")
    p.add_argument("--model", required=True)
    p.add_argument("--mask")
    p.add_argument("--dataset", required=True)
    p.add_argument("--window", type=int, default=_env("window", 5))
    p.add_argument("--strict", action="store_true")
    p.set_defaults(func=cmd_eval_contextual)

    p = sub.add_parser("eval-wic", help="word-in-context sense matching accuracy")
    p.add_argument("--model", required=True)
    p.add_argument("--mask")
    p.add_argument("--dataset", required=True)
    p.add_argument("--gold", required=True)
    p.add_argument("--window", type=int, default=_env("window", 5))
    p.add_argument("--seed", type=int, default=_env("seed", 1))
    p.add_argument("--strict", action="store_true")
    p.set_defaults(func=cmd_eval_wic)

    p = sub.add_parser("export-tasks", help="write word-intrusion task CSVs")
    p.add_argument("--model", required=True)
    p.add_argument("--mask")
    p.add_argument("--words", help="comma-separated target words (default: most frequent)")
    p.add_argument("--n-words", type=int, default=_env("n_words", 50))
    p.add_argument("--per-sense", type=int, default=_env("per_sense", 3))
    p.add_argument("--seed", type=int, default=_env("seed", 1))
    p.add_argument("--output", default=_env("output", "intrusion_tasks.csv"))
    p.set_defaults(func=cmd_export_tasks)

    p = sub.add_parser("info", help="print model header metadata")
    p.add_argument("--model", required=True)
    p.set_defaults(func=cmd_info)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (OSError, ValueError, RuntimeError, FloatingPointError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
