"""Corpus preprocessing: vocabulary, subsampling, context windows, noise distribution."""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field
from typing import Iterable, Iterator, Sequence

import numpy as np

DEFAULT_NEGATIVE_POWER = 0.75
DEFAULT_SUBSAMPLE_THRESHOLD = 1e-4


@dataclass
class Vocabulary:
    """Word <-> dense id mapping with corpus frequencies.

    Ids are assigned by descending count, ties broken lexicographically,
    so construction is deterministic for a given token multiset.
    """

    words: list[str]
    counts: np.ndarray  # int64, len == len(words)
    id_of: dict[str, int] = field(default_factory=dict)

    def __post_init__(self):
        self.counts = np.asarray(self.counts, dtype=np.int64)
        if not self.id_of:
            self.id_of = {w: i for i, w in enumerate(self.words)}

    def __len__(self) -> int:
        return len(self.words)

    @property
    def total_tokens(self) -> int:
        return int(self.counts.sum())

    def encode(self, tokens: Iterable[str]) -> list[int]:
        """Map tokens to ids, dropping out-of-vocabulary tokens."""
        get = self.id_of.get
        return [i for i in map(get, tokens) if i is not None]


@dataclass(frozen=True)
class ContextWindow:
    center: int
    contexts: list[int]


@dataclass
class NegativeTable:
    """Cumulative distribution over word ids with counts**power mass."""

    cumulative: np.ndarray
    power: float

    def sample(self, n: int, rng: np.random.Generator) -> np.ndarray:
        u = rng.random(n)
        return np.searchsorted(self.cumulative, u, side="right").astype(np.int64)


def build_vocab(token_stream: Iterable[str], max_vocab: int, min_count: int) -> Vocabulary:
    """Count tokens and keep the ``max_vocab`` most frequent with count >= min_count."""
    if max_vocab < 1 or min_count < 1:
        raise ValueError("max_vocab and min_count must be >= 1")
    counts = Counter(token_stream)
    items = [(w, c) for w, c in counts.items() if c >= min_count]
    items.sort(key=lambda wc: (-wc[1], wc[0]))
    items = items[:max_vocab]
    words = [w for w, _ in items]
    return Vocabulary(words=words, counts=np.array([c for _, c in items], dtype=np.int64))


def keep_probability(count: int, total: int, threshold: float = DEFAULT_SUBSAMPLE_THRESHOLD) -> float:
    """Word2Vec-style subsampling keep probability min(1, sqrt(t/f) + t/f)."""
    if count < 1 or total < count or threshold <= 0:
        raise ValueError("need count >= 1, total >= count, threshold > 0")
    f = count / total
    return min(1.0, np.sqrt(threshold / f) + threshold / f)


def keep_probabilities(vocab: Vocabulary, threshold: float = DEFAULT_SUBSAMPLE_THRESHOLD) -> np.ndarray:
    """Per-id keep probabilities for the whole vocabulary."""
    total = vocab.total_tokens
    f = vocab.counts / total
    return np.minimum(1.0, np.sqrt(threshold / f) + threshold / f)


def subsample_ids(
    token_ids: Sequence[int], keep_probs: np.ndarray, rng: np.random.Generator
) -> np.ndarray:
    ids = np.asarray(token_ids, dtype=np.int64)
    if ids.size == 0:
        return ids
    u = rng.random(ids.size)
    return ids[u < keep_probs[ids]]


def iter_windows(
    token_ids: Sequence[int],
    window: int,
    keep_probs: np.ndarray,
    rng: np.random.Generator,
) -> Iterator[ContextWindow]:
    """Yield symmetric context windows over the subsampled token stream.

    Subsampling happens first; windows are built over surviving tokens only
    and truncated at sequence boundaries. Tokens with no surviving neighbor
    emit nothing.
    """
    if window < 1:
        raise ValueError("window must be >= 1")
    survivors = subsample_ids(token_ids, keep_probs, rng)
    n = survivors.size
    for i in range(n):
        lo = max(0, i - window)
        hi = min(n, i + window + 1)
        contexts = [int(survivors[j]) for j in range(lo, hi) if j != i]
        if contexts:
            yield ContextWindow(center=int(survivors[i]), contexts=contexts)


def build_negative_table(vocab: Vocabulary, power: float = DEFAULT_NEGATIVE_POWER) -> NegativeTable:
    """Noise distribution with mass proportional to counts**power."""
    if len(vocab) == 0:
        raise ValueError("cannot build a negative-sampling table from an empty vocabulary")
    mass = vocab.counts.astype(np.float64) ** power
    cum = np.cumsum(mass)
    cum /= cum[-1]
    cum[-1] = 1.0
    return NegativeTable(cumulative=cum, power=power)


def sample_negatives(
    table: NegativeTable, n: int, exclude: int, rng: np.random.Generator
) -> np.ndarray:
    """Draw ``n`` ids from the table, resampling any draw equal to ``exclude``."""
    if n == 0:
        return np.empty(0, dtype=np.int64)
    if table.cumulative.size < 2:
        raise ValueError("cannot exclude a word from a single-word vocabulary")
    out = table.sample(n, rng)
    while True:
        bad = out == exclude
        if not bad.any():
            return out
        out[bad] = table.sample(int(bad.sum()), rng)


def save_vocab(vocab: Vocabulary, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for w, c in zip(vocab.words, vocab.counts):
            fh.write(f"{w}\t{int(c)}\n")


def load_vocab(path) -> Vocabulary:
    words, counts = [], []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            if not line.strip():
                continue
            w, c = line.rstrip("\n").split("\t")
            words.append(w)
            counts.append(int(c))
    return Vocabulary(words=words, counts=np.array(counts, dtype=np.int64))


def read_token_ids(corpus_path, vocab: Vocabulary) -> np.ndarray:
    """Whole-file token id stream (OOV dropped). Two-pass training reads this once."""
    ids: list[int] = []
    with open(corpus_path, encoding="utf-8") as fh:
        for line in fh:
            ids.extend(vocab.encode(line.split()))
    return np.asarray(ids, dtype=np.int64)


def read_tokens(corpus_path) -> Iterator[str]:
    with open(corpus_path, encoding="utf-8") as fh:
        for line in fh:
            yield from line.split()
