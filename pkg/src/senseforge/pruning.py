"""Duplicate-sense detection, threshold estimation and sense-mask pruning."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .corpus import NegativeTable, Vocabulary
from .trainer import ModelParams, full_mask

THRESHOLD_SAMPLE_WORDS = 100
THRESHOLD_TOP_N = 5


def _unit_rows(mat: np.ndarray) -> np.ndarray:
    norms = np.linalg.norm(mat, axis=-1, keepdims=True)
    norms[norms == 0] = 1.0
    return mat / norms


@dataclass
class ThresholdEstimate:
    lam: float
    dup_distances: list[float]
    nn_distances: list[float]
    dup_empty: bool = False


def nearest_senses(
    params: ModelParams,
    query: tuple[int, int],
    top_n: int,
    mask: np.ndarray | None = None,
) -> list[tuple[tuple[int, int], float]]:
    """Top-n active senses by cosine similarity to the query sense.

    The query itself is excluded. Ties break by (word id, sense id) ascending.
    """
    V, K, d = params.S.shape
    if mask is None:
        mask = full_mask(V, K)
    qw, qk = query
    if not mask[qw, qk]:
        raise ValueError("query sense is masked")
    if top_n == 0:
        return []
    flat = params.S.reshape(V * K, d)
    unit = _unit_rows(flat)
    sims = unit @ unit[qw * K + qk]
    flat_mask = np.asarray(mask, dtype=bool).reshape(V * K).copy()
    flat_mask[qw * K + qk] = False
    cand = np.nonzero(flat_mask)[0]
    order = sorted(cand, key=lambda i: (-sims[i], i // K, i % K))[:top_n]
    return [((int(i // K), int(i % K)), float(sims[i])) for i in order]


def estimate_threshold(
    params: ModelParams, table: NegativeTable, rng: np.random.Generator
) -> ThresholdEstimate:
    """lambda = (mean dup distance + mean true-neighbor distance) / 2.

    Samples 100 words from the negative-sampling distribution (with
    replacement, deduplicated), takes each sense's top-5 nearest senses, and
    splits their cosine distances by same-word vs other-word.
    """
    if params.vocab_size < 2:
        raise ValueError("need at least 2 words to estimate a threshold")
    sampled = sorted(set(int(w) for w in table.sample(THRESHOLD_SAMPLE_WORDS, rng)))
    dup, nn = [], []
    for w in sampled:
        for k in range(params.K):
            for (nw, _), sim in nearest_senses(params, (w, k), THRESHOLD_TOP_N):
                dist = 1.0 - sim
                (dup if nw == w else nn).append(dist)
    if not nn:
        raise ValueError("no neighbors found")
    if not dup:
        # Eq. midpoint undefined without duplicates; fall back to half the
        # true-neighbor mean and flag it.
        return ThresholdEstimate(
            lam=float(np.mean(nn)) / 2.0, dup_distances=dup, nn_distances=nn, dup_empty=True
        )
    lam = 0.5 * (float(np.mean(dup)) + float(np.mean(nn)))
    return ThresholdEstimate(lam=lam, dup_distances=dup, nn_distances=nn)


def prune_word(sense_vectors: np.ndarray, lam: float, active: np.ndarray) -> np.ndarray:
    """Greedy removal of duplicate senses under cosine-distance threshold lam.

    Repeatedly drops the sense with the most duplicate partners (ties: lowest
    index) until no active pair is closer than lam. Never drops the last one.
    """
    active = np.asarray(active, dtype=bool).copy()
    if not active.any():
        raise ValueError("need at least one active sense")
    unit = _unit_rows(np.asarray(sense_vectors, dtype=np.float64))
    dist = 1.0 - unit @ unit.T
    K = len(active)
    while active.sum() > 1:
        idx = np.nonzero(active)[0]
        dup_counts = np.zeros(K, dtype=int)
        for a in range(len(idx)):
            for b in range(a + 1, len(idx)):
                if dist[idx[a], idx[b]] < lam:
                    dup_counts[idx[a]] += 1
                    dup_counts[idx[b]] += 1
        if dup_counts.max() == 0:
            break
        active[int(np.argmax(dup_counts))] = False
    return active


def prune_model(params: ModelParams, lam: float, mask: np.ndarray | None = None) -> np.ndarray:
    """Apply prune_word to every vocabulary word; returns the full sense mask."""
    V, K, _ = params.S.shape
    base = full_mask(V, K) if mask is None else np.asarray(mask, dtype=bool)
    out = np.empty((V, K), dtype=bool)
    for w in range(V):
        out[w] = prune_word(params.S[w], lam, base[w])
    return out


def removed_by_decile(mask: np.ndarray, vocab: Vocabulary) -> list[tuple[int, float]]:
    """Mean senses removed per frequency decile (ids are frequency-ordered)."""
    V, K = mask.shape
    removed = K - mask.sum(axis=1)
    stats = []
    for dec in range(10):
        lo, hi = (V * dec) // 10, (V * (dec + 1)) // 10
        if hi > lo:
            stats.append((dec, float(removed[lo:hi].mean())))
    return stats


def save_mask(mask: np.ndarray, vocab: Vocabulary, lam: float, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"#lambda\t{lam!r}\n")
        for w, row in zip(vocab.words, mask):
            bits = "".join("1" if b else "0" for b in row)
            fh.write(f"{w}\t{bits}\n")


def load_mask(path, vocab: Vocabulary, K: int) -> tuple[np.ndarray, float]:
    mask = np.zeros((len(vocab), K), dtype=bool)
    lam = float("nan")
    seen = 0
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.rstrip("\n")
            if not line:
                continue
            if line.startswith("#lambda"):
                lam = float(line.split("\t")[1])
                continue
            word, bits = line.split("\t")
            if len(bits) != K:
                raise ValueError(f"mask row for {word!r} has {len(bits)} bits, expected {K}")
            wid = vocab.id_of.get(word)
            if wid is None:
                raise ValueError(f"mask word {word!r} not in vocabulary")
            mask[wid] = [b == "1" for b in bits]
            seen += 1
    if seen != len(vocab):
        raise ValueError(f"mask file covers {seen} of {len(vocab)} words")
    if not mask.any(axis=1).all():
        raise ValueError("mask leaves some word with no active sense")
    return mask, lam
