"""Synthetic corpora with known semantic structure.

Desk-scale experiments cannot use the billion-token corpora and licensed
similarity datasets the full-size numbers come from, so these generators
build topic-structured text with ground-truth word similarities:

- topic corpus: every content word belongs to one topic; sentences draw
  their content words from a single topic plus shared filler. Words of the
  same topic end up distributionally close, so similarity is recoverable.
- pseudoword corpus: two frequent words from different topics are merged
  into one ambiguous token, giving ground truth for sense separation.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

FILLER_WORDS = 40


@dataclass
class TopicCorpusSpec:
    n_topics: int = 10
    words_per_topic: int = 40
    sentence_len: int = 12
    filler_ratio: float = 0.35
    seed: int = 7


def topic_of(word: str) -> int | None:
    """Ground-truth topic for generated words, None for filler."""
    if word.startswith("t") and "w" in word:
        return int(word[1 : word.index("w")])
    return None


def generate_topic_sentences(spec: TopicCorpusSpec, n_sentences: int, rng=None):
    """Yield token lists; each sentence's content words come from one topic."""
    if rng is None:
        rng = np.random.default_rng(spec.seed)
    topic_words = [
        [f"t{t}w{i}" for i in range(spec.words_per_topic)] for t in range(spec.n_topics)
    ]
    fillers = [f"f{i}" for i in range(FILLER_WORDS)]
    # Zipf-ish weights inside each pool so vocabularies have realistic skew
    tw = 1.0 / np.arange(1, spec.words_per_topic + 1)
    tw /= tw.sum()
    fw = 1.0 / np.arange(1, FILLER_WORDS + 1)
    fw /= fw.sum()
    for _ in range(n_sentences):
        topic = int(rng.integers(spec.n_topics))
        sent = []
        for _ in range(spec.sentence_len):
            if rng.random() < spec.filler_ratio:
                sent.append(fillers[int(rng.choice(FILLER_WORDS, p=fw))])
            else:
                sent.append(topic_words[topic][int(rng.choice(spec.words_per_topic, p=tw))])
        yield sent


def write_topic_corpus(path, spec: TopicCorpusSpec, n_tokens: int) -> None:
    n_sentences = max(1, n_tokens // spec.sentence_len)
    rng = np.random.default_rng(spec.seed)
    with open(path, "w", encoding="utf-8") as fh:
        for sent in generate_topic_sentences(spec, n_sentences, rng):
            fh.write(" ".join(sent) + "\n")


def topic_similarity(word1: str, word2: str) -> float:
    """Ground-truth similarity: same topic high, cross-topic low, filler mid-low."""
    t1, t2 = topic_of(word1), topic_of(word2)
    if t1 is None or t2 is None:
        return 0.3
    return 1.0 if t1 == t2 else 0.0


@dataclass
class PseudowordCorpus:
    corpus_path: str
    pseudo_token: str
    word_a: str
    word_b: str
    held_out_a: list[list[str]]  # sentences originally containing word_a
    held_out_b: list[list[str]]
    target_a: list[int]  # position of the pseudotoken in each held-out sentence
    target_b: list[int]


def build_pseudoword_corpus(
    path,
    n_tokens: int,
    spec: TopicCorpusSpec | None = None,
    held_out_per_word: int = 200,
    seed: int = 7,
) -> PseudowordCorpus:
    """Merge the most frequent word of topic 0 and of topic 1 into one token.

    Held-out sentences (not written to the corpus) keep track of which source
    word produced the pseudotoken, for sense-purity scoring.
    """
    if spec is None:
        spec = TopicCorpusSpec(seed=seed)
    rng = np.random.default_rng(seed)
    word_a, word_b = "t0w0", "t1w0"
    pseudo = "t0w0_t1w0"
    held_a: list[list[str]] = []
    held_b: list[list[str]] = []
    tgt_a: list[int] = []
    tgt_b: list[int] = []
    n_sentences = max(1, n_tokens // spec.sentence_len)
    with open(path, "w", encoding="utf-8") as fh:
        for sent in generate_topic_sentences(spec, n_sentences, rng):
            merged = [pseudo if w in (word_a, word_b) else w for w in sent]
            if word_a in sent and len(held_a) < held_out_per_word:
                held_a.append(merged)
                tgt_a.append(merged.index(pseudo))
                continue
            if word_b in sent and len(held_b) < held_out_per_word:
                held_b.append(merged)
                tgt_b.append(merged.index(pseudo))
                continue
            fh.write(" ".join(merged) + "\n")
    return PseudowordCorpus(
        corpus_path=str(path),
        pseudo_token=pseudo,
        word_a=word_a,
        word_b=word_b,
        held_out_a=held_a,
        held_out_b=held_b,
        target_a=tgt_a,
        target_b=tgt_b,
    )


def make_contextual_fixture(
    spec: TopicCorpusSpec, n_pairs: int, seed: int = 11
) -> list:
    """SCWS-style pairs over generated sentences with ground-truth gold scores."""
    from .evalsuite import ContextualPair

    rng = np.random.default_rng(seed)
    sentences = list(generate_topic_sentences(spec, n_pairs * 4, rng))
    pairs = []
    i = 0
    while len(pairs) < n_pairs and i + 1 < len(sentences):
        s1, s2 = sentences[i], sentences[i + 1]
        i += 2
        cand1 = [j for j, w in enumerate(s1) if topic_of(w) is not None]
        cand2 = [j for j, w in enumerate(s2) if topic_of(w) is not None]
        if not cand1 or not cand2:
            continue
        j1 = int(rng.choice(cand1))
        j2 = int(rng.choice(cand2))
        w1, w2 = s1[j1], s2[j2]
        gold = topic_similarity(w1, w2) + float(rng.normal(scale=0.05))
        pairs.append(
            ContextualPair(
                word1=w1, word2=w2, pos1="n", pos2="n",
                context1=s1, context2=s2, target1=j1, target2=j2, gold=gold,
            )
        )
    return pairs
