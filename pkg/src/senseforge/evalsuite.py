"""Similarity metrics, WiC-style sense matching, neighbor queries and crowdtask export."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
import scipy.stats

from .attention import hard_select, soft_attention
from .corpus import Vocabulary
from .trainer import ModelParams, context_mean, full_mask

log = logging.getLogger(__name__)

DEFAULT_CONTEXT_WINDOW = 5


@dataclass
class ContextualPair:
    word1: str
    word2: str
    pos1: str
    pos2: str
    context1: list[str]
    context2: list[str]
    target1: int
    target2: int
    gold: float


@dataclass
class PlainPair:
    word1: str
    word2: str
    gold: float


@dataclass
class WicInstance:
    target: str
    pos: str
    context1: list[str]
    context2: list[str]
    target1: int
    target2: int
    gold: bool | None = None


@dataclass
class IntrusionTask:
    word: str
    sense: int
    shown_words: list[str]
    intruder_index: int


@dataclass
class SenseSelectionTask:
    word: str
    sense_groups: list[list[str]]  # shuffled order
    group_order: list[int]  # group_order[i] = original sense slot shown at position i
    model_choice: int  # position in the shuffled order
    posterior: np.ndarray  # in shuffled order


def _cosine(a: np.ndarray, b: np.ndarray) -> float:
    na, nb = np.linalg.norm(a), np.linalg.norm(b)
    if na == 0 or nb == 0:
        return 0.0
    return float(np.dot(a, b) / (na * nb))


def _eval_context_ids(
    tokens: list[str], target: int, vocab: Vocabulary, window: int
) -> list[int]:
    """In-vocabulary ids within `window` positions of the target (target excluded)."""
    lo, hi = max(0, target - window), min(len(tokens), target + window + 1)
    ids = []
    for i in range(lo, hi):
        if i == target:
            continue
        wid = vocab.id_of.get(tokens[i])
        if wid is not None:
            ids.append(wid)
    return ids


def sense_posterior(
    word: int,
    context_ids: list[int],
    params: ModelParams,
    mask: np.ndarray | None = None,
) -> np.ndarray:
    """Noiseless soft-attention posterior over the word's active senses."""
    active = None if mask is None else mask[word]
    if not context_ids:
        log.warning("empty usable context for word id %d; uniform posterior", word)
        if active is None:
            active = np.ones(params.K, dtype=bool)
        out = np.zeros(params.K)
        out[active] = 1.0 / active.sum()
        return out
    cbar = context_mean(context_ids, params.C)
    return soft_attention(cbar, params.S[word], active)


def _pair_senses(pair: ContextualPair, vocab: Vocabulary, params, mask, window):
    w1 = vocab.id_of.get(pair.word1)
    w2 = vocab.id_of.get(pair.word2)
    if w1 is None or w2 is None:
        return None
    ctx1 = _eval_context_ids(pair.context1, pair.target1, vocab, window)
    ctx2 = _eval_context_ids(pair.context2, pair.target2, vocab, window)
    p1 = sense_posterior(w1, ctx1, params, mask)
    p2 = sense_posterior(w2, ctx2, params, mask)
    return w1, w2, p1, p2


def max_sim_c(
    pair: ContextualPair,
    vocab: Vocabulary,
    params: ModelParams,
    mask: np.ndarray | None = None,
    window: int = DEFAULT_CONTEXT_WINDOW,
) -> float | None:
    """Cosine of the two posterior-argmax senses; None if either word is OOV."""
    got = _pair_senses(pair, vocab, params, mask, window)
    if got is None:
        return None
    w1, w2, p1, p2 = got
    return _cosine(params.S[w1, int(np.argmax(p1))], params.S[w2, int(np.argmax(p2))])


def avg_sim_c(
    pair: ContextualPair,
    vocab: Vocabulary,
    params: ModelParams,
    mask: np.ndarray | None = None,
    window: int = DEFAULT_CONTEXT_WINDOW,
) -> float | None:
    """Posterior-weighted average cosine over all active sense pairs."""
    got = _pair_senses(pair, vocab, params, mask, window)
    if got is None:
        return None
    w1, w2, p1, p2 = got
    total = 0.0
    for i in range(params.K):
        if p1[i] == 0.0:
            continue
        for j in range(params.K):
            if p2[j] == 0.0:
                continue
            total += p1[i] * p2[j] * _cosine(params.S[w1, i], params.S[w2, j])
    return total


def max_sim(
    word1: str,
    word2: str,
    vocab: Vocabulary,
    params: ModelParams,
    mask: np.ndarray | None = None,
) -> float | None:
    """Maximum cosine over all active sense pairs (context-free)."""
    w1 = vocab.id_of.get(word1)
    w2 = vocab.id_of.get(word2)
    if w1 is None or w2 is None:
        return None
    m = full_mask(params.vocab_size, params.K) if mask is None else mask
    best = -np.inf
    for i in np.nonzero(m[w1])[0]:
        for j in np.nonzero(m[w2])[0]:
            best = max(best, _cosine(params.S[w1, i], params.S[w2, j]))
    return best


def spearman(xs, ys) -> float:
    """Spearman rank correlation with average ranks for ties."""
    xs = np.asarray(xs, dtype=np.float64)
    ys = np.asarray(ys, dtype=np.float64)
    if xs.size != ys.size or xs.size < 2:
        raise ValueError("need two equal-length score lists with >= 2 entries")
    if np.ptp(xs) == 0 or np.ptp(ys) == 0:
        raise ValueError("scores have zero variance")
    rho = scipy.stats.spearmanr(xs, ys).statistic
    return float(rho)


@dataclass
class SimilarityResult:
    rho: float
    coverage: float
    scores: list[float] = field(default_factory=list)
    golds: list[float] = field(default_factory=list)


def evaluate_similarity(
    dataset,
    metric: str,
    vocab: Vocabulary,
    params: ModelParams,
    mask: np.ndarray | None = None,
    window: int = DEFAULT_CONTEXT_WINDOW,
) -> SimilarityResult:
    """Apply a metric over a dataset and correlate with gold ratings.

    metric: 'maxsimc' | 'avgsimc' (contextual pairs) or 'maxsim' (plain pairs).
    OOV pairs are skipped; coverage reports the retained fraction.
    """
    if not dataset:
        raise ValueError("dataset is empty")
    scores, golds = [], []
    for item in dataset:
        if metric == "maxsimc":
            s = max_sim_c(item, vocab, params, mask, window)
        elif metric == "avgsimc":
            s = avg_sim_c(item, vocab, params, mask, window)
        elif metric == "maxsim":
            s = max_sim(item.word1, item.word2, vocab, params, mask)
        else:
            raise ValueError(f"unknown metric {metric!r}")
        if s is None:
            continue
        scores.append(s)
        golds.append(item.gold)
    if not scores:
        raise ValueError("all pairs were out of vocabulary")
    rho = spearman(scores, golds)
    return SimilarityResult(
        rho=rho, coverage=len(scores) / len(dataset), scores=scores, golds=golds
    )


def wic_judge(
    instance: WicInstance,
    vocab: Vocabulary,
    params: ModelParams,
    mask: np.ndarray | None = None,
    rng: np.random.Generator | None = None,
    window: int = DEFAULT_CONTEXT_WINDOW,
) -> bool:
    """True iff the selected sense is the same under both contexts.

    Monosemous and out-of-vocabulary targets get a random judgment (from
    ``rng`` for reproducibility).
    """
    wid = vocab.id_of.get(instance.target)
    active = None
    if wid is not None and mask is not None:
        active = mask[wid]
    n_active = params.K if active is None else int(active.sum())
    if wid is None or n_active == 1:
        if rng is None:
            rng = np.random.default_rng()
        return bool(rng.integers(2))
    ctx1 = _eval_context_ids(instance.context1, instance.target1, vocab, window)
    ctx2 = _eval_context_ids(instance.context2, instance.target2, vocab, window)
    p1 = sense_posterior(wid, ctx1, params, mask)
    p2 = sense_posterior(wid, ctx2, params, mask)
    return int(np.argmax(p1)) == int(np.argmax(p2))


def evaluate_wic(instances, vocab, params, mask=None, rng=None, window=DEFAULT_CONTEXT_WINDOW):
    """Accuracy of wic_judge against gold labels."""
    if rng is None:
        rng = np.random.default_rng()
    correct = 0
    for inst in instances:
        if wic_judge(inst, vocab, params, mask, rng, window) == inst.gold:
            correct += 1
    return correct / len(instances)


def nearest_words(
    params: ModelParams,
    vocab: Vocabulary,
    word: int,
    sense: int,
    top_n: int,
    mask: np.ndarray | None = None,
    dedup: bool = True,
) -> list[tuple[str, int, float]]:
    """Nearest senses of *other* words; with dedup, one entry per word type."""
    V, K, d = params.S.shape
    m = full_mask(V, K) if mask is None else np.asarray(mask, dtype=bool)
    if not m[word, sense]:
        raise ValueError("query sense is masked")
    flat = params.S.reshape(V * K, d)
    norms = np.linalg.norm(flat, axis=1)
    norms[norms == 0] = 1.0
    q = params.S[word, sense]
    qn = np.linalg.norm(q)
    sims = (flat @ q) / (norms * (qn if qn else 1.0))
    flat_mask = m.reshape(V * K).copy()
    flat_mask[word * K : (word + 1) * K] = False
    order = sorted(np.nonzero(flat_mask)[0], key=lambda i: (-sims[i], i // K, i % K))
    out = []
    seen = set()
    for i in order:
        w = int(i // K)
        if dedup:
            if w in seen:
                continue
            seen.add(w)
        out.append((vocab.words[w], int(i % K), float(sims[i])))
        if len(out) == top_n:
            break
    return out


def export_intrusion_tasks(
    params: ModelParams,
    vocab: Vocabulary,
    words: list[str],
    per_sense: int,
    rng: np.random.Generator,
    mask: np.ndarray | None = None,
) -> list[IntrusionTask]:
    """Word-intrusion items: 3 true neighbors of a sense plus one intruder
    drawn from the neighbors of a different sense of the same word.

    Words with fewer than two active senses are skipped.
    """
    V, K = params.vocab_size, params.K
    m = full_mask(V, K) if mask is None else np.asarray(mask, dtype=bool)
    tasks = []
    for word in words:
        wid = vocab.id_of.get(word)
        if wid is None:
            continue
        active = np.nonzero(m[wid])[0]
        if len(active) < 2:
            continue
        neighbor_lists = {
            int(k): [w for w, _, _ in nearest_words(params, vocab, wid, int(k), 10, m)]
            for k in active
        }
        for k in active:
            own = neighbor_lists[int(k)]
            if len(own) < 3:
                continue
            others = [int(o) for o in active if o != k]
            for _ in range(per_sense):
                shown = list(rng.choice(own, size=3, replace=False))
                intruder = None
                for _ in range(50):
                    o = others[int(rng.integers(len(others)))]
                    pool = [w for w in neighbor_lists[o] if w not in own and w not in shown]
                    if pool:
                        intruder = pool[int(rng.integers(len(pool)))]
                        break
                if intruder is None:
                    continue
                shown.append(intruder)
                perm = rng.permutation(4)
                shuffled = [shown[i] for i in perm]
                tasks.append(
                    IntrusionTask(
                        word=word,
                        sense=int(k),
                        shown_words=shuffled,
                        intruder_index=int(np.nonzero(perm == 3)[0][0]),
                    )
                )
    return tasks


def export_sense_selection_tasks(
    sentences: list[tuple[list[str], int]],
    params: ModelParams,
    vocab: Vocabulary,
    rng: np.random.Generator,
    mask: np.ndarray | None = None,
    window: int = DEFAULT_CONTEXT_WINDOW,
) -> list[SenseSelectionTask]:
    """Contextual sense-selection items: one shuffled top-10-neighbor group
    per sense, plus the model's own choice and posterior for scoring.

    Pruned sense slots are backed by dummy groups built from random vectors.
    """
    V, K = params.vocab_size, params.K
    m = full_mask(V, K) if mask is None else np.asarray(mask, dtype=bool)
    flat = params.S.reshape(V * K, params.d)
    norms = np.linalg.norm(flat, axis=1)
    norms[norms == 0] = 1.0
    tasks = []
    for tokens, target in sentences:
        wid = vocab.id_of.get(tokens[target])
        if wid is None:
            continue
        groups = []
        for k in range(K):
            if m[wid, k]:
                groups.append([w for w, _, _ in nearest_words(params, vocab, wid, k, 10, m)])
            else:
                # dummy group: neighbors of a random direction
                q = rng.normal(size=params.d)
                sims = (flat @ q) / (norms * np.linalg.norm(q))
                order = np.argsort(-sims)
                dummy, seen = [], {wid}
                for i in order:
                    w = int(i // K)
                    if w in seen:
                        continue
                    seen.add(w)
                    dummy.append(vocab.words[w])
                    if len(dummy) == 10:
                        break
                groups.append(dummy)
        ctx = _eval_context_ids(tokens, target, vocab, window)
        posterior = sense_posterior(wid, ctx, params, m)
        choice = hard_select(context_mean(ctx, params.C), params.S[wid], m[wid]) if ctx else int(
            np.argmax(posterior)
        )
        perm = list(rng.permutation(K))
        tasks.append(
            SenseSelectionTask(
                word=tokens[target],
                sense_groups=[groups[i] for i in perm],
                group_order=[int(i) for i in perm],
                model_choice=perm.index(choice),
                posterior=posterior[perm],
            )
        )
    return tasks
