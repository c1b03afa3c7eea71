"""Model parameters and the training loop.

The objective marginalizes the skip-gram likelihood over senses with a
context-conditioned attention, lower-bounded through Jensen's inequality and
estimated with negative sampling:

    loss(center, ctx) = - sum_k gamma_k [ log sig(c_ctx . s_k)
                                          + sum_neg log sig(-c_neg . s_k) ]

gamma is soft attention (SASI) or a (scaled) Gumbel softmax of the
context-sense dot products. Gradients flow through both the likelihood term
and the attention logits (into S rows of the center word and into C via the
context mean). All gradients here are hand-derived and checked against
finite differences in the test suite.
"""

from __future__ import annotations

import collections
from dataclasses import dataclass, field, replace
from typing import Callable, Sequence

import numpy as np
from scipy.special import expit

from .attention import AttentionMode, Variant, gumbel_noise
from .corpus import (
    NegativeTable,
    Vocabulary,
    build_negative_table,
    iter_windows,
    keep_probabilities,
    read_token_ids,
)


def log_sigmoid(x):
    return -np.logaddexp(0.0, -x)


@dataclass
class ModelParams:
    """Sense tensor S (|V| x K x d) and context matrix C (|V| x d)."""

    S: np.ndarray
    C: np.ndarray

    @property
    def vocab_size(self) -> int:
        return self.S.shape[0]

    @property
    def K(self) -> int:
        return self.S.shape[1]

    @property
    def d(self) -> int:
        return self.S.shape[2]

    def copy(self) -> "ModelParams":
        return ModelParams(S=self.S.copy(), C=self.C.copy())


@dataclass
class TrainConfig:
    dim: int = 300
    senses: int = 3
    window: int = 5
    epochs: int = 5
    initial_lr: float = 0.01
    batch: int = 512
    negatives: int = 5
    subsample: float = 1e-4
    mode: AttentionMode = field(default_factory=AttentionMode)
    seed: int = 1
    lr_floor_fraction: float = 1e-4

    def __post_init__(self):
        for name in ("dim", "senses", "window", "epochs", "batch", "negatives"):
            if getattr(self, name) < (0 if name == "epochs" else 1):
                raise ValueError(f"{name} must be positive")
        if self.initial_lr <= 0 or self.subsample <= 0 or self.lr_floor_fraction <= 0:
            raise ValueError("initial_lr, subsample and lr_floor_fraction must be > 0")

    def with_mode(self, name: str, tau: float | None = None, beta: float | None = None):
        mode = AttentionMode.from_name(
            name,
            tau=self.mode.tau if tau is None else tau,
            beta=self.mode.beta if beta is None else beta,
        )
        return replace(self, mode=mode)


@dataclass
class GradientBundle:
    """Sparse gradients: sense rows keyed by (word, sense), context rows by word."""

    s_grads: dict[tuple[int, int], np.ndarray] = field(default_factory=dict)
    c_grads: dict[int, np.ndarray] = field(default_factory=dict)

    def add_s(self, word: int, sense: int, g: np.ndarray) -> None:
        key = (word, sense)
        if key in self.s_grads:
            self.s_grads[key] = self.s_grads[key] + g
        else:
            self.s_grads[key] = np.array(g, dtype=np.float64)

    def add_c(self, word: int, g: np.ndarray) -> None:
        if word in self.c_grads:
            self.c_grads[word] = self.c_grads[word] + g
        else:
            self.c_grads[word] = np.array(g, dtype=np.float64)

    def merge(self, other: "GradientBundle") -> None:
        for (w, k), g in other.s_grads.items():
            self.add_s(w, k, g)
        for w, g in other.c_grads.items():
            self.add_c(w, g)


def init_params(vocab_size: int, K: int, d: int, rng: np.random.Generator) -> ModelParams:
    """Uniform(-0.5/d, 0.5/d) init for both embedding tables."""
    if vocab_size < 1 or K < 1 or d < 1:
        raise ValueError("vocab_size, K and d must be >= 1")
    half = 0.5 / d
    S = rng.uniform(-half, half, size=(vocab_size, K, d))
    C = rng.uniform(-half, half, size=(vocab_size, d))
    return ModelParams(S=S, C=C)


def full_mask(vocab_size: int, K: int) -> np.ndarray:
    return np.ones((vocab_size, K), dtype=bool)


def context_mean(context_ids: Sequence[int], C: np.ndarray) -> np.ndarray:
    if len(context_ids) == 0:
        raise ValueError("context_ids must be nonempty")
    return C[np.asarray(context_ids, dtype=np.int64)].mean(axis=0)


def jensen_gap(probabilities: np.ndarray, likelihoods: np.ndarray) -> tuple[float, float]:
    """(sum p_k log q_k, log sum p_k q_k); the first never exceeds the second."""
    p = np.asarray(probabilities, dtype=np.float64)
    q = np.asarray(likelihoods, dtype=np.float64)
    lower = float(np.sum(np.where(p > 0, p * np.log(q), 0.0)))
    exact = float(np.log(np.sum(p * q)))
    return lower, exact


def lr_at(initial: float, progress: float, floor_fraction: float = 1e-4) -> float:
    if not 0.0 <= progress <= 1.0:
        raise ValueError("progress must be in [0, 1]")
    return max(initial * (1.0 - progress), initial * floor_fraction)


def pair_loss(
    center: int,
    contexts: Sequence[int],
    negatives_per_context: Sequence[Sequence[int]],
    params: ModelParams,
    mask: np.ndarray | None,
    mode: AttentionMode,
    rng: np.random.Generator | None = None,
    noise: np.ndarray | None = None,
) -> tuple[float, GradientBundle, np.ndarray]:
    """Loss, sparse gradients and mean attention for one (center, window) event.

    Gumbel noise is drawn fresh per (center, context) pair; pass ``noise`` of
    shape (len(contexts), K) to pin it (used by the finite-difference oracle).
    Returned attention is the mean of the per-context distributions.
    """
    m = len(contexts)
    if m == 0:
        raise ValueError("contexts must be nonempty")
    if len(negatives_per_context) != m:
        raise ValueError("need one negative list per context word")
    S_w = params.S[center]
    K = params.K
    active = np.ones(K, dtype=bool) if mask is None else np.asarray(mask[center], dtype=bool)
    if not active.any():
        raise ValueError(f"all senses masked for word {center}")

    cbar = context_mean(contexts, params.C)
    z = S_w @ cbar
    tau = mode.effective_tau
    beta = mode.effective_beta
    if mode.variant is Variant.SASI:
        noise = np.zeros((m, K))
    elif noise is None:
        if rng is None:
            raise ValueError("need an rng (or explicit noise) for Gumbel attention")
        noise = gumbel_noise(rng, size=(m, K))
    noise = np.asarray(noise, dtype=np.float64)

    grads = GradientBundle()
    total_loss = 0.0
    gamma_sum = np.zeros(K)
    dS = np.zeros_like(S_w)
    d_cbar = np.zeros(params.d)

    for j, (ctx, negs) in enumerate(zip(contexts, negatives_per_context)):
        logits = (z + beta * noise[j]) / tau
        gamma = np.zeros(K)
        a = logits[active]
        a = a - a.max()
        e = np.exp(a)
        gamma[active] = e / e.sum()

        c_ctx = params.C[ctx]
        neg_ids = np.asarray(negs, dtype=np.int64)
        c_neg = params.C[neg_ids]
        pos_dot = S_w @ c_ctx
        neg_dot = c_neg @ S_w.T  # (n, K)
        A = log_sigmoid(pos_dot) + log_sigmoid(-neg_dot).sum(axis=0)
        loss_j = -float(np.dot(gamma, A))
        total_loss += loss_j
        gamma_sum += gamma

        # likelihood path
        sig_pos = expit(-pos_dot)  # (K,)
        sig_neg = expit(neg_dot)  # (n, K)
        dA_dS = sig_pos[:, None] * c_ctx[None, :] - sig_neg.T @ c_neg  # (K, d)
        dS += -gamma[:, None] * dA_dS
        grads.add_c(ctx, -(gamma * sig_pos) @ S_w)
        for i, neg in enumerate(neg_ids):
            grads.add_c(int(neg), (gamma * sig_neg[i]) @ S_w)

        # attention path: d gamma_k / d logit_l = gamma_k (delta - gamma_l) / tau
        Abar = float(np.dot(gamma, A))
        coef = gamma * (A - Abar) / tau  # zero at masked senses
        dS += -coef[:, None] * cbar[None, :]
        d_cbar += -coef @ S_w

    for k in range(K):
        if active[k] and np.any(dS[k]):
            grads.add_s(center, k, dS[k])
    for ctx in contexts:
        grads.add_c(ctx, d_cbar / m)

    if not np.isfinite(total_loss):
        raise FloatingPointError(f"non-finite loss at center word {center}")
    return total_loss, grads, gamma_sum / m


def apply_grads(params: ModelParams, grads: GradientBundle, lr: float) -> None:
    if lr <= 0:
        raise ValueError("lr must be > 0")
    for (w, k), g in grads.s_grads.items():
        params.S[w, k] -= lr * g
    for w, g in grads.c_grads.items():
        params.C[w] -= lr * g


class RunningLoss:
    """Windowed mean of recent batch losses."""

    def __init__(self, window: int = 100):
        self._buf: collections.deque[float] = collections.deque(maxlen=window)

    def add(self, loss: float) -> None:
        self._buf.append(float(loss))

    def mean(self) -> float | None:
        if not self._buf:
            return None
        return sum(self._buf) / len(self._buf)


@dataclass(frozen=True)
class ProgressRecord:
    epoch: int
    batch: int
    lr: float
    mean_loss: float
    batch_loss: float
    pairs: int

    def line(self) -> str:
        return f"{self.epoch}\t{self.batch}\t{self.lr:.6g}\t{self.mean_loss:.6f}"


ProgressSink = Callable[[ProgressRecord], None]


class _Batch:
    """Flat (center, context) pair arrays plus the window structure for the
    context-mean gradient."""

    __slots__ = ("centers", "contexts", "win_index", "win_ctx", "win_sizes", "pairs")

    def __init__(self):
        self.centers: list[int] = []
        self.contexts: list[int] = []
        self.win_index: list[int] = []
        self.win_ctx: list[list[int]] = []
        self.win_sizes: list[int] = []
        self.pairs = 0

    def add_window(self, center: int, contexts: list[int]) -> None:
        w = len(self.win_ctx)
        self.win_ctx.append(contexts)
        self.win_sizes.append(len(contexts))
        for c in contexts:
            self.centers.append(center)
            self.contexts.append(c)
            self.win_index.append(w)
        self.pairs += len(contexts)


def _batch_step(
    params: ModelParams,
    batch: _Batch,
    negatives: np.ndarray,
    mask: np.ndarray,
    mode: AttentionMode,
    lr: float,
    noise: np.ndarray | None,
    rng: np.random.Generator | None,
) -> float:
    """One summed-gradient SGD step over a batch of (center, context) pairs.

    Vectorized equivalent of summing ``pair_loss`` gradients over the batch
    and calling ``apply_grads`` once. Returns the summed loss.
    """
    S, C = params.S, params.C
    centers = np.asarray(batch.centers, dtype=np.int64)
    contexts = np.asarray(batch.contexts, dtype=np.int64)
    win_index = np.asarray(batch.win_index, dtype=np.int64)
    sizes = np.asarray(batch.win_sizes, dtype=np.float64)
    win_ctx_flat = np.concatenate([np.asarray(c, dtype=np.int64) for c in batch.win_ctx])
    win_row = np.repeat(np.arange(len(batch.win_ctx)), [len(c) for c in batch.win_ctx])
    P = centers.size
    K = params.K
    tau = mode.effective_tau
    beta = mode.effective_beta

    # per-window context means, expanded to pairs
    W = len(batch.win_ctx)
    acc = np.zeros((W, params.d))
    np.add.at(acc, win_row, C[win_ctx_flat])
    cbar_w = acc / sizes[:, None]
    cbar = cbar_w[win_index]  # (P, d)

    S_c = S[centers]  # (P, K, d)
    z = np.einsum("pd,pkd->pk", cbar, S_c)
    if mode.variant is Variant.SASI:
        logits = z
    else:
        if noise is None:
            noise = gumbel_noise(rng, size=(P, K))
        logits = z + beta * noise
    logits = logits / tau

    active = mask[centers]  # (P, K) bool
    logits = np.where(active, logits, -np.inf)
    logits -= logits.max(axis=1, keepdims=True)
    e = np.where(active, np.exp(logits), 0.0)
    gamma = e / e.sum(axis=1, keepdims=True)  # exact zeros at masked senses

    C_ctx = C[contexts]  # (P, d)
    C_neg = C[negatives]  # (P, n, d)
    pos = np.einsum("pd,pkd->pk", C_ctx, S_c)
    negdot = np.einsum("pid,pkd->pik", C_neg, S_c)
    A = log_sigmoid(pos) + log_sigmoid(-negdot).sum(axis=1)  # (P, K)
    loss = -float(np.einsum("pk,pk->", gamma, A))

    sig_pos = expit(-pos)  # (P, K)
    sig_neg = expit(negdot)  # (P, n, K)
    Abar = np.einsum("pk,pk->p", gamma, A)
    coef = gamma * (A - Abar[:, None]) / tau  # (P, K), zeros at masked

    # sense-tensor gradient
    dS = -gamma[:, :, None] * (
        sig_pos[:, :, None] * C_ctx[:, None, :] - np.einsum("pik,pid->pkd", sig_neg, C_neg)
    )
    dS -= coef[:, :, None] * cbar[:, None, :]
    np.add.at(S, centers, -lr * dS)

    # context-matrix gradients: direct term, negatives, and the mean path
    g_ctx = -np.einsum("pk,pkd->pd", gamma * sig_pos, S_c)
    np.add.at(C, contexts, -lr * g_ctx)
    g_neg = np.einsum("pik,pkd->pid", sig_neg * gamma[:, None, :], S_c)
    np.add.at(C, negatives.reshape(-1), -lr * g_neg.reshape(-1, params.d))
    g_cbar = -np.einsum("pk,pkd->pd", coef, S_c)  # (P, d)
    acc_cbar = np.zeros((W, params.d))
    np.add.at(acc_cbar, win_index, g_cbar)
    np.add.at(C, win_ctx_flat, -lr * (acc_cbar / sizes[:, None])[win_row])

    if not np.isfinite(loss):
        raise FloatingPointError("non-finite batch loss")
    return loss


def _sample_batch_negatives(
    table: NegativeTable, contexts: np.ndarray, n: int, rng: np.random.Generator
) -> np.ndarray:
    """(P, n) negative draws, each resampled until != its pair's context id."""
    P = contexts.size
    out = table.sample(P * n, rng).reshape(P, n)
    excl = contexts[:, None]
    while True:
        bad = out == excl
        nbad = int(bad.sum())
        if nbad == 0:
            return out
        out[bad] = table.sample(nbad, rng)


def _train_shard(
    ids: np.ndarray,
    params: ModelParams,
    mask: np.ndarray,
    table: NegativeTable,
    keep: np.ndarray,
    config: TrainConfig,
    rng: np.random.Generator,
    progress_sink: ProgressSink | None,
    progress_base: float,
    progress_span: float,
) -> None:
    running = RunningLoss()
    batch_no = 0
    n_tokens = max(ids.size, 1)
    for epoch in range(config.epochs):
        batch = _Batch()
        consumed = 0

        def flush():
            nonlocal batch, batch_no
            if batch.pairs == 0:
                return
            progress = progress_base + progress_span * (
                (epoch + consumed / n_tokens) / config.epochs
            )
            lr = lr_at(config.initial_lr, min(progress, 1.0), config.lr_floor_fraction)
            contexts = np.asarray(batch.contexts, dtype=np.int64)
            negs = _sample_batch_negatives(table, contexts, config.negatives, rng)
            loss = _batch_step(params, batch, negs, mask, config.mode, lr, None, rng)
            batch_no += 1
            per_pair = loss / batch.pairs
            running.add(per_pair)
            if progress_sink is not None:
                progress_sink(
                    ProgressRecord(
                        epoch=epoch,
                        batch=batch_no,
                        lr=lr,
                        mean_loss=running.mean(),
                        batch_loss=per_pair,
                        pairs=batch.pairs,
                    )
                )
            batch = _Batch()

        for win in iter_windows(ids, config.window, keep, rng):
            consumed += 1
            batch.add_window(win.center, win.contexts)
            if batch.pairs >= config.batch:
                flush()
        consumed = n_tokens
        flush()


def train(
    corpus_path,
    vocab: Vocabulary,
    config: TrainConfig,
    mask: np.ndarray | None = None,
    progress_sink: ProgressSink | None = None,
    threads: int = 1,
    params: ModelParams | None = None,
) -> ModelParams:
    """Train sense embeddings on a whitespace-tokenized corpus file.

    Single-threaded runs are deterministic given ``config.seed``. With
    ``threads > 1`` shards update shared parameters without locks (hogwild);
    the result is then nondeterministic by contract.
    """
    if len(vocab) == 0:
        raise ValueError("vocabulary is empty")
    rng = np.random.default_rng(config.seed)
    if params is None:
        params = init_params(len(vocab), config.senses, config.dim, rng)
    if mask is None:
        mask = full_mask(len(vocab), config.senses)
    else:
        mask = np.asarray(mask, dtype=bool)
        if mask.shape != (len(vocab), config.senses):
            raise ValueError("mask shape does not match (|V|, K)")
        if not mask.any(axis=1).all():
            raise ValueError("every word needs at least one active sense")
    if config.epochs == 0:
        return params

    ids = read_token_ids(corpus_path, vocab)
    table = build_negative_table(vocab)
    keep = keep_probabilities(vocab, config.subsample)

    if threads <= 1:
        _train_shard(ids, params, mask, table, keep, config, rng, progress_sink, 0.0, 1.0)
        return params

    import threading

    shards = np.array_split(ids, threads)
    workers = []
    for t, shard in enumerate(shards):
        wrng = np.random.default_rng(config.seed + 1000003 * (t + 1))
        workers.append(
            threading.Thread(
                target=_train_shard,
                args=(shard, params, mask, table, keep, config, wrng,
                      progress_sink if t == 0 else None, 0.0, 1.0),
            )
        )
    for w in workers:
        w.start()
    for w in workers:
        w.join()
    return params
