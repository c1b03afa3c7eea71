"""Sense-selection distributions: soft attention, Gumbel attention, scaled Gumbel attention."""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

GUMBEL_EPS = 1e-10


class Variant(enum.Enum):
    SASI = "sasi"
    GASI = "gasi"
    GASI_BETA = "gasi-beta"


@dataclass(frozen=True)
class AttentionMode:
    """Which sense-attention estimator to use and its knobs.

    SASI is plain soft attention (tau and beta unused). GASI is Gumbel
    attention with unscaled noise (beta forced to 1). GASI_BETA scales the
    noise by beta before the tempered softmax.
    """

    variant: Variant = Variant.GASI_BETA
    tau: float = 0.5
    beta: float = 0.4

    def __post_init__(self):
        if self.tau <= 0:
            raise ValueError("tau must be > 0")
        if self.beta < 0:
            raise ValueError("beta must be >= 0")

    @property
    def effective_beta(self) -> float:
        if self.variant is Variant.SASI:
            return 0.0
        if self.variant is Variant.GASI:
            return 1.0
        return self.beta

    @property
    def effective_tau(self) -> float:
        # SASI is an untempered softmax of the dot products.
        return 1.0 if self.variant is Variant.SASI else self.tau

    @classmethod
    def from_name(cls, name: str, tau: float = 0.5, beta: float = 0.4) -> "AttentionMode":
        return cls(variant=Variant(name), tau=tau, beta=beta)


def gumbel_noise(rng: np.random.Generator, size=None):
    """-log(-log(u)) with u ~ Uniform(0,1) clamped away from {0, 1}."""
    u = rng.random(size) if size is not None else rng.random()
    u = np.clip(u, GUMBEL_EPS, 1.0 - GUMBEL_EPS)
    return -np.log(-np.log(u))


def tempered_softmax(logits: np.ndarray, tau: float) -> np.ndarray:
    if tau <= 0:
        raise ValueError("tau must be > 0")
    z = np.asarray(logits, dtype=np.float64) / tau
    z = z - z.max()
    e = np.exp(z)
    return e / e.sum()


def _masked_softmax(logits: np.ndarray, mask) -> np.ndarray:
    """Softmax over active senses; masked entries get exactly 0 probability."""
    logits = np.asarray(logits, dtype=np.float64)
    if mask is None:
        return tempered_softmax(logits, 1.0)
    mask = np.asarray(mask, dtype=bool)
    if not mask.any():
        raise ValueError("all senses are masked")
    out = np.zeros_like(logits)
    out[mask] = tempered_softmax(logits[mask], 1.0)
    return out


def soft_attention(context_mean: np.ndarray, senses: np.ndarray, mask=None) -> np.ndarray:
    """P(s_k | w, context) = softmax_k of the context-sense dot products."""
    logits = senses @ context_mean
    return _masked_softmax(logits, mask)


def scaled_gumbel_attention(
    context_mean: np.ndarray,
    senses: np.ndarray,
    mode: AttentionMode,
    mask=None,
    rng: np.random.Generator | None = None,
    noise: np.ndarray | None = None,
) -> np.ndarray:
    """softmax((c.s_k + beta*g_k)/tau) over active senses.

    ``noise`` pins the Gumbel draws (one per sense) for reproducible checks;
    otherwise fresh noise is drawn from ``rng``. SASI ignores noise entirely.
    """
    logits = np.asarray(senses @ context_mean, dtype=np.float64)
    beta = mode.effective_beta
    if mode.variant is not Variant.SASI:
        if noise is None:
            if rng is None:
                raise ValueError("need an rng (or explicit noise) for Gumbel attention")
            noise = gumbel_noise(rng, size=logits.shape)
        logits = logits + beta * np.asarray(noise, dtype=np.float64)
    return _masked_softmax(logits / mode.effective_tau, mask)


def hard_select(context_mean: np.ndarray, senses: np.ndarray, mask=None) -> int:
    """Noiseless argmax sense; ties go to the lowest index."""
    logits = np.asarray(senses @ context_mean, dtype=np.float64)
    if mask is not None:
        mask = np.asarray(mask, dtype=bool)
        if not mask.any():
            raise ValueError("all senses are masked")
        logits = np.where(mask, logits, -np.inf)
    return int(np.argmax(logits))
