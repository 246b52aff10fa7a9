"""Collapsed Gibbs sampling of topic proportions over history documents.

Documents are lists of integer tokens (item ids for user histories, user ids
for item histories).  The sampler keeps per-token topic assignments plus the
usual count matrices and resamples every token once per sweep from

    P(z = k | rest)  ∝  (n_dk + alpha) * (n_kw + beta) / (n_k + V * beta)

where the counts exclude the token being resampled.  Topic proportions are
read off the final state as (n_dk + alpha) / (n_d + K * alpha).

All randomness comes from a numpy Generator owned by the state: each sweep
consumes exactly one uniform per token, so runs are reproducible bit for bit
under a fixed seed.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numba import njit

from .errors import ValidationError


@dataclass(frozen=True)
class LdaConfig:
    k: int
    alpha: float = 0.5
    beta: float = 0.1
    iterations: int = 300
    seed: int = 0

    def __post_init__(self):
        if self.k < 1:
            raise ValidationError("k must be >= 1")
        if self.alpha <= 0 or self.beta <= 0:
            raise ValidationError("alpha and beta must be positive")
        if self.iterations < 1:
            raise ValidationError("iterations must be >= 1")


@dataclass
class LdaState:
    """Token-level assignments and the count matrices derived from them."""

    doc_of_token: np.ndarray   # int32, document index per token
    word_of_token: np.ndarray  # int32, vocabulary index per token
    z: np.ndarray              # int32, topic per token
    n_dk: np.ndarray           # (D, K) doc-topic counts
    n_kw: np.ndarray           # (K, V) topic-word counts
    n_k: np.ndarray            # (K,) topic totals
    n_d: np.ndarray            # (D,) document lengths
    n_vocab: int
    rng: np.random.Generator

    @property
    def n_docs(self) -> int:
        return len(self.n_d)

    @property
    def n_tokens(self) -> int:
        return len(self.z)

    def validate(self) -> None:
        """Check count consistency; cheap enough to run after every sweep."""
        if (self.n_dk < 0).any() or (self.n_kw < 0).any() or (self.n_k < 0).any():
            raise ValidationError("negative count")
        if not np.array_equal(self.n_dk.sum(axis=1), self.n_d):
            raise ValidationError("doc-topic counts do not sum to doc lengths")
        if not np.array_equal(self.n_kw.sum(axis=1), self.n_k):
            raise ValidationError("topic-word counts do not sum to topic totals")
        if int(self.n_k.sum()) != self.n_tokens:
            raise ValidationError("topic totals do not sum to token count")


def init_assignments(docs: list[list[int]], config: LdaConfig,
                     n_vocab: int | None = None) -> LdaState:
    """Assign every token a uniformly random topic and build the count matrices."""
    if not docs:
        raise ValidationError("empty corpus")
    doc_of = []
    word_of = []
    for d, doc in enumerate(docs):
        for w in doc:
            doc_of.append(d)
            word_of.append(w)
    if n_vocab is None:
        if not word_of:
            raise ValidationError("empty corpus (no tokens and no n_vocab)")
        n_vocab = max(word_of) + 1
    if n_vocab < 1:
        raise ValidationError("vocabulary must be non-empty")
    if word_of and max(word_of) >= n_vocab:
        raise ValidationError("token id outside vocabulary")

    doc_of = np.asarray(doc_of, dtype=np.int32)
    word_of = np.asarray(word_of, dtype=np.int32)
    rng = np.random.default_rng(config.seed)
    z = rng.integers(0, config.k, size=len(word_of), dtype=np.int32)

    n_dk = np.zeros((len(docs), config.k), dtype=np.int64)
    n_kw = np.zeros((config.k, n_vocab), dtype=np.int64)
    np.add.at(n_dk, (doc_of, z), 1)
    np.add.at(n_kw, (z, word_of), 1)
    state = LdaState(
        doc_of_token=doc_of,
        word_of_token=word_of,
        z=z,
        n_dk=n_dk,
        n_kw=n_kw,
        n_k=n_kw.sum(axis=1),
        n_d=n_dk.sum(axis=1),
        n_vocab=n_vocab,
        rng=rng,
    )
    state.validate()
    return state


@njit(cache=True)
def _sweep(doc_of, word_of, z, n_dk, n_kw, n_k, alpha, beta, uniforms):
    n_topics = n_k.shape[0]
    v_beta = n_kw.shape[1] * beta
    cum = np.empty(n_topics)
    for t in range(doc_of.shape[0]):
        d = doc_of[t]
        w = word_of[t]
        old = z[t]
        n_dk[d, old] -= 1
        n_kw[old, w] -= 1
        n_k[old] -= 1
        total = 0.0
        for k in range(n_topics):
            total += (n_dk[d, k] + alpha) * (n_kw[k, w] + beta) / (n_k[k] + v_beta)
            cum[k] = total
        r = uniforms[t] * total
        new = 0
        while new < n_topics - 1 and r >= cum[new]:
            new += 1
        z[t] = new
        n_dk[d, new] += 1
        n_kw[new, w] += 1
        n_k[new] += 1


def gibbs_sweep(state: LdaState, config: LdaConfig) -> LdaState:
    """Resample every token once, in document order then token order."""
    uniforms = state.rng.random(state.n_tokens)
    _sweep(state.doc_of_token, state.word_of_token, state.z,
           state.n_dk, state.n_kw, state.n_k,
           float(config.alpha), float(config.beta), uniforms)
    return state


def estimate_theta(state: LdaState, config: LdaConfig) -> np.ndarray:
    """Smoothed topic proportions per document, shape (D, K), rows sum to 1."""
    denom = state.n_d.astype(np.float64) + config.k * config.alpha
    return (state.n_dk + config.alpha) / denom[:, None]


def train_lda(docs: list[list[int]], config: LdaConfig,
              n_vocab: int | None = None) -> np.ndarray:
    """Initialize, run `config.iterations` sweeps, and return theta rows."""
    state = init_assignments(docs, config, n_vocab)
    for _ in range(config.iterations):
        gibbs_sweep(state, config)
        if __debug__:
            state.validate()
    return estimate_theta(state, config)


def write_topic_vectors(doc_ids, thetas: np.ndarray, path) -> None:
    """One line per document: `doc_id theta_1 ... theta_K`, full precision."""
    with open(path, "w", encoding="utf-8") as fh:
        for doc_id, row in zip(doc_ids, thetas):
            fh.write(f"{doc_id} " + " ".join(repr(float(v)) for v in row) + "\n")


def read_topic_vectors(path) -> dict[int, np.ndarray]:
    out: dict[int, np.ndarray] = {}
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            if not line.strip():
                continue
            parts = line.split()
            out[int(parts[0])] = np.asarray([float(v) for v in parts[1:]])
    return out
