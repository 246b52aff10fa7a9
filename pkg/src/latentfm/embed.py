"""Skip-gram item embeddings over time-ordered watch histories.

Each user history is a "sentence" of item ids.  For every (center, context)
pair inside the window we take one gradient step on the negative-sampling
objective

    loss = -log sig(v_c . u_o) - sum_n log sig(-v_c . u_n)

updating the center's input vector and the output vectors of the context and
the sampled negatives.  Negatives are drawn from the unigram distribution
raised to the 0.75 power.  Only item (input) vectors are exported; user
vectors are never trained.

Training is single-threaded and reproducible: all random draws (init,
negative samples) come from one numpy Generator, and the jitted inner loop
consumes precomputed arrays only.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np
from numba import njit

from .errors import ParseError, ValidationError


@dataclass(frozen=True)
class SkipGramConfig:
    dim: int = 8
    window: int = 3
    negatives: int = 5
    epochs: int = 5
    lr: float = 0.025
    seed: int = 0

    def __post_init__(self):
        if self.dim < 1 or self.window < 1 or self.negatives < 1:
            raise ValidationError("dim, window, negatives must be >= 1")
        if self.lr <= 0:
            raise ValidationError("lr must be positive")
        if self.epochs < 1:
            raise ValidationError("epochs must be >= 1")


@dataclass
class SkipGramModel:
    in_vecs: np.ndarray    # (M, dim) item embeddings; these are exported
    out_vecs: np.ndarray   # (M, dim) context embeddings
    noise_dist: np.ndarray  # unigram^0.75 distribution over items, sums to 1
    counts: np.ndarray      # raw item occurrence counts in the corpus

    @property
    def n_items(self) -> int:
        return self.in_vecs.shape[0]

    @property
    def dim(self) -> int:
        return self.in_vecs.shape[1]


def generate_pairs(items: Sequence[int], window: int) -> list[tuple[int, int]]:
    """(center, context) pairs for one history, t ascending then offset ascending."""
    if window < 1:
        raise ValidationError("window must be >= 1")
    n = len(items)
    pairs = []
    for t in range(n):
        for j in range(-window, window + 1):
            if j == 0:
                continue
            s = t + j
            if 0 <= s < n:
                pairs.append((items[t], items[s]))
    return pairs


def _corpus_pairs(histories: list[Sequence[int]], window: int):
    centers: list[int] = []
    contexts: list[int] = []
    for items in histories:
        for c, o in generate_pairs(items, window):
            centers.append(c)
            contexts.append(o)
    return (np.asarray(centers, dtype=np.int32),
            np.asarray(contexts, dtype=np.int32))


def noise_distribution(counts: np.ndarray) -> np.ndarray:
    """Unigram distribution raised to the 0.75 power, renormalized."""
    weights = counts.astype(np.float64) ** 0.75
    total = weights.sum()
    if total <= 0:
        raise ValidationError("cannot build a noise distribution from zero counts")
    return weights / total


def init_model(n_items: int, config: SkipGramConfig,
               rng: np.random.Generator) -> SkipGramModel:
    """Input vectors uniform in [-0.5/dim, 0.5/dim], output vectors zero."""
    in_vecs = (rng.random((n_items, config.dim)) - 0.5) / config.dim
    out_vecs = np.zeros((n_items, config.dim))
    return SkipGramModel(in_vecs, out_vecs,
                         np.full(n_items, 1.0 / max(n_items, 1)),
                         np.zeros(n_items, dtype=np.int64))


def sample_negatives(noise_dist: np.ndarray, size: int,
                     rng: np.random.Generator) -> np.ndarray:
    cum = np.cumsum(noise_dist)
    cum[-1] = 1.0
    return np.searchsorted(cum, rng.random(size), side="right").astype(np.int32)


def pair_loss(in_vecs: np.ndarray, out_vecs: np.ndarray, center: int,
              context: int, negatives: Sequence[int]) -> float:
    """Negative-sampling loss of one pair with the negatives fixed."""
    vc = in_vecs[center]
    loss = -np.log(_sigmoid(vc @ out_vecs[context]))
    for n in negatives:
        loss -= np.log(_sigmoid(-(vc @ out_vecs[n])))
    return float(loss)


def pair_grads(in_vecs: np.ndarray, out_vecs: np.ndarray, center: int,
               context: int, negatives: Sequence[int]):
    """Gradients of pair_loss at the current point.

    Returns (grad_center, {output_row: grad}); gradients of repeated output
    rows are accumulated, matching the simultaneous update applied by a step.
    """
    vc = in_vecs[center]
    g_center = np.zeros_like(vc)
    g_out: dict[int, np.ndarray] = {}
    s = _sigmoid(vc @ out_vecs[context]) - 1.0
    g_center += s * out_vecs[context]
    g_out[context] = s * vc.copy()
    for n in negatives:
        s = _sigmoid(vc @ out_vecs[n])
        g_center += s * out_vecs[n]
        g = g_out.setdefault(int(n), np.zeros_like(vc))
        g += s * vc
    return g_center, g_out


def sgns_step(model: SkipGramModel, pair: tuple[int, int],
              config: SkipGramConfig, rng: np.random.Generator,
              lr: float | None = None,
              negatives: Sequence[int] | None = None) -> SkipGramModel:
    """One in-place gradient step on a (center, context) pair.

    Negatives are drawn from the model's noise distribution unless given
    explicitly.  All gradients are evaluated at the current parameters
    before any update is applied.
    """
    center, context = pair
    if negatives is None:
        negatives = sample_negatives(model.noise_dist, config.negatives, rng)
    step = config.lr if lr is None else lr
    g_center, g_out = pair_grads(model.in_vecs, model.out_vecs,
                                 center, context, negatives)
    for row, g in g_out.items():
        model.out_vecs[row] -= step * g
    model.in_vecs[center] -= step * g_center
    return model


def _sigmoid(x):
    return 1.0 / (1.0 + np.exp(-x))


@njit(cache=True)
def _sgns_epoch(in_vecs, out_vecs, centers, contexts, negs, n_neg,
                lr_start, lr_end, step_offset, total_steps):
    dim = in_vecs.shape[1]
    scores = np.empty(n_neg + 1)
    g_center = np.empty(dim)
    for p in range(centers.shape[0]):
        t = step_offset + p
        frac = t / (total_steps - 1) if total_steps > 1 else 0.0
        lr = lr_start + (lr_end - lr_start) * frac
        c = centers[p]
        o = contexts[p]
        # scores at the current point, before any row is touched
        s = 0.0
        for f in range(dim):
            s += in_vecs[c, f] * out_vecs[o, f]
        scores[0] = 1.0 / (1.0 + np.exp(-s))
        for m in range(n_neg):
            row = negs[p * n_neg + m]
            s = 0.0
            for f in range(dim):
                s += in_vecs[c, f] * out_vecs[row, f]
            scores[m + 1] = 1.0 / (1.0 + np.exp(-s))
        # center gradient reads the untouched output rows
        g0 = scores[0] - 1.0
        for f in range(dim):
            g_center[f] = g0 * out_vecs[o, f]
        for m in range(n_neg):
            row = negs[p * n_neg + m]
            for f in range(dim):
                g_center[f] += scores[m + 1] * out_vecs[row, f]
        # apply updates
        for f in range(dim):
            out_vecs[o, f] -= lr * g0 * in_vecs[c, f]
        for m in range(n_neg):
            row = negs[p * n_neg + m]
            for f in range(dim):
                out_vecs[row, f] -= lr * scores[m + 1] * in_vecs[c, f]
        for f in range(dim):
            in_vecs[c, f] -= lr * g_center[f]


def train_skipgram(histories: list[Sequence[int]], config: SkipGramConfig,
                   n_items: int) -> SkipGramModel:
    """Train item vectors over all histories; deterministic under the seed.

    Pairs are visited in history order each epoch; the learning rate decays
    linearly from lr to lr/100 over the total number of steps.
    """
    if not histories or all(len(h) == 0 for h in histories):
        raise ValidationError("empty corpus")
    counts = np.zeros(n_items, dtype=np.int64)
    for h in histories:
        for item in h:
            if not 0 <= item < n_items:
                raise ValidationError(f"item id {item} outside vocabulary")
            counts[item] += 1

    rng = np.random.default_rng(config.seed)
    model = init_model(n_items, config, rng)
    model.counts = counts
    model.noise_dist = noise_distribution(counts)

    centers, contexts = _corpus_pairs(histories, config.window)
    n_pairs = len(centers)
    if n_pairs == 0:
        return model  # nothing to train on (all singleton histories)
    total_steps = config.epochs * n_pairs
    lr_end = config.lr / 100.0
    for epoch in range(config.epochs):
        negs = sample_negatives(model.noise_dist,
                                n_pairs * config.negatives, rng)
        _sgns_epoch(model.in_vecs, model.out_vecs, centers, contexts, negs,
                    config.negatives, config.lr, lr_end,
                    epoch * n_pairs, total_steps)
    if not np.isfinite(model.in_vecs).all() or not np.isfinite(model.out_vecs).all():
        raise ValidationError("non-finite embedding after training")
    return model


def write_item_vectors(model: SkipGramModel, path) -> None:
    """word2vec text format: header `M dim`, then `item_id v_1 ... v_dim`.

    Only items that occur in the corpus are exported.
    """
    rows = np.flatnonzero(model.counts > 0)
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"{len(rows)} {model.dim}\n")
        for i in rows:
            vec = " ".join(repr(float(v)) for v in model.in_vecs[i])
            fh.write(f"{int(i)} {vec}\n")


def read_item_vectors(path) -> dict[int, np.ndarray]:
    out: dict[int, np.ndarray] = {}
    with open(path, "r", encoding="utf-8") as fh:
        header = fh.readline().split()
        if len(header) != 2:
            raise ParseError(path, 1, "bad vector-file header")
        for line in fh:
            if not line.strip():
                continue
            parts = line.split()
            out[int(parts[0])] = np.asarray([float(v) for v in parts[1:]])
    return out
