"""Second-order factorization machine over sparse latent-feature encodings.

The model is the standard FM regression form

    y(x) = w0 + sum_j w_j x_j + sum_{j<j'} <V_j, V_j'> x_j x_j'

evaluated in time linear in the nonzeros via the identity

    sum_{j<j'} <V_j,V_j'> x_j x_j'
        = 1/2 sum_f [ (sum_j V_jf x_j)^2 - sum_j V_jf^2 x_j^2 ].

Feature vectors concatenate contiguous blocks: user one-hot, item one-hot,
then optional real-valued latent blocks (user topic proportions, item topic
proportions or item embedding components).  With that encoding the FM bias
and linear weights play the roles of the global/user/item biases and
per-latent weights of the factorization formulas this package realizes, and
the factor rows play the latent vectors.  Explicit term-by-term evaluators
of those formulas are provided as test oracles, together with an O(nnz^2)
pairwise predictor.

Training is plain SGD on squared loss with per-group L2, one seeded-shuffle
pass per epoch.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from numba import njit

from .corpus import Dataset
from .errors import ParseError, TrainingDiverged, ValidationError

VARIANTS = ("baseline", "topic", "vector")


@dataclass(frozen=True)
class FeatureLayout:
    """Block layout mapping (user, item, latent features) to feature indices.

    Blocks are contiguous and ordered: users, items, user topics, item
    latents (topic proportions or embedding components).
    """

    n_users: int
    n_items: int
    k_user_topics: int = 0
    k_item_latents: int = 0
    variant: str = "baseline"

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ValidationError(f"unknown variant {self.variant!r}")
        if self.variant == "baseline" and (self.k_user_topics or self.k_item_latents):
            raise ValidationError("baseline layout takes no latent blocks")
        if self.variant == "vector" and self.k_user_topics:
            raise ValidationError("vector layout has no user-topic block")

    @property
    def item_offset(self) -> int:
        return self.n_users

    @property
    def user_topic_offset(self) -> int:
        return self.n_users + self.n_items

    @property
    def item_latent_offset(self) -> int:
        return self.n_users + self.n_items + self.k_user_topics

    @property
    def dim(self) -> int:
        return (self.n_users + self.n_items
                + self.k_user_topics + self.k_item_latents)


@dataclass(frozen=True)
class SparseFeatureVector:
    """Sorted sparse vector: (index, value) entries with strictly increasing indices."""

    entries: tuple[tuple[int, float], ...]

    def __post_init__(self):
        last = -1
        for idx, val in self.entries:
            if idx <= last:
                raise ValidationError("indices must be strictly increasing")
            if not np.isfinite(val):
                raise ValidationError("feature values must be finite")
            last = idx

    def arrays(self) -> tuple[np.ndarray, np.ndarray]:
        if not self.entries:
            return np.empty(0, dtype=np.int64), np.empty(0)
        idx, val = zip(*self.entries)
        return np.asarray(idx, dtype=np.int64), np.asarray(val, dtype=np.float64)


@dataclass
class FMModel:
    """Global bias, linear weights, and factor matrix over a feature layout.

    `layout` is None for models trained on ad-hoc feature spaces; such
    models predict fine but cannot be serialized or fed to the explicit
    block-structured evaluators.
    """

    w0: float
    w: np.ndarray        # (dim,)
    V: np.ndarray        # (dim, rank)
    rank: int
    layout: FeatureLayout | None = None


@dataclass(frozen=True)
class TrainConfig:
    # reg 0.1 keeps the test-RMSE curve flat out to 300 epochs at the
    # 100k-rating scale; weaker settings overfit well before that
    rank: int = 8
    lr: float = 0.01
    reg_w0: float = 0.1
    reg_w: float = 0.1
    reg_v: float = 0.1
    epochs: int = 300
    init_sigma: float = 0.1
    seed: int = 0
    clamp: bool = True

    def __post_init__(self):
        if self.rank < 1:
            raise ValidationError("rank must be >= 1")
        if self.lr < 0:  # lr=0 is the degenerate identity pass
            raise ValidationError("lr must be non-negative")
        if min(self.reg_w0, self.reg_w, self.reg_v) < 0:
            raise ValidationError("regularization must be non-negative")
        if self.epochs < 0:
            raise ValidationError("epochs must be >= 0")


# ---------------------------------------------------------------------------
# feature encoders

def _check_index(name: str, idx: int | None, bound: int) -> None:
    if idx is not None and not 0 <= idx < bound:
        raise ValidationError(f"{name} index {idx} out of range [0, {bound})")


def _latent_entries(values, offset: int, k: int, name: str) -> list[tuple[int, float]]:
    if values is None:
        return []
    if len(values) != k:
        raise ValidationError(
            f"{name} has length {len(values)}, layout expects {k}")
    return [(offset + j, float(v)) for j, v in enumerate(values) if v != 0.0]


def encode_baseline(u: int | None, i: int | None,
                    layout: FeatureLayout) -> SparseFeatureVector:
    """One-hot user and item.  Pass None for a cold (unseen-in-train) side."""
    _check_index("user", u, layout.n_users)
    _check_index("item", i, layout.n_items)
    entries = []
    if u is not None:
        entries.append((u, 1.0))
    if i is not None:
        entries.append((layout.item_offset + i, 1.0))
    return SparseFeatureVector(tuple(entries))


def encode_topic(u: int | None, i: int | None, theta_u, theta_i,
                 layout: FeatureLayout) -> SparseFeatureVector:
    """One-hot ids plus topic-proportion blocks; exact zeros are omitted."""
    _check_index("user", u, layout.n_users)
    _check_index("item", i, layout.n_items)
    entries = []
    if u is not None:
        entries.append((u, 1.0))
    if i is not None:
        entries.append((layout.item_offset + i, 1.0))
    entries += _latent_entries(theta_u, layout.user_topic_offset,
                               layout.k_user_topics, "theta_u")
    entries += _latent_entries(theta_i, layout.item_latent_offset,
                               layout.k_item_latents, "theta_i")
    return SparseFeatureVector(tuple(entries))


def encode_vector(u: int | None, i: int | None, v_i,
                  layout: FeatureLayout) -> SparseFeatureVector:
    """One-hot ids plus the item's embedding components, signs preserved."""
    _check_index("user", u, layout.n_users)
    _check_index("item", i, layout.n_items)
    entries = []
    if u is not None:
        entries.append((u, 1.0))
    if i is not None:
        entries.append((layout.item_offset + i, 1.0))
    entries += _latent_entries(v_i, layout.item_latent_offset,
                               layout.k_item_latents, "v_i")
    return SparseFeatureVector(tuple(entries))


# ---------------------------------------------------------------------------
# prediction

def fm_predict(model: FMModel, x: SparseFeatureVector) -> float:
    """Linear-time prediction via the per-factor sum identity."""
    idx, val = x.arrays()
    if len(idx) and idx[-1] >= len(model.w):
        raise ValidationError("feature index outside model dimension")
    rows = model.V[idx]
    s = rows.T @ val
    sq = (rows ** 2).T @ (val ** 2)
    return float(model.w0 + model.w[idx] @ val + 0.5 * (s @ s - sq.sum()))


def fm_predict_naive(model: FMModel, x: SparseFeatureVector) -> float:
    """O(nnz^2) reference: explicit double loop over feature pairs."""
    entries = x.entries
    acc = model.w0
    for idx, val in entries:
        acc += model.w[idx] * val
    for a in range(len(entries)):
        ja, xa = entries[a]
        for b in range(a + 1, len(entries)):
            jb, xb = entries[b]
            acc += float(model.V[ja] @ model.V[jb]) * xa * xb
    return float(acc)


# ---------------------------------------------------------------------------
# explicit term-by-term evaluators (test oracles; parameters alias the model
# arrays: global bias = w0, user/item biases = linear weights at the one-hot
# blocks, latent-weight/linear terms at the latent blocks, factor rows = V)

def explicit_topic_prediction(model: FMModel, u: int, i: int, theta_u, theta_i,
                              include_id_cross: bool = True) -> float:
    """Term-by-term prediction with user and item topic proportions.

    Sums global/user/item biases, the user-item factor product, linear topic
    terms, and all pairwise topic interactions (user-user, item-item,
    user-item).  `include_id_cross` adds the id-vs-topic interactions that
    the one-hot encoding necessarily produces; with it the result equals
    `fm_predict` over `encode_topic` exactly.
    """
    lay = model.layout
    w, V = model.w, model.V
    k_u, k_i = lay.k_user_topics, lay.k_item_latents
    to_u, to_i = lay.user_topic_offset, lay.item_latent_offset
    acc = model.w0 + w[u] + w[lay.item_offset + i]
    acc += float(V[u] @ V[lay.item_offset + i])
    for k in range(k_u):
        acc += theta_u[k] * w[to_u + k]
    for l in range(k_i):
        acc += theta_i[l] * w[to_i + l]
    for k in range(k_u):
        for l in range(k + 1, k_u):
            acc += theta_u[k] * theta_u[l] * float(V[to_u + k] @ V[to_u + l])
    for k in range(k_i):
        for l in range(k + 1, k_i):
            acc += theta_i[k] * theta_i[l] * float(V[to_i + k] @ V[to_i + l])
    for k in range(k_u):
        for l in range(k_i):
            acc += theta_u[k] * theta_i[l] * float(V[to_u + k] @ V[to_i + l])
    if include_id_cross:
        acc += topic_id_cross(model, u, i, theta_u, theta_i)
    return float(acc)


def topic_id_cross(model: FMModel, u: int, i: int, theta_u, theta_i) -> float:
    """Interactions of the user/item one-hots with the topic blocks."""
    lay = model.layout
    V = model.V
    ids = V[u] + V[lay.item_offset + i]
    acc = 0.0
    for k in range(lay.k_user_topics):
        acc += theta_u[k] * float(ids @ V[lay.user_topic_offset + k])
    for l in range(lay.k_item_latents):
        acc += theta_i[l] * float(ids @ V[lay.item_latent_offset + l])
    return acc


def explicit_vector_prediction(model: FMModel, u: int, i: int, v_i) -> float:
    """Term-by-term prediction with an item embedding as features.

    Biases, user-item factor product, linear embedding terms, and pairwise
    interactions among embedding components.  The encoding additionally
    produces id-vs-embedding interactions (see `vector_id_cross`); this
    evaluator deliberately excludes them, so it matches `fm_predict` over
    `encode_vector` exactly when the one-hot factor rows are orthogonal to
    the embedding-block rows.
    """
    lay = model.layout
    w, V = model.w, model.V
    k_i = lay.k_item_latents
    off = lay.item_latent_offset
    acc = model.w0 + w[u] + w[lay.item_offset + i]
    acc += float(V[u] @ V[lay.item_offset + i])
    for l in range(k_i):
        acc += v_i[l] * w[off + l]
    for k in range(k_i):
        for l in range(k + 1, k_i):
            acc += v_i[k] * v_i[l] * float(V[off + k] @ V[off + l])
    return float(acc)


def vector_id_cross(model: FMModel, u: int, i: int, v_i) -> float:
    """Interactions of the user/item one-hots with the embedding block."""
    lay = model.layout
    V = model.V
    ids = V[u] + V[lay.item_offset + i]
    acc = 0.0
    for l in range(lay.k_item_latents):
        acc += v_i[l] * float(ids @ V[lay.item_latent_offset + l])
    return acc


def topic_indexed_bias_score(p_u, q_i, theta_u, theta_i, w_u, w_i) -> float:
    """Factor product plus linearly weighted topic proportions for both sides."""
    acc = 0.0
    for f in range(len(p_u)):
        acc += p_u[f] * q_i[f]
    for k in range(len(theta_u)):
        acc += theta_u[k] * w_u[k]
    for l in range(len(theta_i)):
        acc += theta_i[l] * w_i[l]
    return float(acc)


def topic_indexed_factor_score(p_u, q_i, theta_u, theta_i, e_u, e_i) -> float:
    """Factor product plus the full user-topic x item-topic interaction sum."""
    acc = 0.0
    for f in range(len(p_u)):
        acc += p_u[f] * q_i[f]
    for k in range(len(theta_u)):
        for l in range(len(theta_i)):
            dot = 0.0
            for f in range(len(e_u[k])):
                dot += e_u[k][f] * e_i[l][f]
            acc += theta_u[k] * theta_i[l] * dot
    return float(acc)


# ---------------------------------------------------------------------------
# encoded example batches (CSR) and SGD training

@dataclass
class EncodedExamples:
    """A batch of sparse feature vectors with targets, CSR-packed."""

    indptr: np.ndarray   # int64, length n+1
    indices: np.ndarray  # int32
    values: np.ndarray   # float64
    targets: np.ndarray  # float64
    scale: tuple[float, float] | None = None
    layout: FeatureLayout | None = None

    @property
    def n(self) -> int:
        return len(self.targets)

    @classmethod
    def from_pairs(cls, pairs: Sequence[tuple[SparseFeatureVector, float]],
                   scale: tuple[float, float] | None = None,
                   layout: FeatureLayout | None = None) -> "EncodedExamples":
        indptr = [0]
        indices: list[int] = []
        values: list[float] = []
        targets: list[float] = []
        for x, y in pairs:
            for idx, val in x.entries:
                indices.append(idx)
                values.append(val)
            indptr.append(len(indices))
            targets.append(float(y))
        return cls(np.asarray(indptr, dtype=np.int64),
                   np.asarray(indices, dtype=np.int32),
                   np.asarray(values, dtype=np.float64),
                   np.asarray(targets, dtype=np.float64),
                   scale, layout)

    def row(self, k: int) -> SparseFeatureVector:
        lo, hi = self.indptr[k], self.indptr[k + 1]
        return SparseFeatureVector(tuple(
            (int(j), float(v))
            for j, v in zip(self.indices[lo:hi], self.values[lo:hi])))


def encode_examples(ds: Dataset, layout: FeatureLayout,
                    warm_users: set[int], warm_items: set[int],
                    theta_u: dict[int, np.ndarray] | None = None,
                    theta_i: dict[int, np.ndarray] | None = None,
                    item_vecs: dict[int, np.ndarray] | None = None) -> EncodedExamples:
    """Encode a dataset's records under a layout.

    A user or item absent from the warm sets (never seen in training) is
    encoded cold: its one-hot entry and latent block are omitted, so the
    prediction falls back to the remaining biases.
    """
    pairs = []
    for rec in ds.records():
        u = rec.user if rec.user in warm_users else None
        i = rec.item if rec.item in warm_items else None
        if layout.variant == "baseline":
            x = encode_baseline(u, i, layout)
        elif layout.variant == "topic":
            tu = theta_u.get(rec.user) if theta_u is not None and u is not None else None
            ti = theta_i.get(rec.item) if theta_i is not None and i is not None else None
            x = encode_topic(u, i, tu, ti, layout)
        else:
            vi = item_vecs.get(rec.item) if item_vecs is not None and i is not None else None
            x = encode_vector(u, i, vi, layout)
        pairs.append((x, rec.rating))
    return EncodedExamples.from_pairs(pairs, scale=ds.scale, layout=layout)


@njit(cache=True)
def _predict_batch(indptr, indices, values, w0, w, V, out):
    rank = V.shape[1]
    s = np.empty(rank)
    for e in range(out.shape[0]):
        pred = w0
        for f in range(rank):
            s[f] = 0.0
        for pos in range(indptr[e], indptr[e + 1]):
            j = indices[pos]
            x = values[pos]
            pred += w[j] * x
            for f in range(rank):
                vjf = V[j, f] * x
                s[f] += vjf
                pred -= 0.5 * vjf * vjf
        for f in range(rank):
            pred += 0.5 * s[f] * s[f]
        out[e] = pred


@njit(cache=True)
def _sgd_pass(indptr, indices, values, targets, order, w0_box, w, V,
              lr, reg_w0, reg_w, reg_v):
    rank = V.shape[1]
    s = np.empty(rank)
    for t in range(order.shape[0]):
        e = order[t]
        pred = w0_box[0]
        for f in range(rank):
            s[f] = 0.0
        for pos in range(indptr[e], indptr[e + 1]):
            j = indices[pos]
            x = values[pos]
            pred += w[j] * x
            for f in range(rank):
                vjf = V[j, f] * x
                s[f] += vjf
                pred -= 0.5 * vjf * vjf
        for f in range(rank):
            pred += 0.5 * s[f] * s[f]
        err = pred - targets[e]
        w0_box[0] -= lr * (err + reg_w0 * w0_box[0])
        for pos in range(indptr[e], indptr[e + 1]):
            j = indices[pos]
            x = values[pos]
            w[j] -= lr * (err * x + reg_w * w[j])
            for f in range(rank):
                # per-factor sums are cached from before this example's update
                g = err * (x * s[f] - V[j, f] * x * x) + reg_v * V[j, f]
                V[j, f] -= lr * g
    return w0_box[0]


def predict_batch(model: FMModel, examples: EncodedExamples,
                  clamp: bool = False) -> np.ndarray:
    out = np.empty(examples.n)
    _predict_batch(examples.indptr, examples.indices, examples.values,
                   model.w0, model.w, model.V, out)
    if clamp and examples.scale is not None:
        np.clip(out, examples.scale[0], examples.scale[1], out=out)
    return out


def init_fm(layout: FeatureLayout, config: TrainConfig,
            rng: np.random.Generator | None = None) -> FMModel:
    if rng is None:
        rng = np.random.default_rng(config.seed)
    V = rng.normal(0.0, config.init_sigma, size=(layout.dim, config.rank))
    return FMModel(0.0, np.zeros(layout.dim), V, config.rank, layout)


def _root_mean_square(residuals: np.ndarray) -> float:
    return float(np.sqrt(np.mean(residuals ** 2)))


def sgd_epoch(model: FMModel, examples: EncodedExamples, config: TrainConfig,
              rng: np.random.Generator,
              epoch: int | None = None) -> tuple[FMModel, float]:
    """One seeded-shuffle pass of per-example SGD; returns post-epoch train RMSE."""
    if examples.n == 0:
        raise ValidationError("no training examples")
    order = rng.permutation(examples.n)
    w0_box = np.array([model.w0])
    model.w0 = float(_sgd_pass(examples.indptr, examples.indices,
                               examples.values, examples.targets, order,
                               w0_box, model.w, model.V,
                               config.lr, config.reg_w0, config.reg_w,
                               config.reg_v))
    if not (np.isfinite(model.w0) and np.isfinite(model.w).all()
            and np.isfinite(model.V).all()):
        where = f" at epoch {epoch}" if epoch is not None else ""
        raise TrainingDiverged(f"non-finite parameters{where}; lower lr")
    preds = predict_batch(model, examples, clamp=config.clamp)
    return model, _root_mean_square(preds - examples.targets)


def train_fm(train: EncodedExamples, test: EncodedExamples, config: TrainConfig,
             on_epoch: Callable[[int, float, float], None] | None = None,
             ) -> tuple[FMModel, list[tuple[int, float, float]]]:
    """Train from scratch; returns the model and per-epoch (epoch, train, test) RMSE.

    The bias starts at the mean training rating, linear weights at zero, and
    factors at seeded Normal(0, init_sigma^2) draws.  Predictions are clamped
    to the rating scale during evaluation only, when enabled.
    """
    if train.n == 0:
        raise ValidationError("no training examples")
    rng = np.random.default_rng(config.seed)
    layout = train.layout
    if layout is not None:
        dim = layout.dim
    else:
        dim = 0
        if len(train.indices):
            dim = int(train.indices.max()) + 1
        if len(test.indices):
            dim = max(dim, int(test.indices.max()) + 1)
    model = FMModel(float(train.targets.mean()),
                    np.zeros(dim),
                    rng.normal(0.0, config.init_sigma, size=(dim, config.rank)),
                    config.rank, layout)
    metrics: list[tuple[int, float, float]] = []
    for epoch in range(1, config.epochs + 1):
        _, train_rmse = sgd_epoch(model, train, config, rng, epoch=epoch)
        if test.n:
            test_preds = predict_batch(model, test, clamp=config.clamp)
            test_rmse = _root_mean_square(test_preds - test.targets)
        else:
            test_rmse = float("nan")
        metrics.append((epoch, train_rmse, test_rmse))
        if on_epoch is not None:
            on_epoch(epoch, train_rmse, test_rmse)
    return model, metrics


# ---------------------------------------------------------------------------
# per-example objective and analytic gradients (finite-difference oracle hooks)

def example_loss(model: FMModel, x: SparseFeatureVector, y: float,
                 config: TrainConfig) -> float:
    """The objective one SGD step descends: squared error plus L2 on touched parameters."""
    pred = fm_predict(model, x)
    idx, _ = x.arrays()
    reg = config.reg_w0 * model.w0 ** 2
    reg += config.reg_w * float(model.w[idx] @ model.w[idx])
    reg += config.reg_v * float((model.V[idx] ** 2).sum())
    return 0.5 * (pred - y) ** 2 + 0.5 * reg


def example_grads(model: FMModel, x: SparseFeatureVector, y: float,
                  config: TrainConfig):
    """Analytic gradient of example_loss: (g_w0, {j: g_w}, {j: g_V row})."""
    idx, val = x.arrays()
    err = fm_predict(model, x) - y
    s = model.V[idx].T @ val
    g_w0 = err + config.reg_w0 * model.w0
    g_w = {}
    g_v = {}
    for j, xj in zip(idx, val):
        g_w[int(j)] = err * xj + config.reg_w * model.w[j]
        g_v[int(j)] = err * (xj * s - model.V[j] * xj * xj) + config.reg_v * model.V[j]
    return g_w0, g_w, g_v


# ---------------------------------------------------------------------------
# serialization

def save_fm(model: FMModel, path) -> None:
    lay = model.layout
    if lay is None:
        raise ValidationError("model has no feature layout; cannot serialize")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("fm-model v1\n")
        fh.write(f"layout {lay.n_users} {lay.n_items} "
                 f"{lay.k_user_topics} {lay.k_item_latents} {lay.variant}\n")
        fh.write(f"rank {model.rank}\n")
        fh.write(repr(float(model.w0)) + "\n")
        for v in model.w:
            fh.write(repr(float(v)) + "\n")
        for row in model.V:
            fh.write(" ".join(repr(float(v)) for v in row) + "\n")


def load_fm(path) -> FMModel:
    with open(path, "r", encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    try:
        if lines[0] != "fm-model v1":
            raise ParseError(path, 1, f"bad header {lines[0]!r}")
        lay_parts = lines[1].split()
        if len(lay_parts) != 6 or lay_parts[0] != "layout":
            raise ParseError(path, 2, "bad layout line")
        layout = FeatureLayout(int(lay_parts[1]), int(lay_parts[2]),
                               int(lay_parts[3]), int(lay_parts[4]),
                               lay_parts[5])
        rank_parts = lines[2].split()
        if len(rank_parts) != 2 or rank_parts[0] != "rank":
            raise ParseError(path, 3, "bad rank line")
        rank = int(rank_parts[1])
        dim = layout.dim
        w0 = float(lines[3])
        w = np.asarray([float(v) for v in lines[4:4 + dim]])
        V = np.asarray([[float(v) for v in line.split()]
                        for line in lines[4 + dim:4 + 2 * dim]])
        if len(w) != dim or V.shape != (dim, rank):
            raise ParseError(path, 4, "truncated parameter block")
    except (IndexError, ValueError):
        raise ParseError(path, 1, "malformed model file") from None
    return FMModel(w0, w, V, rank, layout)
