"""Config-driven experiment runner: split once, train each variant, emit metrics.

Latent features are always trained on the train split only, once per
variant (not per FM epoch).  Variants:

    baseline   user and item one-hots only
    topic_K    plus K-dimensional topic proportions from collapsed Gibbs
               sampling of user and/or item history documents
    vector_K   plus K-dimensional item embeddings from skip-gram training
               over user histories

Each FM epoch produces one MetricsRecord; wall_seconds is the cumulative
time since the variant started (latent-feature training included), so the
series doubles as an RMSE-versus-time convergence trace.
"""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import corpus, embed, fm, lda
from .errors import ConfigError, ValidationError
from .metrics import MetricsRecord

log = logging.getLogger("latentfm")

TOPIC_SIDES = ("both", "user", "item")


def parse_variant(token: str) -> tuple[str, int]:
    """`baseline`, `topic_<K>`, or `vector_<K>` -> (kind, latent dim)."""
    if token == "baseline":
        return "baseline", 0
    kind, _, k_str = token.partition("_")
    if kind in ("topic", "vector") and k_str.isdigit() and int(k_str) >= 1:
        return kind, int(k_str)
    raise ConfigError(f"bad variant {token!r}; expected baseline, "
                      f"topic_<K>, or vector_<K>")


@dataclass
class ExperimentConfig:
    dataset_path: str
    dataset_format: str = "tsv"
    scale: tuple[float, float] = (1.0, 5.0)
    split_policy: str = "random"
    split_fraction: float = 0.1
    split_seed: int = 42
    variants: list[str] = field(default_factory=lambda: ["baseline"])
    topic_sides: str = "both"
    lda_alpha: float = 0.5
    lda_beta: float = 0.1
    lda_iterations: int = 300
    lda_seed: int = 42
    embed_window: int = 3
    embed_negatives: int = 5
    embed_epochs: int = 5
    embed_lr: float = 0.025
    embed_seed: int = 42
    fm: fm.TrainConfig = field(default_factory=fm.TrainConfig)

    def __post_init__(self):
        if not self.variants:
            raise ConfigError("at least one variant must be selected")
        for token in self.variants:
            parse_variant(token)
        if self.topic_sides not in TOPIC_SIDES:
            raise ConfigError(f"topic_sides must be one of {TOPIC_SIDES}")


class _LatentCache:
    """Latent features computed once per (kind, side, k) within a run."""

    def __init__(self):
        self._store = {}

    def get(self, key, compute):
        if key not in self._store:
            self._store[key] = compute()
        return self._store[key]


def _assert_no_leakage(train: corpus.Dataset, test: corpus.Dataset) -> None:
    train_pairs = set(zip(train.users.tolist(), train.items.tolist()))
    test_pairs = set(zip(test.users.tolist(), test.items.tolist()))
    if train_pairs & test_pairs:
        raise ValidationError("train and test splits share (user, item) pairs")


def _train_theta(docs_tokens: list[list[int]], k: int, n_vocab: int,
                 config: ExperimentConfig, doc_ids: list[int]) -> dict[int, np.ndarray]:
    cfg = lda.LdaConfig(k=k, alpha=config.lda_alpha, beta=config.lda_beta,
                        iterations=config.lda_iterations, seed=config.lda_seed)
    thetas = lda.train_lda(docs_tokens, cfg, n_vocab=n_vocab)
    return {doc_id: thetas[d] for d, doc_id in enumerate(doc_ids)}


def run_experiment(config: ExperimentConfig,
                   on_record: Callable[[MetricsRecord], None] | None = None,
                   ) -> list[MetricsRecord]:
    """Run every configured variant; returns (and streams) per-epoch records."""
    ds = corpus.load_ratings(config.dataset_path, config.dataset_format,
                             config.scale)
    log.info("loaded %s: %d users, %d items, %d records",
             config.dataset_path, ds.n_users, ds.n_items, ds.n_records)
    train, test = corpus.split(ds, config.split_policy, config.split_fraction,
                               config.split_seed)
    _assert_no_leakage(train, test)
    log.info("split %s/%.2f: %d train, %d test records",
             config.split_policy, config.split_fraction,
             train.n_records, test.n_records)

    user_docs = corpus.build_user_documents(train)
    item_docs = corpus.build_item_documents(train)
    warm_users = {doc.user for doc in user_docs}
    warm_items = {doc.item for doc in item_docs}

    cache = _LatentCache()
    records: list[MetricsRecord] = []
    for token in config.variants:
        kind, k = parse_variant(token)
        t0 = time.perf_counter()
        theta_u = theta_i = item_vecs = None
        if kind == "baseline":
            layout = fm.FeatureLayout(ds.n_users, ds.n_items, variant="baseline")
        elif kind == "topic":
            k_user = k if config.topic_sides in ("both", "user") else 0
            k_item = k if config.topic_sides in ("both", "item") else 0
            if k_user:
                theta_u = cache.get(("lda", "user", k), lambda: _train_theta(
                    [d.items for d in user_docs], k, ds.n_items, config,
                    [d.user for d in user_docs]))
            if k_item:
                theta_i = cache.get(("lda", "item", k), lambda: _train_theta(
                    [d.users for d in item_docs], k, ds.n_users, config,
                    [d.item for d in item_docs]))
            layout = fm.FeatureLayout(ds.n_users, ds.n_items, k_user, k_item,
                                      variant="topic")
        else:
            def _train_vecs():
                cfg = embed.SkipGramConfig(
                    dim=k, window=config.embed_window,
                    negatives=config.embed_negatives,
                    epochs=config.embed_epochs, lr=config.embed_lr,
                    seed=config.embed_seed)
                model = embed.train_skipgram(
                    [d.items for d in user_docs], cfg, ds.n_items)
                return {int(i): model.in_vecs[i]
                        for i in np.flatnonzero(model.counts > 0)}
            item_vecs = cache.get(("skipgram", k), _train_vecs)
            layout = fm.FeatureLayout(ds.n_users, ds.n_items, 0, k,
                                      variant="vector")
        log.info("variant %s: latent features ready after %.1fs",
                 token, time.perf_counter() - t0)

        enc_train = fm.encode_examples(train, layout, warm_users, warm_items,
                                       theta_u, theta_i, item_vecs)
        enc_test = fm.encode_examples(test, layout, warm_users, warm_items,
                                      theta_u, theta_i, item_vecs)

        variant_records: list[MetricsRecord] = []

        def _emit(epoch: int, train_rmse: float, test_rmse: float) -> None:
            rec = MetricsRecord(kind, k, epoch, train_rmse, test_rmse,
                                time.perf_counter() - t0)
            variant_records.append(rec)
            if on_record is not None:
                on_record(rec)
            log.info("variant %s epoch %d: train %.6f test %.6f",
                     token, epoch, train_rmse, test_rmse)

        fm.train_fm(enc_train, enc_test, config.fm, on_epoch=_emit)
        records.extend(variant_records)
    return records


def train_single_variant(token: str, train_enc: fm.EncodedExamples,
                         test_enc: fm.EncodedExamples,
                         config: fm.TrainConfig,
                         on_record: Callable[[MetricsRecord], None] | None = None,
                         ) -> tuple[fm.FMModel, list[MetricsRecord]]:
    """Train one variant on pre-encoded examples (used by the CLI stages)."""
    kind, k = parse_variant(token)
    t0 = time.perf_counter()
    records: list[MetricsRecord] = []

    def _emit(epoch: int, train_rmse: float, test_rmse: float) -> None:
        rec = MetricsRecord(kind, k, epoch, train_rmse, test_rmse,
                            time.perf_counter() - t0)
        records.append(rec)
        if on_record is not None:
            on_record(rec)
        log.info("variant %s epoch %d: train %.6f test %.6f",
                 token, epoch, train_rmse, test_rmse)

    model, _ = fm.train_fm(train_enc, test_enc, config, on_epoch=_emit)
    return model, records
