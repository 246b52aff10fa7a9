"""Command-line pipeline: prepare, topics, embed, train, evaluate, experiment.

Every subcommand is headless and deterministic under a fixed seed.  Stages
communicate through plain-text artifacts in the output directory so each
intermediate (splits, documents, topic files, vector files, models, metrics)
can be inspected and reused:

    prepare     stats.json, train/test ratings, id maps, history documents
    topics      user_topics_<K>.txt / item_topics_<K>.txt from the documents
    embed       item_vectors_<K>.txt from the user documents
    train       fm_model_<variant>.txt plus per-epoch metrics
    evaluate    prints the test RMSE of a serialized model
    experiment  the full comparison: metrics.ndjson, summary, convergence

Exit codes: 0 success, 1 runtime failure (one-line diagnostic on stderr),
2 usage error.  Verbosity via LATENTFM_LOG in {error, info, debug}.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import corpus, embed, fm, lda, metrics
from .config import SCHEMA, experiment_config, load_config, stage_seed, train_config
from .errors import ConfigError, LatentFMError
from .experiment import parse_variant, run_experiment, train_single_variant

log = logging.getLogger("latentfm")

_LOG_LEVELS = {"error": logging.ERROR, "info": logging.INFO,
               "debug": logging.DEBUG}


@dataclass
class CliInvocation:
    subcommand: str
    config_path: str | None = None
    overrides: list[str] = field(default_factory=list)
    output: str | None = None
    seed: int | None = None


def parse_cli(argv=None) -> CliInvocation:
    """Parse argv into an invocation; argparse exits with code 2 on usage errors."""
    parser = argparse.ArgumentParser(
        prog="latentfm",
        description="Rating prediction with latent-feature factorization machines.")
    sub = parser.add_subparsers(dest="subcommand", required=True)
    for name, help_text in [
        ("prepare", "load a ratings file, split it, and write history documents"),
        ("topics", "train topic proportions from prepared documents"),
        ("embed", "train item embeddings from prepared user documents"),
        ("train", "train one FM variant on the prepared split"),
        ("evaluate", "print the test RMSE of a serialized model"),
        ("experiment", "run the configured variant comparison end to end"),
    ]:
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", metavar="PATH", default=None,
                       help="flat JSON config file")
        p.add_argument("--set", metavar="KEY=VALUE", action="append",
                       default=[], dest="overrides",
                       help="override a config key (repeatable)")
        p.add_argument("--output", metavar="DIR", default=None,
                       help="output directory (overrides output.dir)")
        p.add_argument("--seed", metavar="N", type=int, default=None,
                       help="master seed (overrides seed)")
    ns = parser.parse_args(argv)
    return CliInvocation(ns.subcommand, ns.config, ns.overrides,
                         ns.output, ns.seed)


def _check_overrides(overrides: list[str]) -> None:
    for item in overrides:
        key, sep, value = item.partition("=")
        if not sep:
            raise ConfigError(f"--set expects KEY=VALUE, got {item!r}")
        if key not in SCHEMA:
            raise ConfigError(f"unknown config key {key!r}")
        parser, _ = SCHEMA[key]
        try:
            parser(value)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"bad value for {key!r}: {exc}") from None


def _out_dir(cfg: dict) -> Path:
    out = Path(cfg["output.dir"])
    out.mkdir(parents=True, exist_ok=True)
    return out


def _load_prepared_split(cfg: dict, out: Path):
    user_map = corpus.read_id_map(out / "user_map.tsv")
    item_map = corpus.read_id_map(out / "item_map.tsv")
    scale = (cfg["dataset.rating_min"], cfg["dataset.rating_max"])
    train = corpus.load_ratings(out / "train.ratings.tsv", "tsv", scale,
                                user_map=user_map, item_map=item_map)
    test = corpus.load_ratings(out / "test.ratings.tsv", "tsv", scale,
                               user_map=user_map, item_map=item_map)
    return train, test


def _load_latents(cfg: dict, out: Path, kind: str, k: int):
    """Latent-feature lookups and the layout for one variant."""
    n_users = len(corpus.read_id_map(out / "user_map.tsv"))
    n_items = len(corpus.read_id_map(out / "item_map.tsv"))
    theta_u = theta_i = item_vecs = None
    if kind == "baseline":
        layout = fm.FeatureLayout(n_users, n_items, variant="baseline")
    elif kind == "topic":
        sides = cfg["experiment.topic_sides"]
        k_user = k if sides in ("both", "user") else 0
        k_item = k if sides in ("both", "item") else 0
        if k_user:
            theta_u = lda.read_topic_vectors(out / f"user_topics_{k}.txt")
        if k_item:
            theta_i = lda.read_topic_vectors(out / f"item_topics_{k}.txt")
        layout = fm.FeatureLayout(n_users, n_items, k_user, k_item,
                                  variant="topic")
    else:
        item_vecs = embed.read_item_vectors(out / f"item_vectors_{k}.txt")
        layout = fm.FeatureLayout(n_users, n_items, 0, k, variant="vector")
    return layout, theta_u, theta_i, item_vecs


def _cmd_prepare(cfg: dict) -> int:
    if not cfg["dataset.path"]:
        raise ConfigError("dataset.path is required")
    out = _out_dir(cfg)
    scale = (cfg["dataset.rating_min"], cfg["dataset.rating_max"])
    ds = corpus.load_ratings(cfg["dataset.path"], cfg["dataset.format"], scale)
    train, test = corpus.split(ds, cfg["split.policy"], cfg["split.fraction"],
                               stage_seed(cfg, "split"))
    user_docs = corpus.build_user_documents(train)
    item_docs = corpus.build_item_documents(train)

    corpus.write_id_map(ds.user_map, out / "user_map.tsv")
    corpus.write_id_map(ds.item_map, out / "item_map.tsv")
    corpus.write_ratings(train, out / "train.ratings.tsv")
    corpus.write_ratings(test, out / "test.ratings.tsv")
    corpus.write_documents(user_docs, out / "user_documents.txt")
    corpus.write_documents(item_docs, out / "item_documents.txt")

    stats = corpus.dataset_stats(ds)
    stats.update({
        "split_policy": cfg["split.policy"],
        "split_fraction": cfg["split.fraction"],
        "split_seed": stage_seed(cfg, "split"),
        "n_train": train.n_records,
        "n_test": test.n_records,
        "n_cold_test": int(corpus.cold_start_mask(train, test).sum()),
    })
    corpus.write_stats(stats, out / "stats.json")
    log.info("prepared %d train / %d test records under %s",
             train.n_records, test.n_records, out)
    return 0


def _cmd_topics(cfg: dict) -> int:
    out = _out_dir(cfg)
    k = cfg["lda.k"]
    lda_cfg = lda.LdaConfig(k=k, alpha=cfg["lda.alpha"], beta=cfg["lda.beta"],
                            iterations=cfg["lda.iterations"],
                            seed=stage_seed(cfg, "lda"))
    n_users = len(corpus.read_id_map(out / "user_map.tsv"))
    n_items = len(corpus.read_id_map(out / "item_map.tsv"))
    sides = cfg["experiment.topic_sides"]
    if sides in ("both", "user"):
        docs = corpus.read_documents(out / "user_documents.txt")
        thetas = lda.train_lda([tokens for _, tokens in docs], lda_cfg,
                               n_vocab=n_items)
        lda.write_topic_vectors([doc_id for doc_id, _ in docs], thetas,
                                out / f"user_topics_{k}.txt")
        log.info("wrote %s", out / f"user_topics_{k}.txt")
    if sides in ("both", "item"):
        docs = corpus.read_documents(out / "item_documents.txt")
        thetas = lda.train_lda([tokens for _, tokens in docs], lda_cfg,
                               n_vocab=n_users)
        lda.write_topic_vectors([doc_id for doc_id, _ in docs], thetas,
                                out / f"item_topics_{k}.txt")
        log.info("wrote %s", out / f"item_topics_{k}.txt")
    return 0


def _cmd_embed(cfg: dict) -> int:
    out = _out_dir(cfg)
    sg_cfg = embed.SkipGramConfig(
        dim=cfg["embed.dim"], window=cfg["embed.window"],
        negatives=cfg["embed.negatives"], epochs=cfg["embed.epochs"],
        lr=cfg["embed.lr"], seed=stage_seed(cfg, "embed"))
    n_items = len(corpus.read_id_map(out / "item_map.tsv"))
    docs = corpus.read_documents(out / "user_documents.txt")
    model = embed.train_skipgram([tokens for _, tokens in docs], sg_cfg, n_items)
    embed.write_item_vectors(model, out / f"item_vectors_{sg_cfg.dim}.txt")
    log.info("wrote %s", out / f"item_vectors_{sg_cfg.dim}.txt")
    return 0


def _cmd_train(cfg: dict) -> int:
    out = _out_dir(cfg)
    token = cfg["train.variant"]
    kind, k = parse_variant(token)
    train, test = _load_prepared_split(cfg, out)
    layout, theta_u, theta_i, item_vecs = _load_latents(cfg, out, kind, k)
    warm_users = set(np.unique(train.users).tolist())
    warm_items = set(np.unique(train.items).tolist())
    enc_train = fm.encode_examples(train, layout, warm_users, warm_items,
                                   theta_u, theta_i, item_vecs)
    enc_test = fm.encode_examples(test, layout, warm_users, warm_items,
                                  theta_u, theta_i, item_vecs)
    metrics_path = out / f"metrics_{token}.ndjson"
    with open(metrics_path, "w", encoding="utf-8") as fh:
        def _flush(rec):
            fh.write(metrics.metrics_json_line(rec) + "\n")
            fh.flush()
        model, records = train_single_variant(token, enc_train, enc_test,
                                              train_config(cfg), _flush)
    fm.save_fm(model, out / f"fm_model_{token}.txt")
    metrics.write_timings(records, out / f"timings_{token}.ndjson")
    log.info("wrote %s", out / f"fm_model_{token}.txt")
    return 0


def _cmd_evaluate(cfg: dict) -> int:
    out = _out_dir(cfg)
    token = cfg["train.variant"]
    kind, k = parse_variant(token)
    model = fm.load_fm(out / f"fm_model_{token}.txt")
    train, test = _load_prepared_split(cfg, out)
    _, theta_u, theta_i, item_vecs = _load_latents(cfg, out, kind, k)
    warm_users = set(np.unique(train.users).tolist())
    warm_items = set(np.unique(train.items).tolist())
    enc_test = fm.encode_examples(test, model.layout, warm_users, warm_items,
                                  theta_u, theta_i, item_vecs)
    preds = fm.predict_batch(model, enc_test, clamp=cfg["fm.clamp"])
    print(repr(metrics.rmse(preds, enc_test.targets)))
    return 0


def _cmd_experiment(cfg: dict) -> int:
    out = _out_dir(cfg)
    exp_cfg = experiment_config(cfg)
    metrics_path = out / "metrics.ndjson"
    with open(metrics_path, "w", encoding="utf-8") as fh:
        def _flush(rec):
            # line-buffered flush so partial results survive a failed run
            fh.write(metrics.metrics_json_line(rec) + "\n")
            fh.flush()
        records = run_experiment(exp_cfg, on_record=_flush)
    metrics.write_timings(records, out / "timings.ndjson")

    epochs = [e for e in metrics.SUMMARY_EPOCHS if e <= cfg["fm.epochs"]]
    if not epochs:
        epochs = [cfg["fm.epochs"]]
    rows = metrics.summarize(records, epochs)
    table = metrics.format_summary(rows, epochs)
    metrics.write_text(table, out / "summary.txt")
    metrics.write_summary_csv(rows, out / "summary.csv", epochs)
    metrics.write_convergence_csv(records, out / "convergence.csv")
    sys.stdout.write(table)
    return 0


_HANDLERS = {
    "prepare": _cmd_prepare,
    "topics": _cmd_topics,
    "embed": _cmd_embed,
    "train": _cmd_train,
    "evaluate": _cmd_evaluate,
    "experiment": _cmd_experiment,
}


def dispatch(inv: CliInvocation) -> int:
    try:
        _check_overrides(inv.overrides)
    except ConfigError as exc:
        print(f"latentfm: usage error: {exc}", file=sys.stderr)
        return 2
    try:
        cfg = load_config(inv.config_path, inv.overrides, inv.output, inv.seed)
        return _HANDLERS[inv.subcommand](cfg)
    except (LatentFMError, OSError) as exc:
        print(f"latentfm: error: {exc}", file=sys.stderr)
        return 1


def _setup_logging() -> None:
    level = _LOG_LEVELS.get(os.environ.get("LATENTFM_LOG", "info").lower(),
                            logging.INFO)
    logging.basicConfig(level=level,
                        format="%(asctime)s %(levelname)s %(message)s")


def main(argv=None) -> int:
    _setup_logging()
    inv = parse_cli(argv)
    return dispatch(inv)


if __name__ == "__main__":
    sys.exit(main())
