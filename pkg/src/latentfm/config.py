"""Flat dotted-key configuration: JSON file plus `--set key=value` overrides.

The schema is flat on purpose (diff-friendly, machine-checkable): a config
file is a single JSON object whose keys are the dotted names below.  CLI
overrides are applied after the file is parsed.  Unknown keys are rejected.

Stage seeds (`split.seed`, `lda.seed`, `embed.seed`, `fm.seed`) default to
the master `seed` when left null.
"""

from __future__ import annotations

import json
from pathlib import Path

from .errors import ConfigError
from .fm import TrainConfig

_UNSET = object()


def _bool(raw):
    if isinstance(raw, bool):
        return raw
    if isinstance(raw, str) and raw.lower() in ("true", "false", "1", "0"):
        return raw.lower() in ("true", "1")
    raise ValueError(f"expected a boolean, got {raw!r}")


def _str_list(raw):
    if isinstance(raw, list) and all(isinstance(v, str) for v in raw):
        return list(raw)
    if isinstance(raw, str):
        return [tok for tok in raw.split(",") if tok]
    raise ValueError(f"expected a list of strings, got {raw!r}")


def _opt_int(raw):
    if raw is None or (isinstance(raw, str) and raw.lower() in ("", "null", "none")):
        return None
    return int(raw)


# key -> (parser, default)
SCHEMA: dict = {
    "seed": (int, 42),
    "output.dir": (str, "out"),
    "dataset.path": (str, ""),
    "dataset.format": (str, "tsv"),
    "dataset.rating_min": (float, 1.0),
    "dataset.rating_max": (float, 5.0),
    "split.policy": (str, "random"),
    "split.fraction": (float, 0.1),
    "split.seed": (_opt_int, None),
    "lda.k": (int, 8),
    "lda.alpha": (float, 0.5),
    "lda.beta": (float, 0.1),
    "lda.iterations": (int, 300),
    "lda.seed": (_opt_int, None),
    "embed.dim": (int, 8),
    "embed.window": (int, 3),
    "embed.negatives": (int, 5),
    "embed.epochs": (int, 5),
    "embed.lr": (float, 0.025),
    "embed.seed": (_opt_int, None),
    "fm.rank": (int, 8),
    "fm.lr": (float, 0.01),
    "fm.reg_w0": (float, 0.1),
    "fm.reg_w": (float, 0.1),
    "fm.reg_v": (float, 0.1),
    "fm.epochs": (int, 300),
    "fm.init_sigma": (float, 0.1),
    "fm.seed": (_opt_int, None),
    "fm.clamp": (_bool, True),
    "experiment.variants": (_str_list, ["baseline"]),
    "experiment.topic_sides": (str, "both"),
    "train.variant": (str, "baseline"),
}


def _coerce(key: str, raw):
    parser, _ = SCHEMA[key]
    try:
        return parser(raw)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bad value for {key!r}: {exc}") from None


def load_config(path=None, overrides: list[str] | None = None,
                output: str | None = None, seed: int | None = None) -> dict:
    """Defaults, then the JSON file, then --set overrides, then --output/--seed."""
    cfg = {key: default for key, (_, default) in SCHEMA.items()}
    if path is not None:
        try:
            raw = json.loads(Path(path).read_text(encoding="utf-8"))
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from None
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config {path} is not valid JSON: {exc}") from None
        if not isinstance(raw, dict):
            raise ConfigError(f"config {path} must be a JSON object")
        for key, value in raw.items():
            if key not in SCHEMA:
                raise ConfigError(f"unknown config key {key!r} in {path}")
            cfg[key] = _coerce(key, value)
    for item in overrides or []:
        key, sep, value = item.partition("=")
        if not sep:
            raise ConfigError(f"--set expects KEY=VALUE, got {item!r}")
        if key not in SCHEMA:
            raise ConfigError(f"unknown config key {key!r}")
        cfg[key] = _coerce(key, value)
    if output is not None:
        cfg["output.dir"] = output
    if seed is not None:
        cfg["seed"] = int(seed)
    return cfg


def stage_seed(cfg: dict, stage: str) -> int:
    value = cfg.get(f"{stage}.seed")
    return int(cfg["seed"]) if value is None else int(value)


def train_config(cfg: dict) -> TrainConfig:
    return TrainConfig(
        rank=cfg["fm.rank"], lr=cfg["fm.lr"],
        reg_w0=cfg["fm.reg_w0"], reg_w=cfg["fm.reg_w"], reg_v=cfg["fm.reg_v"],
        epochs=cfg["fm.epochs"], init_sigma=cfg["fm.init_sigma"],
        seed=stage_seed(cfg, "fm"), clamp=cfg["fm.clamp"])


def experiment_config(cfg: dict):
    from .experiment import ExperimentConfig  # local import to avoid a cycle
    if not cfg["dataset.path"]:
        raise ConfigError("dataset.path is required")
    return ExperimentConfig(
        dataset_path=cfg["dataset.path"],
        dataset_format=cfg["dataset.format"],
        scale=(cfg["dataset.rating_min"], cfg["dataset.rating_max"]),
        split_policy=cfg["split.policy"],
        split_fraction=cfg["split.fraction"],
        split_seed=stage_seed(cfg, "split"),
        variants=cfg["experiment.variants"],
        topic_sides=cfg["experiment.topic_sides"],
        lda_alpha=cfg["lda.alpha"],
        lda_beta=cfg["lda.beta"],
        lda_iterations=cfg["lda.iterations"],
        lda_seed=stage_seed(cfg, "lda"),
        embed_window=cfg["embed.window"],
        embed_negatives=cfg["embed.negatives"],
        embed_epochs=cfg["embed.epochs"],
        embed_lr=cfg["embed.lr"],
        embed_seed=stage_seed(cfg, "embed"),
        fm=train_config(cfg),
    )
