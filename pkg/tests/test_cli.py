import json

import numpy as np
import pytest

from latentfm import cli, corpus, fm, lda, metrics
from latentfm.config import load_config
from latentfm.errors import ConfigError

from _util import planted_dataset, toy_dataset


def test_parse_cli_experiment():
    inv = cli.parse_cli(["experiment", "--config", "exp.json"])
    assert inv.subcommand == "experiment"
    assert inv.config_path == "exp.json"
    assert inv.overrides == [] and inv.output is None and inv.seed is None


def test_parse_cli_set_and_flags():
    inv = cli.parse_cli(["topics", "--set", "lda.k=20", "--set",
                         "lda.iterations=5", "--output", "o", "--seed", "9"])
    assert inv.subcommand == "topics"
    assert inv.overrides == ["lda.k=20", "lda.iterations=5"]
    assert inv.output == "o" and inv.seed == 9
    cfg = load_config(None, inv.overrides, inv.output, inv.seed)
    assert cfg["lda.k"] == 20 and cfg["lda.iterations"] == 5
    assert cfg["output.dir"] == "o" and cfg["seed"] == 9


def test_unknown_subcommand_exits_2():
    with pytest.raises(SystemExit) as exc:
        cli.parse_cli(["bogus"])
    assert exc.value.code == 2


def test_unknown_set_key_is_usage_error(capsys):
    code = cli.main(["prepare", "--set", "nope.key=1"])
    assert code == 2
    assert "unknown config key" in capsys.readouterr().err


def test_malformed_set_is_usage_error(capsys):
    assert cli.main(["prepare", "--set", "lda.k"]) == 2
    assert "KEY=VALUE" in capsys.readouterr().err


def test_config_file_plus_overrides(tmp_path):
    cfg_path = tmp_path / "exp.json"
    cfg_path.write_text(json.dumps({"lda.k": 20, "fm.epochs": 7}))
    cfg = load_config(cfg_path, ["lda.k=8"], None, None)
    assert cfg["lda.k"] == 8          # --set wins over the file
    assert cfg["fm.epochs"] == 7      # file wins over the default
    cfg_path.write_text(json.dumps({"bogus.key": 1}))
    with pytest.raises(ConfigError, match="bogus.key"):
        load_config(cfg_path, [], None, None)
    cfg_path.write_text("[1, 2]")
    with pytest.raises(ConfigError, match="JSON object"):
        load_config(cfg_path, [], None, None)


def _prepare_args(data, out, extra=()):
    return ["prepare",
            "--set", f"dataset.path={data}",
            "--set", "dataset.format=movielens-colon",
            "--set", "split.fraction=0.25",
            "--output", str(out), "--seed", "5", *extra]


def test_prepare_writes_stats_and_artifacts(tmp_path, capsys):
    data = toy_dataset(tmp_path / "toy.dat")
    out = tmp_path / "out"
    assert cli.main(_prepare_args(data, out)) == 0
    stats = json.loads((out / "stats.json").read_text())
    assert stats["n_users"] == 5 and stats["n_items"] == 4
    assert stats["n_train"] + stats["n_test"] == stats["n_records"]
    for name in ("train.ratings.tsv", "test.ratings.tsv", "user_map.tsv",
                 "item_map.tsv", "user_documents.txt", "item_documents.txt"):
        assert (out / name).is_file(), name


def test_missing_dataset_path_fails_with_diagnostic(tmp_path, capsys):
    out = tmp_path / "out"
    code = cli.main(["experiment", "--set", "dataset.path=/nope/missing.dat",
                     "--output", str(out)])
    assert code == 1
    assert "/nope/missing.dat" in capsys.readouterr().err


def test_unset_dataset_path_fails(tmp_path, capsys):
    code = cli.main(["prepare", "--output", str(tmp_path / "o")])
    assert code == 1
    assert "dataset.path" in capsys.readouterr().err


def test_stage_pipeline_and_evaluate_consistency(tmp_path, capsys):
    data = toy_dataset(tmp_path / "toy.dat")
    out = tmp_path / "out"
    common = ["--output", str(out), "--seed", "5"]
    assert cli.main(_prepare_args(data, out)) == 0
    assert cli.main(["topics", "--set", "lda.k=2",
                     "--set", "lda.iterations=10", *common]) == 0
    assert cli.main(["embed", "--set", "embed.dim=2",
                     "--set", "embed.epochs=2", *common]) == 0
    assert (out / "user_topics_2.txt").is_file()
    assert (out / "item_topics_2.txt").is_file()
    assert (out / "item_vectors_2.txt").is_file()

    train_args = ["--set", "train.variant=topic_2", "--set", "fm.rank=2",
                  "--set", "fm.epochs=8", "--set", "fm.lr=0.05", *common]
    assert cli.main(["train", *train_args]) == 0
    assert (out / "fm_model_topic_2.txt").is_file()
    assert (out / "metrics_topic_2.ndjson").is_file()
    capsys.readouterr()

    assert cli.main(["evaluate", *train_args]) == 0
    printed = float(capsys.readouterr().out.strip())

    # recompute through the library on the same artifacts
    user_map = corpus.read_id_map(out / "user_map.tsv")
    item_map = corpus.read_id_map(out / "item_map.tsv")
    train = corpus.load_ratings(out / "train.ratings.tsv", "tsv", (1, 5),
                                user_map=user_map, item_map=item_map)
    test = corpus.load_ratings(out / "test.ratings.tsv", "tsv", (1, 5),
                               user_map=user_map, item_map=item_map)
    model = fm.load_fm(out / "fm_model_topic_2.txt")
    theta_u = lda.read_topic_vectors(out / "user_topics_2.txt")
    theta_i = lda.read_topic_vectors(out / "item_topics_2.txt")
    enc = fm.encode_examples(test, model.layout,
                             set(np.unique(train.users).tolist()),
                             set(np.unique(train.items).tolist()),
                             theta_u, theta_i)
    expected = metrics.rmse(fm.predict_batch(model, enc, clamp=True),
                            enc.targets)
    assert printed == pytest.approx(expected, abs=1e-12)


def _experiment_args(data, out):
    return ["experiment",
            "--set", f"dataset.path={data}",
            "--set", "dataset.format=movielens-colon",
            "--set", "experiment.variants=baseline,topic_2",
            "--set", "lda.iterations=10",
            "--set", "fm.rank=2", "--set", "fm.epochs=6",
            "--set", "fm.lr=0.05",
            "--output", str(out), "--seed", "11"]


def test_experiment_emits_all_outputs(tmp_path, capsys):
    data = planted_dataset(tmp_path / "p.dat")
    out = tmp_path / "run"
    assert cli.main(_experiment_args(data, out)) == 0
    table = capsys.readouterr().out
    assert "iter=6" in table and "topic_2" in table
    for name in ("metrics.ndjson", "timings.ndjson", "summary.txt",
                 "summary.csv", "convergence.csv"):
        assert (out / name).is_file(), name
    records = metrics.read_metrics(out / "metrics.ndjson")
    assert len(records) == 2 * 6


def test_identical_invocations_are_byte_identical(tmp_path):
    data = planted_dataset(tmp_path / "p.dat")
    out1, out2 = tmp_path / "run1", tmp_path / "run2"
    assert cli.main(_experiment_args(data, out1)) == 0
    assert cli.main(_experiment_args(data, out2)) == 0
    for name in ("metrics.ndjson", "summary.txt", "summary.csv",
                 "convergence.csv"):
        assert (out1 / name).read_bytes() == (out2 / name).read_bytes(), name


def test_partial_metrics_survive_a_failed_variant(tmp_path, monkeypatch, capsys):
    # the baseline variant's records must already be on disk when a later
    # variant blows up mid-run
    from latentfm import experiment as exp_mod
    from latentfm.errors import TrainingDiverged

    data = planted_dataset(tmp_path / "p.dat")
    out = tmp_path / "run"
    real_train_fm = fm.train_fm
    calls = {"n": 0}

    def flaky_train_fm(train, test, config, on_epoch=None):
        calls["n"] += 1
        if calls["n"] == 2:
            raise TrainingDiverged("non-finite parameters at epoch 1")
        return real_train_fm(train, test, config, on_epoch)

    monkeypatch.setattr(exp_mod.fm, "train_fm", flaky_train_fm)
    code = cli.main(_experiment_args(data, out))
    assert code == 1
    assert "non-finite" in capsys.readouterr().err
    partial = metrics.read_metrics(out / "metrics.ndjson")
    assert len(partial) == 6  # the baseline epochs were flushed before the error
    assert all(r.variant == "baseline" for r in partial)


def test_console_script_runs_headless(tmp_path):
    import subprocess
    import sys
    data = toy_dataset(tmp_path / "toy.dat")
    out = tmp_path / "out"
    proc = subprocess.run(
        [sys.executable, "-m", "latentfm.cli", *_prepare_args(data, out)],
        input="", capture_output=True, text=True, timeout=300)
    assert proc.returncode == 0, proc.stderr
    assert (out / "stats.json").is_file()
