"""Command-line workflows: config resolution, exit codes, artifacts."""

import json
import shutil

import numpy as np
import pytest

from ledg import cli
from ledg import graphdata as gd
from ledg import model as md
from ledg.cli import RunConfig
from ledg.errors import ConfigError

EDGE_FILE = "a b 0\nb c 1\nc d 10\na d 11\n"


@pytest.fixture(scope="module")
def dataset_dir(tmp_path_factory):
    out = tmp_path_factory.mktemp("data") / "sbm"
    rc = cli.main([
        "generate", "--out", str(out), "--num-nodes", "30", "--intra-p", "0.3",
        "--inter-p", "0.05", "--num-snapshots", "10", "--seed", "5",
    ])
    assert rc == 0
    return out


@pytest.fixture(scope="module")
def trained_dir(tmp_path_factory, dataset_dir):
    out = tmp_path_factory.mktemp("run") / "train"
    rc = cli.main([
        "train", "--dataset", str(dataset_dir), "--out", str(out),
        "--hidden-dim", "8", "--window-size", "2", "--epochs", "2",
        "--eta-out", "0.01", "--seed", "3",
    ])
    assert rc == 0
    return out


# ------------------------------------------------------------- configuration


def test_config_precedence_flags_over_file_over_defaults(tmp_path):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("# comment\nepochs = 3\neta_out = 0.004\n")
    config = RunConfig.resolve(cfg.read_text(), {"epochs": 2})
    assert config["epochs"] == 2          # flag wins
    assert config["eta_out"] == 0.004     # file wins over default
    assert config["window_size"] == 5     # default
    assert config["hidden_dim"] == 128    # default


def test_config_text_is_idempotent_under_reresolution():
    config = RunConfig.resolve(None, {"eta_out": "0.004", "epochs": "7"})
    again = RunConfig.resolve(config.to_text(), {})
    assert again.to_text() == config.to_text()
    assert again.fingerprint() == config.fingerprint()


def test_eta_in_auto_tracks_eta_out():
    config = RunConfig.resolve(None, {"eta_out": "0.004"})
    assert config["eta_in"] == pytest.approx(0.04)
    assert config.training_config().eta_in == pytest.approx(0.04)
    pinned = RunConfig.resolve(None, {"eta_out": "0.004", "eta_in": "0"})
    assert pinned.training_config().eta_in == 0.0


def test_config_reports_every_problem_at_once():
    with pytest.raises(ConfigError) as err:
        RunConfig.resolve(None, {"eta_out": "-1", "hidden_dim": "0"})
    message = str(err.value)
    assert "eta_out" in message and "hidden_dim" in message
    with pytest.raises(ConfigError) as err:
        RunConfig.resolve("decay=0.5\n", {})
    assert "decay" in str(err.value)
    with pytest.raises(ConfigError):
        RunConfig.resolve("epochs\n", {})


def test_set_flag_overrides_arbitrary_keys(dataset_dir, tmp_path):
    out = tmp_path / "run"
    rc = cli.main([
        "train", "--dataset", str(dataset_dir), "--out", str(out),
        "--hidden-dim", "4", "--window-size", "2", "--epochs", "0",
        "--set", "lambda_time=0.3",
    ])
    assert rc == 0
    assert "lambda_time=0.3" in (out / "config.resolved").read_text()


# ----------------------------------------------------------------- generate


def test_generate_writes_loadable_dataset(dataset_dir, capsys):
    seq = gd.load_dataset(dataset_dir)
    assert len(seq) == 10
    assert seq.num_nodes == 30
    assert seq.split == (7, 8, 10)


def test_generate_default_snapshot_count_splits_14_2_4(tmp_path, capsys):
    out = tmp_path / "ds"
    rc = cli.main(["generate", "--out", str(out), "--num-nodes", "12",
                   "--num-snapshots", "20", "--seed", "0"])
    assert rc == 0
    summary = json.loads(capsys.readouterr().out.splitlines()[0])
    assert summary["split"] == [14, 16, 20]
    assert summary["num_snapshots"] == 20


def test_generate_frozen_parameters_repeat_the_same_snapshot(tmp_path):
    out = tmp_path / "frozen"
    rc = cli.main([
        "generate", "--out", str(out), "--num-nodes", "12", "--intra-p", "1.0",
        "--inter-p", "0.0", "--drift-rate", "0.0", "--num-snapshots", "4",
        "--seed", "1",
    ])
    assert rc == 0
    seq = gd.load_dataset(out)
    first = seq.snapshot_at(1)
    for snap in seq:
        assert snap.edges == first.edges
        for u, v, _, _ in snap.edges:
            assert snap.node_labels[u] == snap.node_labels[v]


def test_generate_same_seed_is_byte_reproducible(tmp_path):
    args = ["--num-nodes", "15", "--num-snapshots", "4", "--seed", "9"]
    for name in ("one", "two"):
        assert cli.main(["generate", "--out", str(tmp_path / name)] + args) == 0
    for f in sorted(p.name for p in (tmp_path / "one").iterdir()):
        assert (tmp_path / "one" / f).read_bytes() == (tmp_path / "two" / f).read_bytes()


def test_generate_refuses_nonempty_out_without_force(tmp_path, capsys):
    out = tmp_path / "ds"
    args = ["generate", "--out", str(out), "--num-nodes", "10",
            "--num-snapshots", "3", "--seed", "0"]
    assert cli.main(args) == 0
    capsys.readouterr()
    assert cli.main(args) == 1
    assert "--force" in capsys.readouterr().err
    assert cli.main(args + ["--force"]) == 0


def test_generate_rejects_bad_probabilities(tmp_path, capsys):
    rc = cli.main(["generate", "--out", str(tmp_path / "x"), "--intra-p", "0.1",
                   "--inter-p", "0.5"])
    assert rc == 1
    assert "error:" in capsys.readouterr().err


# ------------------------------------------------------------------- ingest


def test_ingest_buckets_and_reports(tmp_path, capsys):
    src = tmp_path / "edges.txt"
    src.write_text(EDGE_FILE)
    out = tmp_path / "ds"
    rc = cli.main(["ingest", "--input", str(src), "--out", str(out),
                   "--interval", "10"])
    assert rc == 0
    summary = json.loads(capsys.readouterr().out.splitlines()[0])
    assert summary["num_snapshots"] == 2
    assert summary["edges_per_snapshot"] == [2, 2]
    loaded = gd.load_dataset(out)
    import io

    direct = gd.ingest_edge_stream(io.StringIO(EDGE_FILE), gd.FixedIntervalBucketing(10.0),
                                   train_frac=0.70, val_frac=0.10)
    assert loaded.node_names == direct.node_names
    for a, b in zip(loaded, direct):
        assert a.edges == b.edges


def test_ingest_missing_input_is_a_config_error(tmp_path, capsys):
    rc = cli.main(["ingest", "--input", str(tmp_path / "nope.txt"),
                   "--out", str(tmp_path / "ds"), "--interval", "10"])
    assert rc == 1
    assert "does not exist" in capsys.readouterr().err


def test_ingest_requires_exactly_one_bucketing(tmp_path, capsys):
    src = tmp_path / "edges.txt"
    src.write_text(EDGE_FILE)
    base = ["ingest", "--input", str(src), "--out", str(tmp_path / "ds")]
    assert cli.main(base) == 1
    assert cli.main(base + ["--interval", "10", "--edges-per-snapshot", "2"]) == 1


def test_ingest_malformed_line_is_reported(tmp_path, capsys):
    src = tmp_path / "edges.txt"
    src.write_text("a b 0\na b\n")
    rc = cli.main(["ingest", "--input", str(src), "--out", str(tmp_path / "ds"),
                   "--interval", "10"])
    assert rc == 1
    assert "line 2" in capsys.readouterr().err


# -------------------------------------------------------------------- train


def test_train_writes_logs_and_checkpoint(trained_dir):
    for name in ("config.resolved", "train_log.csv", "episodes.jsonl", "checkpoint.npz"):
        assert (trained_dir / name).exists()
    log = (trained_dir / "train_log.csv").read_text().splitlines()
    config = RunConfig.resolve((trained_dir / "config.resolved").read_text(), {})
    assert log[0] == f"# config_sha256={config.fingerprint()}"
    assert log[1] == "epoch,mean_objective,val_score"
    assert len(log) == 4  # two epochs
    for line in (trained_dir / "episodes.jsonl").read_text().splitlines():
        record = json.loads(line)
        assert np.isfinite(record["objective"])
        assert record["epoch"] in (1, 2)


def test_train_checkpoint_restores_matching_spec(trained_dir, dataset_dir):
    params, spec, extra = md.load_checkpoint(trained_dir / "checkpoint.npz")
    seq = gd.load_dataset(dataset_dir)
    assert spec.encoder.input_dim == seq.feature_width
    assert spec.encoder.hidden_dim == 8
    config = RunConfig.resolve(extra["config"], {})
    assert config["seed"] == 3
    assert extra["config_sha256"] == config.fingerprint()


def test_train_zero_epochs_checkpoints_the_seeded_init(dataset_dir, tmp_path):
    out = tmp_path / "run"
    rc = cli.main([
        "train", "--dataset", str(dataset_dir), "--out", str(out),
        "--hidden-dim", "8", "--window-size", "2", "--epochs", "0", "--seed", "4",
    ])
    assert rc == 0
    params, spec, _ = md.load_checkpoint(out / "checkpoint.npz")
    expected = md.init_parameters(spec, seed=4)
    assert params.fingerprint() == expected.fingerprint()


def test_train_requires_dataset(tmp_path, capsys):
    rc = cli.main(["train", "--out", str(tmp_path / "run"), "--epochs", "1"])
    assert rc == 1
    assert "dataset" in capsys.readouterr().err


def test_train_task_mismatch_is_a_config_error(dataset_dir, tmp_path, capsys):
    rc = cli.main([
        "train", "--dataset", str(dataset_dir), "--out", str(tmp_path / "run"),
        "--task", "node_classification", "--epochs", "1",
    ])
    assert rc == 1
    assert "task" in capsys.readouterr().err


def test_train_corrupted_dataset_is_a_runtime_error(dataset_dir, tmp_path, capsys):
    broken = tmp_path / "broken"
    shutil.copytree(dataset_dir, broken)
    (broken / "snapshot_001.edges").unlink()
    rc = cli.main([
        "train", "--dataset", str(broken), "--out", str(tmp_path / "run"),
        "--hidden-dim", "4", "--window-size", "2", "--epochs", "1",
    ])
    assert rc == 2
    assert "runtime error:" in capsys.readouterr().err


def test_train_early_stopping_engages_validation(dataset_dir, tmp_path, capsys):
    out = tmp_path / "run"
    rc = cli.main([
        "train", "--dataset", str(dataset_dir), "--out", str(out),
        "--hidden-dim", "8", "--window-size", "2", "--epochs", "3",
        "--eta-out", "0.01", "--seed", "3", "--early-stop-patience", "1",
        "--eval-negative-ratio", "10",
    ])
    assert rc == 0
    log = (out / "train_log.csv").read_text().splitlines()
    # every executed epoch logs a validation score
    for line in log[2:]:
        assert line.split(",")[2] != ""


# --------------------------------------------------------------------- eval


def test_eval_writes_metrics_csv(trained_dir, dataset_dir, tmp_path, capsys):
    out = tmp_path / "eval"
    rc = cli.main([
        "eval", "--checkpoint", str(trained_dir / "checkpoint.npz"),
        "--out", str(out), "--split", "test", "--eval-negative-ratio", "20",
    ])
    assert rc == 0
    stdout = capsys.readouterr().out
    csv_lines = (out / "metrics_test.csv").read_text().splitlines()
    assert csv_lines[1] == "metric,snapshot_time,value"
    aggregates = {}
    per_metric = {}
    for line in csv_lines[2:]:
        name, t, value = line.split(",")
        if t == "all":
            aggregates[name] = value
        else:
            per_metric.setdefault(name, []).append(float(value))
    assert set(aggregates) == {"map", "mrr"}
    # printed values match the csv aggregate rows, which match the mean
    for name, value in aggregates.items():
        assert f"{name}={value}" in stdout
        assert abs(float(value) - np.mean(per_metric[name])) <= 5e-12
        assert 0.0 <= float(value) <= 1.0


def test_eval_uses_dataset_remembered_by_the_checkpoint(trained_dir, tmp_path):
    out = tmp_path / "eval"
    rc = cli.main([
        "eval", "--checkpoint", str(trained_dir / "checkpoint.npz"),
        "--out", str(out), "--split", "val", "--eval-negative-ratio", "10",
    ])
    assert rc == 0
    assert (out / "metrics_val.csv").exists()


def test_eval_twice_produces_identical_bytes(trained_dir, tmp_path):
    outputs = []
    for name in ("e1", "e2"):
        out = tmp_path / name
        rc = cli.main([
            "eval", "--checkpoint", str(trained_dir / "checkpoint.npz"),
            "--out", str(out), "--split", "test", "--eval-negative-ratio", "20",
        ])
        assert rc == 0
        outputs.append((out / "metrics_test.csv").read_bytes())
    assert outputs[0] == outputs[1]


def test_eval_rejects_feature_width_mismatch(trained_dir, tmp_path, capsys):
    other = tmp_path / "other"
    rc = cli.main(["generate", "--out", str(other), "--num-nodes", "31",
                   "--num-snapshots", "10", "--seed", "5"])
    assert rc == 0
    capsys.readouterr()
    rc = cli.main([
        "eval", "--checkpoint", str(trained_dir / "checkpoint.npz"),
        "--out", str(tmp_path / "eval"), "--dataset", str(other),
    ])
    assert rc == 1
    assert "gnn_w1" in capsys.readouterr().err


def test_eval_missing_checkpoint(tmp_path, capsys):
    rc = cli.main(["eval", "--checkpoint", str(tmp_path / "none.npz"),
                   "--out", str(tmp_path / "eval")])
    assert rc == 1
    assert "does not exist" in capsys.readouterr().err
