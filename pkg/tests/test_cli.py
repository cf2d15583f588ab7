import json

import pytest

from fedchain.cli import main
from fedchain import datasets as ds
from fedchain.codec import dequantize, quantize
from fedchain.network import LayerShape, TrainConfig, init_model, train_local
from fedchain.orchestrator import evaluate
from fedchain.seeding import derive_seed

GEN_ARGS = ["gen-data", "--task", "binary", "--orig-per-class", "24",
            "--features", "4", "--separation", "8.0", "--per-class", "60",
            "--clients", "2", "--seed", "3"]
TRAIN_ARGS = ["train", "--rounds", "2", "--epochs", "3",
              "--learning-rate", "0.05", "--seed", "3"]


def gen(tmp_path, extra=()):
    out = tmp_path / "data"
    assert main(GEN_ARGS + ["--out", str(out)] + list(extra)) == 0
    return out


# ---------------------------------------------------------------- gen-data

def test_gen_data_writes_expected_files(tmp_path, capsys):
    out = gen(tmp_path)
    for name in ("train.csv", "test.csv", "scaler.json", "manifest.json",
                 "shards/shard_00.csv", "shards/shard_01.csv"):
        assert (out / name).exists(), name
    printed = capsys.readouterr().out
    assert "human: 60 samples" in printed and "bot: 60 samples" in printed

    train = ds.load_csv(out / "train.csv")
    test = ds.load_csv(out / "test.csv", classes=train.classes)
    assert len(train) == 84 and len(test) == 36  # 70/30 of 120
    assert train.features.min() >= 0.0 and train.features.max() <= 1.0
    shard = ds.load_csv(out / "shards/shard_00.csv", classes=train.classes)
    assert list(shard.class_counts()) == [21, 21]


def test_gen_data_default_presets_reach_5000_per_class(tmp_path, capsys):
    binary = tmp_path / "binary"
    assert main(["gen-data", "--task", "binary", "--seed", "1",
                 "--out", str(binary)]) == 0
    out = capsys.readouterr().out
    assert "human: 5000 samples" in out and "bot: 5000 samples" in out

    multi = tmp_path / "multi"
    assert main(["gen-data", "--task", "multiclass", "--seed", "1",
                 "--out", str(multi)]) == 0
    out = capsys.readouterr().out
    for name in ds.MULTICLASS_CLASSES:
        assert f"{name}: 5000 samples" in out
    train = ds.load_csv(multi / "train.csv")
    test = ds.load_csv(multi / "test.csv", classes=train.classes)
    assert list(train.class_counts() + test.class_counts()) == [5000] * 4


def test_gen_data_multiclass_counts(tmp_path):
    out = tmp_path / "multi"
    assert main(["gen-data", "--task", "multiclass", "--orig-per-class", "20",
                 "--features", "4", "--per-class", "40", "--clients", "2",
                 "--seed", "1", "--out", str(out)]) == 0
    train = ds.load_csv(out / "train.csv")
    test = ds.load_csv(out / "test.csv", classes=train.classes)
    assert train.classes == ds.MULTICLASS_CLASSES
    assert list((train.class_counts() + test.class_counts())) == [40] * 4


def test_gen_data_deterministic(tmp_path):
    a = gen(tmp_path / "a")
    b = gen(tmp_path / "b")
    for name in ("train.csv", "test.csv", "shards/shard_00.csv"):
        assert (a / name).read_bytes() == (b / name).read_bytes()


def test_gen_data_rejects_bad_params(tmp_path):
    out = tmp_path / "nope"
    code = main(["gen-data", "--task", "binary", "--orig-per-class", "4",
                 "--smote-neighbors", "5", "--out", str(out)])
    assert code == 1  # SMOTE needs more than k samples per class
    assert not (out / "train.csv").exists()


def test_gen_data_from_input_csv(tmp_path):
    source = ds.synth_generate(30, 3, 2, 6.0, seed=5,
                               class_names=ds.BINARY_CLASSES)
    src_path = tmp_path / "source.csv"
    ds.save_csv(source, src_path)
    out = tmp_path / "fromcsv"
    assert main(["gen-data", "--task", "binary", "--input", str(src_path),
                 "--per-class", "50", "--clients", "2", "--out", str(out)]) == 0
    train = ds.load_csv(out / "train.csv")
    test = ds.load_csv(out / "test.csv", classes=train.classes)
    assert len(train) + len(test) == 100


# ---------------------------------------------------------------- train

def test_train_writes_history_and_metrics(tmp_path):
    data = gen(tmp_path)
    out = tmp_path / "run"
    assert main(TRAIN_ARGS + ["--data", str(data), "--out", str(out)]) == 0
    rounds = (out / "rounds.csv").read_text().splitlines()
    assert rounds[0] == "round,accuracy,loss,client_00_loss,client_01_loss"
    assert len(rounds) == 3  # header + 2 rounds
    assert (out / "metrics.txt").read_text().startswith("Configuration")
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["command"] == "train"
    assert manifest["config"]["clients"] == 2
    assert manifest["artifacts"]["rounds_csv"] == "rounds.csv"


def test_train_ten_rounds_write_ten_row_history(tmp_path):
    data = tmp_path / "data"
    assert main(["gen-data", "--task", "binary", "--orig-per-class", "30",
                 "--per-class", "300", "--clients", "4", "--seed", "5",
                 "--out", str(data)]) == 0
    out = tmp_path / "run"
    assert main(["train", "--data", str(data), "--rounds", "10",
                 "--epochs", "5", "--seed", "5", "--out", str(out)]) == 0
    rows = (out / "rounds.csv").read_text().splitlines()
    assert len(rows) == 11  # header + one row per round
    assert [r.split(",")[0] for r in rows[1:]] == [str(i) for i in range(1, 11)]


def test_train_repeat_runs_are_byte_identical(tmp_path):
    data = gen(tmp_path)
    out_a, out_b = tmp_path / "a", tmp_path / "b"
    assert main(TRAIN_ARGS + ["--data", str(data), "--out", str(out_a)]) == 0
    assert main(TRAIN_ARGS + ["--data", str(data), "--out", str(out_b)]) == 0
    assert (out_a / "rounds.csv").read_bytes() == (out_b / "rounds.csv").read_bytes()
    assert (out_a / "metrics.csv").read_bytes() == (out_b / "metrics.csv").read_bytes()


def test_train_missing_data_dir_exits_2_without_artifacts(tmp_path, capsys):
    out = tmp_path / "run"
    code = main(["train", "--data", str(tmp_path / "missing"),
                 "--out", str(out)])
    assert code == 2
    assert not out.exists()
    assert "error" in capsys.readouterr().err


def test_train_clients_flag_must_match_shards(tmp_path):
    data = gen(tmp_path)
    code = main(TRAIN_ARGS + ["--data", str(data), "--out",
                              str(tmp_path / "x"), "--clients", "5"])
    assert code == 1


def test_train_bad_hyperparameter_is_usage_error(tmp_path):
    data = gen(tmp_path)
    code = main(["train", "--data", str(data), "--out", str(tmp_path / "x"),
                 "--learning-rate", "-1"])
    assert code == 1


def test_train_partial_threshold_is_usage_error(tmp_path, capsys):
    data = gen(tmp_path)
    code = main(TRAIN_ARGS + ["--data", str(data), "--out",
                              str(tmp_path / "x"), "--threshold", "1"])
    assert code == 1
    assert "threshold" in capsys.readouterr().err


def test_single_client_sanity_matches_local_training(tmp_path):
    data = gen(tmp_path, extra=["--clients", "1"])
    out = tmp_path / "solo"
    assert main(["train", "--rounds", "1", "--epochs", "3", "--learning-rate",
                 "0.05", "--seed", "3", "--data", str(data),
                 "--out", str(out)]) == 0

    # replay the single client's local training off-ledger
    test = ds.load_csv(data / "test.csv", classes=ds.BINARY_CLASSES)
    shard = ds.load_csv(data / "shards/shard_00.csv", classes=test.classes)
    shape = LayerShape.from_dims(test.feature_dim, 2, 3)
    start = dequantize(quantize(init_model(shape, derive_seed(3, "init")), 6, 0))
    cfg = TrainConfig(learning_rate=0.05, epochs=3,
                      rng_seed=derive_seed(3, "train", 1))
    local = train_local(start, shard, cfg)
    expected = evaluate(dequantize(quantize(local, 6, len(shard))), test)

    metrics = (out / "metrics.csv").read_text().splitlines()
    headline = metrics[1].split(",")
    assert float(headline[2]) == expected.accuracy


def test_config_file_and_flag_precedence(tmp_path):
    data = gen(tmp_path)
    cfg_path = tmp_path / "cfg.json"
    cfg_path.write_text(json.dumps({"rounds": 1, "epochs": 3,
                                    "learning_rate": 0.05, "seed": 3}))
    out = tmp_path / "cfgrun"
    assert main(["train", "--data", str(data), "--out", str(out),
                 "--config", str(cfg_path), "--rounds", "2"]) == 0
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["config"]["rounds"] == 2      # flag beats file
    assert manifest["config"]["epochs"] == 3      # file beats default
    assert manifest["config"]["batch_size"] == 16  # default survives


def test_manifest_config_reproduces_artifacts(tmp_path):
    data = gen(tmp_path)
    out = tmp_path / "orig"
    assert main(TRAIN_ARGS + ["--data", str(data), "--out", str(out)]) == 0
    manifest = json.loads((out / "manifest.json").read_text())

    replay_cfg = tmp_path / "replay.json"
    replay_cfg.write_text(json.dumps(manifest["config"]))
    replay = tmp_path / "replay"
    assert main(["train", "--data", str(data), "--out", str(replay),
                 "--config", str(replay_cfg)]) == 0
    assert (out / "rounds.csv").read_bytes() == (replay / "rounds.csv").read_bytes()
    assert (out / "metrics.csv").read_bytes() == (replay / "metrics.csv").read_bytes()


def test_config_file_unknown_key_is_usage_error(tmp_path):
    data = gen(tmp_path)
    cfg_path = tmp_path / "cfg.json"
    cfg_path.write_text(json.dumps({"leerning_rate": 0.1}))
    assert main(["train", "--data", str(data), "--out", str(tmp_path / "x"),
                 "--config", str(cfg_path)]) == 1


# ---------------------------------------------------------------- baseline

def test_baseline_writes_metrics(tmp_path):
    data = gen(tmp_path)
    out = tmp_path / "base"
    assert main(["baseline", "--data", str(data), "--out", str(out),
                 "--rounds", "2", "--epochs", "3", "--learning-rate", "0.05",
                 "--seed", "3"]) == 0
    text = (out / "metrics.txt").read_text()
    assert "Centralized Model" in text
    rows = (out / "metrics.csv").read_text().splitlines()
    values = [float(v) for v in rows[1].split(",")[2:] if v]
    assert all(0.0 <= v <= 1.0 for v in values)

    out2 = tmp_path / "base2"
    assert main(["baseline", "--data", str(data), "--out", str(out2),
                 "--rounds", "2", "--epochs", "3", "--learning-rate", "0.05",
                 "--seed", "3"]) == 0
    assert (out / "metrics.csv").read_bytes() == (out2 / "metrics.csv").read_bytes()


# ---------------------------------------------------------------- bench

def test_bench_writes_expected_grid(tmp_path):
    out = tmp_path / "bench"
    assert main(["bench", "--rates", "40,80", "--block-times", "1",
                 "--duration", "15", "--out", str(out), "--seed", "2"]) == 0
    rows = (out / "bench.csv").read_text().splitlines()
    assert rows[0] == "function,block_time,send_rate,throughput," \
                      "mean_latency,p95_latency,failed_count"
    assert len(rows) == 3
    assert json.loads((out / "manifest.json").read_text())["command"] == "bench"


def test_bench_aggregate_function(tmp_path):
    out = tmp_path / "bench-agg"
    assert main(["bench", "--function", "aggregate", "--rates", "60",
                 "--block-times", "1", "--duration", "15",
                 "--out", str(out)]) == 0
    row = (out / "bench.csv").read_text().splitlines()[1]
    assert row.startswith("aggregate,")


def test_bench_rate_range_syntax(tmp_path):
    out = tmp_path / "bench-range"
    assert main(["bench", "--rates", "40:100:30", "--block-times", "1",
                 "--duration", "12", "--out", str(out)]) == 0
    rows = (out / "bench.csv").read_text().splitlines()
    assert len(rows) == 4  # rates 40, 70, 100


def test_bench_bad_rates_is_usage_error(tmp_path):
    assert main(["bench", "--rates", "fast", "--out",
                 str(tmp_path / "x")]) == 1


# ---------------------------------------------------------------- misc

def test_help_exits_zero():
    with pytest.raises(SystemExit) as exc:
        main(["--help"])
    assert exc.value.code == 0


def test_subcommand_help_lists_defaults(capsys):
    with pytest.raises(SystemExit):
        main(["train", "--help"])
    text = capsys.readouterr().out
    assert "default: 16" in text   # batch size
    assert "default: 50" in text   # epochs
    assert "default: 1e-05" in text


def test_missing_subcommand_is_usage_error(capsys):
    assert main([]) == 1
    assert "usage error" in capsys.readouterr().err


def test_argparse_failures_inside_subcommands_exit_1(capsys):
    assert main(["train", "--rounds", "abc", "--data", "x", "--out", "y"]) == 1
    assert main(["bench", "--wat", "1", "--out", "y"]) == 1
    assert main(["gen-data", "--task", "ternary", "--out", "y"]) == 1
    capsys.readouterr()
