"""Command-line entry point: data generation, training, baseline, bench.

Every command resolves its settings as CLI flags > --config JSON file >
built-in defaults, derives all randomness from one --seed, and writes its
artifacts atomically (temp file + rename) only after the run succeeded, so
failures leave no partial outputs. A manifest.json capturing the resolved
configuration is written next to the artifacts; re-running with the same
configuration and seed reproduces them byte for byte.

Exit codes: 0 success, 1 usage or configuration error, 2 runtime error.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import os
import sys
import time
from pathlib import Path

from . import __version__
from . import bench as bench_mod
from . import datasets as ds
from . import metrics as metrics_mod
from .ledger import LedgerConfig
from .network import TrainConfig
from .orchestrator import (ConfigError, ExperimentConfig, FederatedExperiment,
                           evaluate, run_centralized_baseline)
from .seeding import derive_seed


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


GEN_DEFAULTS = {
    "seed": 0,
    "input": None,
    "orig_per_class": 135,
    "features": 8,
    "separation": 8.0,
    "per_class": 5000,
    "smote_neighbors": 5,
    "train_fraction": 0.7,
    "clients": 4,
}

TRAIN_DEFAULTS = {
    "seed": 0,
    "clients": None,        # number of shard files found
    "rounds": None,         # 10 for binary, 15 for multiclass
    "threshold": None,      # equals clients
    "agg_mode": "mean",
    "scale_exponent": 6,
    "optimizer": "adam",
    "learning_rate": 1e-5,
    "batch_size": 16,
    "epochs": 50,
    "width_const": 3,
    "block_time": 1.0,
    "block_capacity": 256,
    "validators": 16,
}

BASELINE_DEFAULTS = {
    "seed": 0,
    "clients": None,
    "rounds": None,
    "optimizer": "adam",
    "learning_rate": 1e-5,
    "batch_size": 16,
    "epochs": 50,
    "width_const": 3,
}

BENCH_DEFAULTS = {
    "seed": 0,
    "function": "submit",
    "rates": "40:550:30",
    "block_times": "1,3",
    "duration": 30.0,
    "payload_size": 512,
    "threshold": 5,
    "capacity_tps": bench_mod.DEFAULT_CAPACITY_TPS,
    "agg_cost_coeff": bench_mod.DEFAULT_AGG_COST_COEFF,
    "arrival": "poisson",
}


def _add(parser, name, defaults, help_text, **kwargs):
    key = name.lstrip("-").replace("-", "_")
    shown = defaults.get(key)
    suffix = "" if shown is None else f" (default: {shown})"
    parser.add_argument(name, default=None, help=help_text + suffix, **kwargs)


def build_parser() -> _Parser:
    parser = _Parser(prog="fedchain",
                     description="Federated training over a simulated ledger.")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    gen = sub.add_parser("gen-data", parents=[], help="Build train/test/shard CSVs")
    gen.add_argument("--task", required=True, choices=["binary", "multiclass"])
    gen.add_argument("--out", required=True, help="output directory")
    _add(gen, "--input", GEN_DEFAULTS,
         "source CSV to expand instead of generating synthetic clusters")
    _add(gen, "--orig-per-class", GEN_DEFAULTS, "synthetic samples per class "
         "before expansion", type=int)
    _add(gen, "--features", GEN_DEFAULTS, "synthetic feature count", type=int)
    _add(gen, "--separation", GEN_DEFAULTS,
         "synthetic cluster separation in noise standard deviations", type=float)
    _add(gen, "--per-class", GEN_DEFAULTS, "expansion target per class", type=int)
    _add(gen, "--smote-neighbors", GEN_DEFAULTS,
         "neighbor count used by SMOTE", type=int)
    _add(gen, "--train-fraction", GEN_DEFAULTS, "train share of the split",
         type=float)
    _add(gen, "--clients", GEN_DEFAULTS, "client shard count", type=int)
    _add(gen, "--seed", GEN_DEFAULTS, "root random seed", type=int)
    gen.add_argument("--config", default=None, help="JSON config file")
    gen.set_defaults(func=cmd_gen_data, defaults=GEN_DEFAULTS)

    train = sub.add_parser("train", help="Run a federated experiment")
    train.add_argument("--data", required=True,
                       help="directory produced by gen-data")
    train.add_argument("--out", required=True, help="output directory")
    _add(train, "--clients", TRAIN_DEFAULTS,
         "client count; defaults to the number of shard files", type=int)
    _add(train, "--rounds", TRAIN_DEFAULTS,
         "federated rounds; reference presets are 5/8/10 for binary and "
         "10/12/15 for multiclass (default: 10 binary, 15 multiclass)",
         type=int)
    _add(train, "--threshold", TRAIN_DEFAULTS,
         "submissions that trigger aggregation (default: clients)", type=int)
    _add(train, "--agg-mode", TRAIN_DEFAULTS, "aggregation rule",
         choices=["mean", "weighted"])
    _add(train, "--scale-exponent", TRAIN_DEFAULTS,
         "decimal digits kept by fixed-point encoding", type=int)
    _add(train, "--optimizer", TRAIN_DEFAULTS, "local optimizer",
         choices=["adam", "sgd"])
    _add(train, "--learning-rate", TRAIN_DEFAULTS, "local learning rate",
         type=float)
    _add(train, "--batch-size", TRAIN_DEFAULTS, "local mini-batch size", type=int)
    _add(train, "--epochs", TRAIN_DEFAULTS, "local epochs per round", type=int)
    _add(train, "--width-const", TRAIN_DEFAULTS,
         "hidden-width constant, 1..10", type=int)
    _add(train, "--block-time", TRAIN_DEFAULTS, "ledger block time in seconds",
         type=float)
    _add(train, "--block-capacity", TRAIN_DEFAULTS,
         "transactions per block", type=int)
    _add(train, "--validators", TRAIN_DEFAULTS, "validator count", type=int)
    _add(train, "--seed", TRAIN_DEFAULTS, "root random seed", type=int)
    train.add_argument("--config", default=None, help="JSON config file")
    train.set_defaults(func=cmd_train, defaults=TRAIN_DEFAULTS)

    base = sub.add_parser("baseline",
                          help="Centralized single-shard baseline")
    base.add_argument("--data", required=True,
                      help="directory produced by gen-data")
    base.add_argument("--out", required=True, help="output directory")
    _add(base, "--clients", BASELINE_DEFAULTS,
         "client count defining the shard size", type=int)
    _add(base, "--rounds", BASELINE_DEFAULTS,
         "round budget matched by the baseline (default: 10 binary, "
         "15 multiclass)", type=int)
    _add(base, "--optimizer", BASELINE_DEFAULTS, "optimizer",
         choices=["adam", "sgd"])
    _add(base, "--learning-rate", BASELINE_DEFAULTS, "learning rate", type=float)
    _add(base, "--batch-size", BASELINE_DEFAULTS, "mini-batch size", type=int)
    _add(base, "--epochs", BASELINE_DEFAULTS, "epochs per round", type=int)
    _add(base, "--width-const", BASELINE_DEFAULTS,
         "hidden-width constant, 1..10", type=int)
    _add(base, "--seed", BASELINE_DEFAULTS, "root random seed", type=int)
    base.add_argument("--config", default=None, help="JSON config file")
    base.set_defaults(func=cmd_baseline, defaults=BASELINE_DEFAULTS)

    bench = sub.add_parser("bench", help="Throughput/latency sweep")
    bench.add_argument("--out", required=True, help="output directory")
    _add(bench, "--function", BENCH_DEFAULTS, "workload",
         choices=["submit", "aggregate"])
    _add(bench, "--rates", BENCH_DEFAULTS,
         "send rates: start:stop:step or comma list, tx/s")
    _add(bench, "--block-times", BENCH_DEFAULTS, "comma list of block times, s")
    _add(bench, "--duration", BENCH_DEFAULTS, "seconds per run", type=float)
    _add(bench, "--payload-size", BENCH_DEFAULTS,
         "update size in parameters", type=int)
    _add(bench, "--threshold", BENCH_DEFAULTS,
         "aggregation threshold for the aggregate workload", type=int)
    _add(bench, "--capacity-tps", BENCH_DEFAULTS,
         "block capacity per second of block time", type=float)
    _add(bench, "--agg-cost-coeff", BENCH_DEFAULTS,
         "extra block slots per (parameter * threshold) when aggregating",
         type=float)
    _add(bench, "--arrival", BENCH_DEFAULTS, "arrival process",
         choices=["poisson", "uniform"])
    _add(bench, "--seed", BENCH_DEFAULTS, "root random seed", type=int)
    bench.add_argument("--config", default=None, help="JSON config file")
    bench.set_defaults(func=cmd_bench, defaults=BENCH_DEFAULTS)

    return parser


def _resolve(ns: argparse.Namespace) -> dict:
    """Merge defaults, --config file values and explicit CLI flags."""
    merged = dict(ns.defaults)
    if ns.config is not None:
        try:
            file_cfg = json.loads(Path(ns.config).read_text(encoding="utf-8"))
        except FileNotFoundError:
            raise UsageError(f"config file {ns.config} not found") from None
        except json.JSONDecodeError as exc:
            raise UsageError(f"config file {ns.config}: {exc}") from None
        unknown = set(file_cfg) - set(merged)
        if unknown:
            raise UsageError(f"unknown config keys: {sorted(unknown)}")
        merged.update(file_cfg)
    for key in ns.defaults:
        value = getattr(ns, key, None)
        if value is not None:
            merged[key] = value
    return merged


def _atomic_write(path: Path, text: str) -> None:
    tmp = path.parent / (path.name + ".tmp")
    tmp.write_text(text, encoding="utf-8")
    os.replace(tmp, path)


def _csv_text(header: list[str], rows: list[list[str]]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf)
    writer.writerow(header)
    writer.writerows(rows)
    return buf.getvalue()


def _dataset_csv_text(data: ds.Dataset) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf)
    writer.writerow([f"f{i}" for i in range(data.feature_dim)] + ["label"])
    for row, label in zip(data.features, data.labels):
        writer.writerow([repr(float(v)) for v in row] + [data.classes[label]])
    return buf.getvalue()


def _write_manifest(out: Path, command: str, cfg: dict, artifacts: dict,
                    started: float, **extras) -> None:
    # cfg holds only valid --config keys, so feeding it back through
    # --config reproduces the run's artifacts byte for byte
    manifest = {
        "command": command,
        "tool_version": __version__,
        "seed": cfg.get("seed"),
        "config": cfg,
        "artifacts": artifacts,
        "duration_seconds": time.monotonic() - started,
        **extras,
    }
    _atomic_write(out / "manifest.json", json.dumps(manifest, indent=2) + "\n")


def _load_canonical(path: Path) -> ds.Dataset:
    data = ds.load_csv(path)
    canonical = ds.canonical_order(data.classes)
    if canonical is not None and data.classes != canonical:
        data = data.remap_classes(canonical)
    return data


def cmd_gen_data(ns: argparse.Namespace) -> None:
    cfg = _resolve(ns)
    out = Path(ns.out)
    seed = cfg["seed"]
    names = ds.BINARY_CLASSES if ns.task == "binary" else ds.MULTICLASS_CLASSES

    started = time.monotonic()
    try:
        if cfg["input"] is not None:
            source = ds.load_csv(cfg["input"], classes=names)
        else:
            source = ds.synth_generate(
                cfg["orig_per_class"], cfg["features"], len(names),
                cfg["separation"], derive_seed(seed, "synth"),
                class_names=names,
            )
        expanded = ds.smote_expand(source, ds.SmoteConfig(
            cfg["smote_neighbors"], cfg["per_class"], derive_seed(seed, "smote")))
        train, test = ds.stratified_split(expanded, cfg["train_fraction"],
                                          derive_seed(seed, "split"))
        scale = ds.fit_minmax(train)
        train, test = ds.apply_minmax(train, scale), ds.apply_minmax(test, scale)
        shards = ds.partition_clients(train, cfg["clients"],
                                      derive_seed(seed, "partition"))
    except ds.DataFormatError:
        raise  # malformed input file: a runtime failure, not a usage error
    except ValueError as exc:
        raise UsageError(str(exc)) from None

    out.mkdir(parents=True, exist_ok=True)
    (out / "shards").mkdir(exist_ok=True)
    artifacts = {"train": "train.csv", "test": "test.csv",
                 "scaler": "scaler.json"}
    _atomic_write(out / "train.csv", _dataset_csv_text(train))
    _atomic_write(out / "test.csv", _dataset_csv_text(test))
    _atomic_write(out / "scaler.json",
                  json.dumps(scale.to_dict(), indent=2) + "\n")
    for i, shard in enumerate(shards):
        rel = f"shards/shard_{i:02d}.csv"
        artifacts[f"shard_{i:02d}"] = rel
        _atomic_write(out / rel, _dataset_csv_text(shard))
    _write_manifest(out, "gen-data", cfg, artifacts, started, task=ns.task)

    for name, count in zip(names, expanded.class_counts()):
        print(f"{name}: {count} samples after expansion")
    print(f"train {len(train)} / test {len(test)} rows, "
          f"{cfg['clients']} shards -> {out}")


def _load_data_dir(data_dir: Path, clients) -> tuple[list[ds.Dataset], ds.Dataset]:
    test_path = data_dir / "test.csv"
    if not test_path.exists():
        raise FileNotFoundError(f"{test_path} not found; run gen-data first")
    test = _load_canonical(test_path)
    shard_paths = sorted((data_dir / "shards").glob("shard_*.csv"))
    if not shard_paths:
        raise FileNotFoundError(f"no shard files under {data_dir / 'shards'}")
    if clients is not None and clients != len(shard_paths):
        raise UsageError(
            f"--clients {clients} does not match {len(shard_paths)} shard files"
        )
    shards = [ds.load_csv(p, classes=test.classes) for p in shard_paths]
    return shards, test


def _rounds_csv(records, num_clients: int) -> str:
    header = ["round", "accuracy", "loss"] + \
        [f"client_{i:02d}_loss" for i in range(num_clients)]
    rows = [[str(r.round), repr(r.global_accuracy), repr(r.global_loss),
             *(repr(v) for v in r.per_client_train_loss)] for r in records]
    return _csv_text(header, rows)


def cmd_train(ns: argparse.Namespace) -> None:
    cfg = _resolve(ns)
    shards, test = _load_data_dir(Path(ns.data), cfg["clients"])
    num_clients = len(shards)
    task = "binary" if len(test.classes) == 2 else "multiclass"
    rounds = cfg["rounds"] if cfg["rounds"] is not None else \
        (10 if task == "binary" else 15)
    try:
        experiment_cfg = ExperimentConfig(
            task=task,
            num_clients=num_clients,
            fl_rounds=rounds,
            train=TrainConfig(
                optimizer=cfg["optimizer"],
                learning_rate=cfg["learning_rate"],
                batch_size=cfg["batch_size"],
                epochs=cfg["epochs"],
            ),
            ledger=LedgerConfig(
                block_time=cfg["block_time"],
                max_txs_per_block=cfg["block_capacity"],
                num_validators=cfg["validators"],
            ),
            threshold=cfg["threshold"],
            agg_mode=cfg["agg_mode"],
            scale_exponent=cfg["scale_exponent"],
            seed=cfg["seed"],
            width_const=cfg["width_const"],
        )
    except (ConfigError, ValueError) as exc:
        raise UsageError(str(exc)) from None

    started = time.monotonic()
    experiment = FederatedExperiment(experiment_cfg)
    records = experiment.run(shards, test)
    report = evaluate(experiment.global_model, test)

    out = Path(ns.out)
    out.mkdir(parents=True, exist_ok=True)
    label = f"DFL - {num_clients} Clients"
    _atomic_write(out / "rounds.csv", _rounds_csv(records, num_clients))
    _atomic_write(out / "metrics.txt",
                  metrics_mod.render_table([(label, report)]))
    _atomic_write(out / "metrics.csv", _csv_text(
        metrics_mod.METRICS_CSV_HEADER,
        metrics_mod.report_csv_rows(label, report, test.classes)))
    _write_manifest(out, "train",
                    {**cfg, "clients": num_clients, "rounds": rounds},
                    {"rounds_csv": "rounds.csv", "metrics_txt": "metrics.txt",
                     "metrics_csv": "metrics.csv"},
                    started, task=task)
    final = records[-1]
    print(f"{rounds} rounds done; final accuracy "
          f"{final.global_accuracy:.4f}, loss {final.global_loss:.4f} -> {out}")


def cmd_baseline(ns: argparse.Namespace) -> None:
    cfg = _resolve(ns)
    data_dir = Path(ns.data)
    train_path = data_dir / "train.csv"
    if not train_path.exists():
        raise FileNotFoundError(f"{train_path} not found; run gen-data first")
    pooled = _load_canonical(train_path)
    test = ds.load_csv(data_dir / "test.csv", classes=pooled.classes)
    task = "binary" if len(test.classes) == 2 else "multiclass"
    rounds = cfg["rounds"] if cfg["rounds"] is not None else \
        (10 if task == "binary" else 15)
    clients = cfg["clients"]
    if clients is None:
        clients = len(sorted((data_dir / "shards").glob("shard_*.csv"))) or 4
    try:
        experiment_cfg = ExperimentConfig(
            task=task, num_clients=clients, fl_rounds=rounds,
            train=TrainConfig(
                optimizer=cfg["optimizer"],
                learning_rate=cfg["learning_rate"],
                batch_size=cfg["batch_size"],
                epochs=cfg["epochs"],
            ),
            seed=cfg["seed"], width_const=cfg["width_const"],
        )
    except (ConfigError, ValueError) as exc:
        raise UsageError(str(exc)) from None

    started = time.monotonic()
    report = run_centralized_baseline(experiment_cfg, pooled, test)

    out = Path(ns.out)
    out.mkdir(parents=True, exist_ok=True)
    label = "Centralized Model"
    _atomic_write(out / "metrics.txt",
                  metrics_mod.render_table([(label, report)]))
    _atomic_write(out / "metrics.csv", _csv_text(
        metrics_mod.METRICS_CSV_HEADER,
        metrics_mod.report_csv_rows(label, report, test.classes)))
    _write_manifest(out, "baseline",
                    {**cfg, "clients": clients, "rounds": rounds},
                    {"metrics_txt": "metrics.txt", "metrics_csv": "metrics.csv"},
                    started, task=task)
    acc = "n/a" if report.accuracy is None else f"{report.accuracy:.4f}"
    print(f"baseline accuracy {acc} -> {out}")


def _parse_rates(text: str) -> list[float]:
    if ":" in text:
        parts = text.split(":")
        if len(parts) != 3:
            raise UsageError(f"rates range must be start:stop:step, got {text!r}")
        start, stop, step = (float(p) for p in parts)
        if step <= 0 or stop < start:
            raise UsageError(f"bad rates range {text!r}")
        rates, value = [], start
        while value <= stop + 1e-9:
            rates.append(value)
            value += step
        return rates
    try:
        return [float(p) for p in text.split(",") if p.strip()]
    except ValueError:
        raise UsageError(f"could not parse rates {text!r}") from None


def cmd_bench(ns: argparse.Namespace) -> None:
    cfg = _resolve(ns)
    rates = _parse_rates(str(cfg["rates"]))
    try:
        block_times = [float(p) for p in str(cfg["block_times"]).split(",")
                       if p.strip()]
    except ValueError:
        raise UsageError(f"could not parse block times "
                         f"{cfg['block_times']!r}") from None
    if not rates or not block_times:
        raise UsageError("need at least one rate and one block time")

    started = time.monotonic()
    try:
        results = bench_mod.sweep(
            rates, block_times, function=cfg["function"], seed=cfg["seed"],
            duration=cfg["duration"], payload_size=cfg["payload_size"],
            threshold=cfg["threshold"], capacity_tps=cfg["capacity_tps"],
            agg_cost_coeff=cfg["agg_cost_coeff"],
            arrival_process=cfg["arrival"],
        )
    except ValueError as exc:
        raise UsageError(str(exc)) from None

    out = Path(ns.out)
    out.mkdir(parents=True, exist_ok=True)
    _atomic_write(out / "bench.csv", _csv_text(
        bench_mod.BENCH_CSV_HEADER, bench_mod.results_csv_rows(results)))
    _write_manifest(out, "bench", cfg, {"bench_csv": "bench.csv"}, started)
    print(f"{len(results)} runs ({cfg['function']}) -> {out / 'bench.csv'}")


def main(argv=None) -> int:
    parser = build_parser()
    try:
        ns = parser.parse_args(argv)
        ns.func(ns)
        return 0
    except (UsageError, ConfigError) as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 1
    except SystemExit:
        raise
    except Exception as exc:  # runtime failure: no partial artifacts written
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
