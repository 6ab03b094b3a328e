"""Command-line interface: dataset generation/ingestion, training, evaluation.

Configuration is a flat ``key=value`` text file with flag overrides
(precedence: flags > file > defaults). Every command echoes the resolved
configuration in a canonical byte-stable form whose SHA-256 fingerprints all
outputs, so identical (config, seed) runs are byte-identical.

Exit codes: 0 success, 1 invalid configuration or input, 2 runtime failure.
"""

from __future__ import annotations

import argparse
import hashlib
import sys
from pathlib import Path

from . import evaluation as ev
from . import graphdata as gd
from . import meta as mt
from .errors import ConfigError, LedgError
from .model import EncoderConfig, ModelSpec, load_checkpoint, save_checkpoint

#: config keys, their parsers, and defaults; eta_in "auto" means 10 * eta_out
CONFIG_FIELDS: dict[str, tuple] = {
    "task": (str, "link_prediction"),
    "dataset": (str, ""),
    "base_model": (str, "gcn"),
    "num_layers": (int, 2),
    "hidden_dim": (int, 128),
    "window_size": (int, 5),
    "eta_out": (float, 0.002),
    "eta_in": (str, "auto"),
    "lambda_time": (float, 0.1),
    "gradient_mode": (str, "first_order"),
    "target_structure_mode": (str, "same_snapshot"),
    "epochs": (int, 20),
    "seed": (int, 0),
    "outer_optimizer": (str, "sgd"),
    "train_negative_ratio": (int, 1),
    "eval_negative_ratio": (int, 100),
    "early_stop_patience": (str, "none"),
}


def _format_value(value) -> str:
    if isinstance(value, float):
        return f"{value:.12g}"
    return str(value)


class RunConfig:
    """Resolved flat configuration with a canonical text form."""

    def __init__(self, values: dict):
        unknown = sorted(set(values) - set(CONFIG_FIELDS))
        if unknown:
            raise ConfigError(f"unknown config keys: {', '.join(unknown)}")
        self.values = dict(values)

    @classmethod
    def resolve(cls, file_text: str | None, overrides: dict, base: dict | None = None) -> "RunConfig":
        """Layer defaults, an optional base, file contents, then overrides."""
        raw = {key: _format_value(default) for key, (_, default) in CONFIG_FIELDS.items()}
        if base:
            raw.update(base)
        if file_text is not None:
            raw.update(parse_config_text(file_text))
        raw.update({k: str(v) for k, v in overrides.items() if v is not None})
        errors = []
        typed: dict = {}
        for key, text in raw.items():
            if key not in CONFIG_FIELDS:
                errors.append(f"unknown config key {key!r}")
                continue
            caster, _ = CONFIG_FIELDS[key]
            try:
                typed[key] = caster(text)
            except ValueError:
                errors.append(f"{key}: cannot parse {text!r} as {caster.__name__}")
        if "eta_in" in typed and "eta_out" in typed:
            if typed["eta_in"] == "auto":
                typed["eta_in"] = 10.0 * typed["eta_out"]
            else:
                try:
                    typed["eta_in"] = float(typed["eta_in"])
                except ValueError:
                    errors.append(f"eta_in: cannot parse {typed['eta_in']!r} as float")
        if errors:
            raise ConfigError("; ".join(errors))
        cfg = cls(typed)
        cfg.validate()
        return cfg

    def validate(self) -> None:
        """Check every field, reporting all problems in one error."""
        errors = []
        v = self.values
        try:
            self.training_config()
        except LedgError as exc:
            errors.append(str(exc))
        if v["task"] not in gd.TASKS:
            errors.append(f"task must be one of {gd.TASKS}")
        if v["base_model"] not in ("gcn", "attention"):
            errors.append("base_model must be gcn or attention")
        if v["num_layers"] < 1:
            errors.append("num_layers must be at least 1")
        if v["hidden_dim"] < 1:
            errors.append("hidden_dim must be positive")
        if v["eval_negative_ratio"] < 1:
            errors.append("eval_negative_ratio must be at least 1")
        if errors:
            raise ConfigError("; ".join(errors))

    def __getitem__(self, key: str):
        return self.values[key]

    def to_text(self) -> str:
        return "".join(f"{k}={_format_value(self.values[k])}\n" for k in sorted(self.values))

    def fingerprint(self) -> str:
        return hashlib.sha256(self.to_text().encode()).hexdigest()

    def training_config(self) -> mt.TrainingConfig:
        v = self.values
        patience = v["early_stop_patience"]
        patience = None if str(patience) == "none" else int(patience)
        return mt.TrainingConfig(
            window_size=v["window_size"],
            eta_out=v["eta_out"],
            eta_in=float(v["eta_in"]),
            lambda_time=v["lambda_time"],
            gradient_mode=v["gradient_mode"],
            target_structure_mode=v["target_structure_mode"],
            epochs=v["epochs"],
            seed=v["seed"],
            outer_optimizer=v["outer_optimizer"],
            train_negative_ratio=v["train_negative_ratio"],
            early_stop_patience=patience,
        )

    def model_spec(self, sequence: gd.DynamicGraphSequence) -> ModelSpec:
        encoder = EncoderConfig(
            base_model=self.values["base_model"],
            num_layers=self.values["num_layers"],
            input_dim=sequence.feature_width,
            hidden_dim=self.values["hidden_dim"],
        )
        return ModelSpec(encoder, task=sequence.task, num_classes=sequence.num_classes)


def parse_config_text(text: str) -> dict[str, str]:
    values = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ConfigError(f"config line {lineno}: expected key=value, got {line!r}")
        key, _, value = line.partition("=")
        values[key.strip()] = value.strip()
    return values


def _load_config_file(path: str | None) -> str | None:
    if path is None:
        return None
    p = Path(path)
    if not p.exists():
        raise ConfigError(f"config file {path} does not exist")
    return p.read_text()


def _collect_overrides(args) -> dict:
    overrides = {}
    for key in CONFIG_FIELDS:
        value = getattr(args, key, None)
        if value is not None:
            overrides[key] = value
    for item in getattr(args, "set", None) or []:
        if "=" not in item:
            raise ConfigError(f"--set expects key=value, got {item!r}")
        key, _, value = item.partition("=")
        overrides[key.strip()] = value.strip()
    return overrides


def _require_empty_or_force(directory: Path, force: bool) -> None:
    if directory.exists() and any(directory.iterdir()) and not force:
        raise ConfigError(f"{directory} is not empty; pass --force to overwrite")


def _load_sequence(path: str) -> gd.DynamicGraphSequence:
    p = Path(path)
    if not p.exists():
        raise ConfigError(f"dataset directory {path} does not exist")
    return gd.load_dataset(p)


def cmd_generate(args) -> int:
    out = Path(args.out)
    _require_empty_or_force(out, args.force)
    sequence = gd.generate_drifting_sbm(
        num_nodes=args.num_nodes,
        num_communities=args.num_communities,
        intra_p=args.intra_p,
        inter_p=args.inter_p,
        drift_rate=args.drift_rate,
        num_snapshots=args.num_snapshots,
        seed=args.seed,
        feature_mode=args.feature_mode,
        task=args.task,
        train_frac=args.train_frac,
        val_frac=args.val_frac,
    )
    gd.save_dataset(sequence, out)
    print(gd.sequence_summary(sequence))
    print(f"wrote dataset to {out}")
    return 0


def cmd_ingest(args) -> int:
    src = Path(args.input)
    if not src.exists():
        raise ConfigError(f"input file {args.input} does not exist")
    out = Path(args.out)
    _require_empty_or_force(out, args.force)
    if (args.interval is None) == (args.edges_per_snapshot is None):
        raise ConfigError("pass exactly one of --interval or --edges-per-snapshot")
    if args.interval is not None:
        bucketing = gd.FixedIntervalBucketing(args.interval)
    else:
        bucketing = gd.EqualEdgeCountBucketing(args.edges_per_snapshot)
    with src.open() as handle:
        sequence = gd.ingest_edge_stream(
            handle,
            bucketing,
            task=args.task,
            train_frac=args.train_frac,
            val_frac=args.val_frac,
        )
    gd.save_dataset(sequence, out)
    print(gd.sequence_summary(sequence))
    print(f"wrote dataset to {out}")
    return 0


def _val_hook(sequence, spec, config, eval_ratio):
    times = list(sequence.times_in("val"))
    if not times:
        return None

    def hook(params, epoch):
        reports = ev.evaluate_sequence(
            sequence, params, spec, config, times, negative_ratio=eval_ratio
        )
        key = "map" if sequence.task == "link_prediction" else "micro_f1"
        return reports[key].value

    return hook


def cmd_train(args) -> int:
    config = RunConfig.resolve(_load_config_file(args.config), _collect_overrides(args))
    if not config["dataset"]:
        raise ConfigError("a dataset is required (--dataset or dataset= in the config file)")
    sequence = _load_sequence(config["dataset"])
    if config["task"] != sequence.task:
        raise ConfigError(
            f"config task {config['task']!r} != dataset task {sequence.task!r}; "
            f"set task={sequence.task}"
        )
    spec = config.model_spec(sequence)
    training = config.training_config()
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    text = config.to_text()
    fingerprint = config.fingerprint()
    (out / "config.resolved").write_text(text)

    hook = None
    if training.early_stop_patience is not None:
        hook = _val_hook(sequence, spec, training, config["eval_negative_ratio"])
    episode_lines: list[str] = []
    result = mt.train(
        sequence,
        spec,
        training,
        val_hook=hook,
        log_hook=lambda record: episode_lines.append(record.to_json()),
    )
    (out / "episodes.jsonl").write_text("".join(line + "\n" for line in episode_lines))
    log_lines = [f"# config_sha256={fingerprint}", "epoch,mean_objective,val_score"]
    for i, objective in enumerate(result.epoch_objectives):
        val = f"{result.val_scores[i]:.12g}" if i < len(result.val_scores) else ""
        log_lines.append(f"{i + 1},{objective:.12g},{val}")
    (out / "train_log.csv").write_text("\n".join(log_lines) + "\n")
    save_checkpoint(
        result.params,
        spec,
        out / "checkpoint.npz",
        extra_meta={"config": text, "config_sha256": fingerprint},
    )
    print(f"config_sha256={fingerprint}")
    print(f"epochs_run={len(result.epoch_objectives)} stopped_early={result.stopped_early}")
    if result.epoch_objectives:
        print(f"final_mean_objective={result.epoch_objectives[-1]:.12g}")
    print(f"wrote checkpoint and logs to {out}")
    return 0


def cmd_eval(args) -> int:
    ckpt_path = Path(args.checkpoint)
    if not ckpt_path.exists():
        raise ConfigError(f"checkpoint {args.checkpoint} does not exist")
    params, spec, extra = load_checkpoint(ckpt_path)
    base = parse_config_text(extra.get("config", ""))
    config = RunConfig.resolve(_load_config_file(args.config), _collect_overrides(args), base=base)
    dataset = config["dataset"]
    if not dataset:
        raise ConfigError("a dataset is required (--dataset or dataset= in the config file)")
    sequence = _load_sequence(dataset)
    if spec.task != sequence.task:
        raise ConfigError(f"checkpoint task {spec.task!r} != dataset task {sequence.task!r}")
    if spec.encoder.input_dim != sequence.feature_width:
        raise ConfigError(
            f"checkpoint tensor 'gnn_w1' expects input width {spec.encoder.input_dim}, "
            f"dataset features have width {sequence.feature_width}"
        )
    if spec.num_classes != sequence.num_classes:
        raise ConfigError(
            f"checkpoint classifier width {spec.num_classes} != dataset classes "
            f"{sequence.num_classes}"
        )
    times = list(sequence.times_in(args.split))
    if not times:
        raise ConfigError(f"dataset has no {args.split} snapshots")
    training = config.training_config()
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    fingerprint = config.fingerprint()
    (out / "config.resolved").write_text(config.to_text())
    reports = ev.evaluate_sequence(
        sequence,
        params,
        spec,
        training,
        times,
        negative_ratio=config["eval_negative_ratio"],
    )
    csv_text = ev.reports_to_csv(reports, fingerprint=fingerprint)
    csv_path = out / f"metrics_{args.split}.csv"
    csv_path.write_text(csv_text)
    print(f"config_sha256={fingerprint}")
    for name in sorted(reports):
        print(f"{name}={reports[name].value:.12g}")
    print(f"wrote {csv_path}")
    return 0


def _add_config_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", help="key=value config file")
    parser.add_argument("--dataset", help="dataset directory")
    parser.add_argument("--task", help="dataset task name")
    parser.add_argument("--base-model", dest="base_model", choices=("gcn", "attention"))
    parser.add_argument("--num-layers", dest="num_layers", type=int)
    parser.add_argument("--hidden-dim", dest="hidden_dim", type=int)
    parser.add_argument("--window-size", dest="window_size", type=int)
    parser.add_argument("--eta-out", dest="eta_out", type=float)
    parser.add_argument("--eta-in", dest="eta_in", type=float)
    parser.add_argument("--lambda-time", dest="lambda_time", type=float)
    parser.add_argument("--gradient-mode", dest="gradient_mode", choices=mt.GRADIENT_MODES)
    parser.add_argument(
        "--target-structure-mode", dest="target_structure_mode", choices=mt.STRUCTURE_MODES
    )
    parser.add_argument("--epochs", type=int)
    parser.add_argument("--seed", type=int)
    parser.add_argument("--outer-optimizer", dest="outer_optimizer", choices=mt.OUTER_OPTIMIZERS)
    parser.add_argument("--train-negative-ratio", dest="train_negative_ratio", type=int)
    parser.add_argument("--eval-negative-ratio", dest="eval_negative_ratio", type=int)
    parser.add_argument("--early-stop-patience", dest="early_stop_patience")
    parser.add_argument("--set", action="append", help="generic key=value override")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ledg",
        description="Meta-learned message-passing GNNs for discrete dynamic graphs",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_gen = sub.add_parser("generate", help="write a drifting SBM dataset")
    p_gen.add_argument("--out", required=True)
    p_gen.add_argument("--num-nodes", dest="num_nodes", type=int, default=100)
    p_gen.add_argument("--num-communities", dest="num_communities", type=int, default=2)
    p_gen.add_argument("--intra-p", dest="intra_p", type=float, default=0.15)
    p_gen.add_argument("--inter-p", dest="inter_p", type=float, default=0.02)
    p_gen.add_argument("--drift-rate", dest="drift_rate", type=float, default=0.05)
    p_gen.add_argument("--num-snapshots", dest="num_snapshots", type=int, default=20)
    p_gen.add_argument("--seed", type=int, default=0)
    p_gen.add_argument(
        "--feature-mode", dest="feature_mode", choices=("identity", "degree_buckets"),
        default="identity",
    )
    p_gen.add_argument(
        "--task", choices=("link_prediction", "node_classification"), default="link_prediction"
    )
    p_gen.add_argument("--train-frac", dest="train_frac", type=float, default=0.70)
    p_gen.add_argument("--val-frac", dest="val_frac", type=float, default=0.10)
    p_gen.add_argument("--force", action="store_true")
    p_gen.set_defaults(func=cmd_generate)

    p_ing = sub.add_parser("ingest", help="bucket a timestamped edge list into snapshots")
    p_ing.add_argument("--input", required=True)
    p_ing.add_argument("--out", required=True)
    p_ing.add_argument("--interval", type=float)
    p_ing.add_argument("--edges-per-snapshot", dest="edges_per_snapshot", type=int)
    p_ing.add_argument(
        "--task", choices=("link_prediction", "edge_classification"), default="link_prediction"
    )
    p_ing.add_argument("--train-frac", dest="train_frac", type=float, default=0.70)
    p_ing.add_argument("--val-frac", dest="val_frac", type=float, default=0.10)
    p_ing.add_argument("--force", action="store_true")
    p_ing.set_defaults(func=cmd_ingest)

    p_train = sub.add_parser("train", help="episodic meta-training")
    p_train.add_argument("--out", required=True)
    _add_config_flags(p_train)
    p_train.set_defaults(func=cmd_train)

    p_eval = sub.add_parser("eval", help="evaluate a checkpoint on a split")
    p_eval.add_argument("--checkpoint", required=True)
    p_eval.add_argument("--out", required=True)
    p_eval.add_argument("--split", choices=("val", "test"), default="test")
    _add_config_flags(p_eval)
    p_eval.set_defaults(func=cmd_eval)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except LedgError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # noqa: BLE001 - runtime failures map to exit 2
        print(f"runtime error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
