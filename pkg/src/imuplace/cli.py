"""
Command-line pipeline: synth, train, ablate, rank, eval.

Every command resolves its configuration as defaults < ``--config`` JSON <
explicit flags, writes its artifacts atomically under ``--out`` and records a
``manifest.json`` with the resolved config and SHA-256 hashes of inputs and
outputs. Exit codes: 0 success, 2 validation error, 3 numeric divergence.
"""

from __future__ import annotations

import argparse
import logging
import sys
import time
from pathlib import Path

from imuplace.attribution import (
    AttributionReport,
    Baseline,
    per_dataset_ablation,
    rank_sensors,
)
from imuplace.errors import TrainingDivergedError, ValidationError
from imuplace.evalharness import (
    METRIC_FIELDS,
    DatasetSpec,
    evaluate,
    planted_signal_dataset,
    synthesize_dataset,
)
from imuplace.fileio import atomic_write_text, read_json, sha256_file, write_json
from imuplace.imusynth import ALL_SENSORS, read_imu_features, select_sensors, write_imu_features
from imuplace.kinematics import JOINT_NAMES, read_pose_sequence, write_pose_sequence
from imuplace.neuralseq import (
    ModelSpec,
    TrainConfig,
    load_checkpoint,
    make_windows,
    save_checkpoint,
    train,
)

log = logging.getLogger("imuplace")

EXIT_OK, EXIT_VALIDATION, EXIT_DIVERGED = 0, 2, 3

DEFAULTS = {
    "synth": {
        "kind": "procedural", "n_sequences": 8, "seq_len": 122, "fps": 60.0,
        "planted_joints": None, "max_amplitude_deg": 45.0, "max_freq_hz": 2.0,
        "n_components": 3, "noise_scale": 1.0, "seed": 0, "out": "data",
    },
    "train": {
        "data": None, "variant": "transformer", "sensors": None, "hidden": 64, "layers": 2,
        "heads": 4, "ff_dim": None, "epochs": 5, "learning_rate": 1e-3, "batch_size": 16,
        "window_len": 120, "optimizer": "adam", "split": "even", "seed": 0, "out": "model",
    },
    "ablate": {
        "checkpoint": None, "data": None, "baseline": "zero", "split": "odd",
        "n_jobs": 1, "seed": 0, "out": "ablation",
    },
    "rank": {"report": None, "k": 6, "seed": 0, "out": "rank"},
    "eval": {
        "checkpoint": None, "data": None, "compare": None, "split": "odd",
        "seed": 0, "out": "eval",
    },
}


# ---------------------------------------------------------------------------
# helpers
# ---------------------------------------------------------------------------

class Run:
    """Tracks the resolved config and the files a command reads and writes."""

    def __init__(self, command, config):
        self.command = command
        self.config = config
        self.out = Path(config["out"])
        self.inputs, self.outputs = {}, {}
        self.started = time.perf_counter()

    def read(self, path):
        path = Path(path)
        if not path.is_file():
            raise ValidationError(f"input file not found: {path}")
        self.inputs[str(path)] = sha256_file(path)
        return path

    def wrote(self, path):
        self.outputs[str(path)] = sha256_file(path)

    def write_json(self, name, obj):
        path = self.out / name
        write_json(path, obj)
        self.wrote(path)
        return path

    def finish(self):
        manifest = {
            "command": self.command,
            "resolved_config": self.config,
            "inputs": dict(sorted(self.inputs.items())),
            "outputs": dict(sorted(self.outputs.items())),
            "duration_s": round(time.perf_counter() - self.started, 3),
        }
        write_json(self.out / "manifest.json", manifest)


def _parse_int_list(value):
    if value is None or isinstance(value, list):
        return value
    return [int(v) for v in str(value).split(",") if v.strip()]


def _resolve_sensors(value, run):
    """Sensor list from a comma list, a JSON list, or a rank output file."""
    if value is None:
        return None
    if isinstance(value, str) and Path(value).is_file():
        return [int(s) for s in read_json(run.read(value))["sensors"]]
    return _parse_int_list(value)


def _dataset_files(directory):
    directory = Path(directory)
    if not directory.is_dir():
        raise ValidationError(f"data directory not found: {directory}")
    poses = sorted(directory.glob("*.pose.ndjson"))
    if not poses:
        raise ValidationError(f"no *.pose.ndjson files in {directory}")
    pairs = []
    for pose in poses:
        imu = pose.with_name(pose.name.replace(".pose.ndjson", ".imu.ndjson"))
        if not imu.is_file():
            raise ValidationError(f"missing IMU file for {pose.name}")
        pairs.append((pose, imu))
    return pairs


def _load_dataset(directory, run, split="all"):
    """``[(features, sensors, PoseSequence)]`` for the chosen parity split."""
    pairs = _dataset_files(directory)
    if split == "even":
        pairs = pairs[0::2]
    elif split == "odd":
        pairs = pairs[1::2]
    elif split != "all":
        raise ValidationError(f"unknown split {split!r}")
    if not pairs:
        raise ValidationError(f"split {split!r} of {directory} is empty")
    out = []
    for pose, imu in pairs:
        seq = read_pose_sequence(run.read(pose))
        feats = read_imu_features(run.read(imu))
        if len(feats.features) != len(seq):
            raise ValidationError(f"{imu.name}: {len(feats.features)} frames, pose has {len(seq)}")
        out.append((feats.features, feats.sensors, seq))
    return out


def _columns_for(features, have, want, model_width):
    """Select ``want`` sensor columns from data carrying ``have`` sensors."""
    if tuple(have) == tuple(want):
        return features
    if set(want) <= set(have):
        return select_sensors(features, have, want)
    raise ValidationError(
        f"dataset feature width {features.shape[-1]} does not match model input width "
        f"{model_width} (model sensors {list(want)} not all present in data)")


def _model_data(ckpt, data):
    want = ckpt.spec.sensors or tuple(range(ckpt.spec.n_sensors))
    return [(_columns_for(f, have, want, ckpt.spec.input_dim), seq) for f, have, seq in data]


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------

def cmd_synth(run):
    c = run.config
    spec = DatasetSpec(
        kind=c["kind"], n_sequences=int(c["n_sequences"]), seq_len=int(c["seq_len"]),
        fps=float(c["fps"]), seed=int(c["seed"]),
        planted_joints=_parse_int_list(c["planted_joints"]),
        max_amplitude_deg=float(c["max_amplitude_deg"]), max_freq_hz=float(c["max_freq_hz"]),
        n_components=int(c["n_components"]), noise_scale=float(c["noise_scale"]),
    )
    if spec.kind == "file":
        raise ValidationError("synth generates data; kind 'file' is only valid for loading")
    data = planted_signal_dataset(spec) if spec.kind == "planted_signal" else synthesize_dataset(spec)
    for i, (features, seq) in enumerate(data):
        pose_path = run.out / f"seq_{i:04d}.pose.ndjson"
        imu_path = run.out / f"seq_{i:04d}.imu.ndjson"
        write_pose_sequence(pose_path, seq)
        write_imu_features(imu_path, features, ALL_SENSORS, spec.fps)
        run.wrote(pose_path)
        run.wrote(imu_path)
    run.write_json("dataset.json", spec.to_dict())
    print(f"synth: wrote {len(data)} pose files and {len(data)} IMU files, "
          f"{spec.seq_len} frames each, to {run.out}")


def cmd_train(run):
    c = run.config
    if not c["data"]:
        raise ValidationError("train needs --data")
    data = _load_dataset(c["data"], run, c["split"])
    have = data[0][1]
    sensors = _resolve_sensors(c["sensors"], run)
    use = tuple(sensors) if sensors is not None else tuple(have)
    c["sensors"] = list(use)
    variant = c["variant"]
    spec = ModelSpec(
        variant, n_sensors=len(use), hidden=int(c["hidden"]), layers=int(c["layers"]),
        heads=int(c["heads"]) if variant == "transformer" else None,
        ff_dim=c["ff_dim"], seed=int(c["seed"]), sensors=use,
    )
    cfg = TrainConfig(epochs=int(c["epochs"]), learning_rate=float(c["learning_rate"]),
                      batch_size=int(c["batch_size"]), window_len=int(c["window_len"]),
                      optimizer=c["optimizer"], seed=int(c["seed"]))
    windows = []
    for f, have_i, seq in data:
        cols = _columns_for(f, have_i, use, spec.input_dim)
        windows.extend(make_windows(cols, seq.targets(), cfg.window_len))

    def progress(epoch, loss):
        log.info("epoch %d/%d loss %.6g", epoch + 1, cfg.epochs, loss)

    ckpt = train(spec, cfg, windows, progress=progress)
    path = run.out / "checkpoint.json"
    save_checkpoint(path, ckpt)
    run.wrote(path)
    print(f"train: {variant} on {len(use)} sensors, {len(windows)} windows, "
          f"final loss {ckpt.final_train_loss:.6g} -> {path}")


def _parse_labelled(items):
    labelled = {}
    for item in items:
        label, sep, path = str(item).partition("=")
        if not sep:
            label, path = Path(item).name, item
        if label in labelled:
            raise ValidationError(f"duplicate dataset label {label!r}")
        labelled[label] = path
    return labelled


def cmd_ablate(run):
    c = run.config
    if not c["checkpoint"] or not c["data"]:
        raise ValidationError("ablate needs --checkpoint and --data")
    ckpt_path = run.read(c["checkpoint"])
    ckpt = load_checkpoint(ckpt_path)
    items = c["data"] if isinstance(c["data"], list) else [c["data"]]
    datasets = {label: _model_data(ckpt, _load_dataset(path, run, c["split"]))
                for label, path in _parse_labelled(items).items()}
    baseline = Baseline(c["baseline"])
    reports = per_dataset_ablation(ckpt, datasets, baseline, n_jobs=int(c["n_jobs"]),
                                   model_id=str(ckpt_path))
    for label, report in reports.items():
        path = run.out / f"ablation_{label}.json"
        atomic_write_text(path, report.to_json())
        run.wrote(path)
        csv = run.out / f"ablation_{label}.csv"
        atomic_write_text(csv, report.to_csv())
        run.wrote(csv)
        top = rank_sensors(report, min(6, len(report.scores)))
        print(f"ablate[{label}]: base loss {report.base_loss:.6g}, top "
              + ", ".join(JOINT_NAMES[j] for j in top))


def cmd_rank(run):
    c = run.config
    if not c["report"]:
        raise ValidationError("rank needs --report")
    report = AttributionReport.from_json(run.read(c["report"]).read_text())
    chosen = rank_sensors(report, int(c["k"]))
    run.write_json("sensors.json", {"sensors": list(chosen), "names": [JOINT_NAMES[j] for j in chosen]})
    print("rank: " + ", ".join(f"{j}:{JOINT_NAMES[j]}" for j in chosen))


def _evaluate_path(run, ckpt_path, data_dir, split):
    ckpt = load_checkpoint(run.read(ckpt_path))
    data = _model_data(ckpt, _load_dataset(data_dir, run, split))
    return evaluate(ckpt, data, model_id=str(ckpt_path), dataset_id=str(data_dir))


def cmd_eval(run):
    c = run.config
    if not c["checkpoint"] or not c["data"]:
        raise ValidationError("eval needs --checkpoint and --data")
    report = _evaluate_path(run, c["checkpoint"], c["data"], c["split"])
    if not c["compare"]:
        run.write_json("metrics.json", report.to_dict())
        print("eval: " + ", ".join(f"{k} {getattr(report, k):.6g}" for k in METRIC_FIELDS))
        return
    other = _evaluate_path(run, c["compare"], c["data"], c["split"])
    deltas = {k: getattr(other, k) - getattr(report, k) for k in METRIC_FIELDS}
    run.write_json("metrics_a.json", report.to_dict())
    run.write_json("metrics_b.json", other.to_dict())
    run.write_json("comparison.json", {"a": report.to_dict(), "b": other.to_dict(), "delta_b_minus_a": deltas})
    print(f"{'metric':<16}{'a':>12}{'b':>12}{'b - a':>12}")
    for k in METRIC_FIELDS:
        print(f"{k:<16}{getattr(report, k):>12.6g}{getattr(other, k):>12.6g}{deltas[k]:>12.6g}")


COMMANDS = {"synth": cmd_synth, "train": cmd_train, "ablate": cmd_ablate,
            "rank": cmd_rank, "eval": cmd_eval}


# ---------------------------------------------------------------------------
# argument parsing
# ---------------------------------------------------------------------------

def build_parser():
    parser = argparse.ArgumentParser(prog="imuplace", description=__doc__.strip().splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="JSON file with defaults for this command")
        p.add_argument("--seed", type=int)
        p.add_argument("--out", help="output directory")

    p = sub.add_parser("synth", help="generate pose and IMU files")
    common(p)
    p.add_argument("--kind", choices=["procedural", "planted_signal"])
    p.add_argument("--n-sequences", type=int)
    p.add_argument("--seq-len", type=int)
    p.add_argument("--fps", type=float)
    p.add_argument("--planted-joints", help="comma-separated joint indices")
    p.add_argument("--max-amplitude-deg", type=float)
    p.add_argument("--max-freq-hz", type=float)
    p.add_argument("--n-components", type=int)
    p.add_argument("--noise-scale", type=float)

    p = sub.add_parser("train", help="train a pose regressor on the even-indexed sequences")
    common(p)
    p.add_argument("--data", help="directory written by synth")
    p.add_argument("--variant", choices=["birnn", "transformer"])
    p.add_argument("--sensors", help="comma-separated joints or a sensors.json from rank")
    p.add_argument("--hidden", type=int)
    p.add_argument("--layers", type=int)
    p.add_argument("--heads", type=int)
    p.add_argument("--ff-dim", type=int)
    p.add_argument("--epochs", type=int)
    p.add_argument("--learning-rate", type=float)
    p.add_argument("--batch-size", type=int)
    p.add_argument("--window-len", type=int)
    p.add_argument("--optimizer", choices=["adam", "sgd"])
    p.add_argument("--split", choices=["even", "odd", "all"])

    p = sub.add_parser("ablate", help="feature-ablation scores per sensor")
    common(p)
    p.add_argument("--checkpoint")
    p.add_argument("--data", action="append", help="[LABEL=]DIR; repeat for several datasets")
    p.add_argument("--baseline", choices=["zero", "dataset_mean"])
    p.add_argument("--split", choices=["even", "odd", "all"])
    p.add_argument("--n-jobs", type=int)

    p = sub.add_parser("rank", help="pick the k most important sensors from a report")
    common(p)
    p.add_argument("--report")
    p.add_argument("--k", type=int)

    p = sub.add_parser("eval", help="pose metrics on the odd-indexed sequences")
    common(p)
    p.add_argument("--checkpoint")
    p.add_argument("--data")
    p.add_argument("--compare", help="second checkpoint for a side-by-side report")
    p.add_argument("--split", choices=["even", "odd", "all"])
    return parser


def resolve_config(command, args):
    config = dict(DEFAULTS[command])
    if args.config:
        loaded = read_json(args.config)
        unknown = sorted(set(loaded) - set(config))
        if unknown:
            raise ValidationError(f"unknown config keys for {command}: {unknown}")
        config.update(loaded)
    for key in config:
        value = getattr(args, key, None)
        if value is not None:
            config[key] = value
    return config


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s", stream=sys.stderr)
    try:
        run = Run(args.command, resolve_config(args.command, args))
        if args.config:
            run.read(args.config)
        COMMANDS[args.command](run)
        run.finish()
    except TrainingDivergedError as err:
        print(f"error: training diverged at step {err.step} (loss {err.loss})", file=sys.stderr)
        return EXIT_DIVERGED
    except (ValidationError, FileNotFoundError) as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_VALIDATION
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
