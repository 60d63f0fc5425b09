"""
Feature ablation over joint-grouped IMU features.

Each sensor slot owns a contiguous block of 12 features. Ablating a slot
replaces that block with a baseline at every frame; the slot's score is the
resulting increase in MSE over a held-out evaluation set.
"""

from __future__ import annotations

import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from imuplace.errors import ValidationError
from imuplace.imusynth import FEATURES_PER_SENSOR, validate_sensors
from imuplace.kinematics import JOINT_NAMES
from imuplace.neuralseq.model import Checkpoint
from imuplace.neuralseq.train import PADDED_FRAMES, dataset_mse, make_windows

BASELINE_KINDS = ("zero", "dataset_mean")


@dataclass
class Baseline:
    kind: str = "zero"
    values: np.ndarray | None = None

    def __post_init__(self):
        if self.kind not in BASELINE_KINDS:
            raise ValidationError(f"unknown baseline kind {self.kind!r}")
        if self.values is not None:
            self.values = np.asarray(self.values, dtype=np.float64)

    @classmethod
    def dataset_mean(cls, eval_set):
        frames = np.concatenate([np.asarray(f) for f, _ in eval_set], axis=0)
        return cls("dataset_mean", frames.mean(axis=0))

    def block(self, slot, width):
        if self.kind == "zero":
            return np.zeros(FEATURES_PER_SENSOR)
        if self.values is None:
            raise ValidationError("dataset_mean baseline has no values; use Baseline.dataset_mean")
        if self.values.shape != (width,):
            raise ValidationError(
                f"baseline has {self.values.shape[0]} values, features have {width}")
        return self.values[slot * FEATURES_PER_SENSOR:(slot + 1) * FEATURES_PER_SENSOR]


def ablate_joint(features, joint_slot, baseline=None):
    """Copy of ``features`` with sensor slot ``joint_slot`` set to the baseline.

    ``baseline`` may be a :class:`Baseline`, ``None`` (zeros), or an array
    broadcastable to the ``(T, 12)`` block (e.g. per-frame values).
    """
    features = np.array(features, dtype=np.float64, copy=True)
    n_slots = features.shape[-1] // FEATURES_PER_SENSOR
    if not 0 <= joint_slot < n_slots:
        raise ValidationError(f"slot {joint_slot} out of range for {n_slots} sensors")
    lo, hi = joint_slot * FEATURES_PER_SENSOR, (joint_slot + 1) * FEATURES_PER_SENSOR
    if baseline is None:
        baseline = Baseline()
    if isinstance(baseline, Baseline):
        features[..., lo:hi] = baseline.block(joint_slot, features.shape[-1])
    else:
        features[..., lo:hi] = np.asarray(baseline, dtype=np.float64)
    return features


@dataclass
class AttributionReport:
    """Per-joint importance: MSE increase when that joint's features are ablated."""

    scores: dict
    base_loss: float
    baseline_kind: str = "zero"
    model_id: str = ""
    dataset_id: str = ""
    names: tuple = field(default=JOINT_NAMES, repr=False)

    def to_dict(self):
        return {
            "model_id": self.model_id,
            "dataset_id": self.dataset_id,
            "baseline": self.baseline_kind,
            "base_loss": float(self.base_loss),
            "scores": {self.names[j]: float(s) for j, s in sorted(self.scores.items())},
        }

    def to_json(self):
        return json.dumps(self.to_dict(), indent=2) + "\n"

    @classmethod
    def from_dict(cls, d, names=JOINT_NAMES):
        index = {n: i for i, n in enumerate(names)}
        unknown = [k for k in d["scores"] if k not in index]
        if unknown:
            raise ValidationError(f"unknown joint names in report: {unknown}")
        return cls(
            scores={index[k]: float(v) for k, v in d["scores"].items()},
            base_loss=float(d["base_loss"]),
            baseline_kind=d.get("baseline", "zero"),
            model_id=d.get("model_id", ""),
            dataset_id=d.get("dataset_id", ""),
            names=tuple(names),
        )

    @classmethod
    def from_json(cls, text):
        return cls.from_dict(json.loads(text))

    def to_csv(self):
        rows = ["joint,name,score"]
        rows += [f"{j},{self.names[j]},{float(s)!r}" for j, s in sorted(self.scores.items())]
        return "\n".join(rows) + "\n"


def _callable_mse(fn, features, targets):
    pred = np.asarray(fn(features), dtype=np.float64)
    truth = targets[:len(features) - PADDED_FRAMES]
    if pred.shape != truth.shape:
        raise ValidationError(f"model output shape {pred.shape} != target shape {truth.shape}")
    return float(((pred - truth) ** 2).mean())


def feature_ablation(model, eval_set, baseline=None, window_len=None, order=None,
                     n_jobs=1, model_id="", dataset_id=""):
    """Score every sensor slot of ``model`` by ablation on ``eval_set``.

    Parameters
    ----------
    model : Checkpoint or callable
        A checkpoint, or a callable mapping features ``(T, N*12)`` to raw
        outputs for the first ``T - 2`` frames.
    eval_set : list of (features, targets)
        ``features`` is ``(T, N*12)``; ``targets`` is ``(T, 216)`` or a
        :class:`PoseSequence`. Losses are averaged per sequence.
    baseline : Baseline, optional
        Defaults to zeros.
    order : sequence of int, optional
        Processing order of slots; results do not depend on it.
    n_jobs : int
        Threads used to evaluate the independent perturbations.
    """
    if not eval_set:
        raise ValidationError("evaluation set is empty")
    baseline = baseline or Baseline()
    if isinstance(model, Checkpoint):
        spec = model.spec
        width = spec.input_dim
        sensors = spec.sensors or tuple(range(spec.n_sensors))
        window_len = window_len or model.train_config.get("window_len", 120)
    else:
        width = np.shape(eval_set[0][0])[-1]
        sensors = tuple(range(width // FEATURES_PER_SENSOR))
    sensors = validate_sensors(sensors)

    feats, targets = [], []
    for f, y in eval_set:
        y = y.targets() if hasattr(y, "targets") else np.asarray(y, dtype=np.float64)
        f = np.asarray(f, dtype=np.float64)
        if f.shape[-1] != width:
            raise ValidationError(
                f"feature width {f.shape[-1]} does not match model input width {width}")
        feats.append(f)
        targets.append(y)

    def sequence_loss(f, y):
        if isinstance(model, Checkpoint):
            return dataset_mse(model.spec, model.params, make_windows(f, y, window_len))
        return _callable_mse(model, f, y)

    def loss_with(slot):
        return float(np.mean([
            sequence_loss(f if slot is None else ablate_joint(f, slot, baseline), y)
            for f, y in zip(feats, targets)
        ]))

    base = loss_with(None)
    slots = list(range(len(sensors))) if order is None else list(order)
    if sorted(slots) != list(range(len(sensors))):
        raise ValidationError("order must be a permutation of the sensor slots")
    if n_jobs > 1:
        with ThreadPoolExecutor(n_jobs) as pool:
            losses = dict(zip(slots, pool.map(loss_with, slots)))
    else:
        losses = {s: loss_with(s) for s in slots}
    scores = {sensors[s]: losses[s] - base for s in range(len(sensors))}
    return AttributionReport(scores, base, baseline.kind, model_id, dataset_id)


def rank_sensors(report, k):
    """The ``k`` highest-scoring joints, best first; ties go to the lower index."""
    n = len(report.scores)
    if not 1 <= k <= n:
        raise ValidationError(f"k must lie in [1, {n}], got {k}")
    ranked = sorted(report.scores, key=lambda j: (-report.scores[j], j))
    return tuple(ranked[:k])


def per_dataset_ablation(model, datasets, baseline=None, **kw):
    """One :class:`AttributionReport` per labelled evaluation set.

    A ``dataset_mean`` baseline without values is recomputed per dataset.
    """
    reports = {}
    for label, eval_set in datasets.items():
        b = baseline
        if b is not None and b.kind == "dataset_mean" and b.values is None:
            b = Baseline.dataset_mean(eval_set)
        reports[label] = feature_ablation(model, eval_set, b, dataset_id=label, **kw)
    return reports
