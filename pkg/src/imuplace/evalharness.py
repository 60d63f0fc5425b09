"""
Pose-error metrics and synthetic dataset fixtures.

Four pose metrics: MSE on raw network outputs,
mean joint position error (meters), mean local rotation error and mean
global rotation error (degrees).
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass

import numpy as np

from imuplace.errors import ValidationError
from imuplace.imusynth import ALL_SENSORS, synthesize_imu, validate_sensors
from imuplace.kinematics import (
    PoseSequence,
    _geodesic_rad,
    forward_kinematics,
    project_to_rotation,
    rot_axis_angle,
    smpl_skeleton,
)
from imuplace.neuralseq.model import Checkpoint
from imuplace.neuralseq.train import PADDED_FRAMES, make_windows, predict_windows

# ---------------------------------------------------------------------------
# Metrics
# ---------------------------------------------------------------------------


def _as_rotations(pred, n_joints=24):
    pred = np.asarray(pred, dtype=np.float64)
    if pred.shape[-2:] == (3, 3) and pred.ndim >= 3:
        return pred
    return pred.reshape(pred.shape[:-1] + (n_joints, 3, 3))


def _check_lengths(pred, truth):
    if pred.shape[0] != truth.shape[0]:
        raise ValidationError(
            f"prediction has {pred.shape[0]} frames but truth has {truth.shape[0]}")


def local_rotation_error(pred, truth):
    """Mean geodesic angle (degrees) between projected predictions and truth.

    ``pred`` holds raw outputs ``(T, 216)`` or ``(T, 24, 3, 3)``; ``truth``
    holds local rotations ``(T, 24, 3, 3)``.
    """
    truth = np.asarray(truth, dtype=np.float64)
    pred = _as_rotations(pred, truth.shape[-3])
    _check_lengths(pred, truth)
    rot = project_to_rotation(pred)
    return float(np.degrees(_geodesic_rad(rot, truth)).mean())


def global_rotation_error(pred, truth, skel):
    """Mean geodesic angle (degrees) between global joint rotations after FK."""
    truth = np.asarray(truth, dtype=np.float64)
    pred = _as_rotations(pred, truth.shape[-3])
    _check_lengths(pred, truth)
    g_pred, _ = forward_kinematics(project_to_rotation(pred), skel, validate=False)
    g_true, _ = forward_kinematics(truth, skel)
    return float(np.degrees(_geodesic_rad(g_pred, g_true)).mean())


def position_error(pred, truth, skel):
    """Mean Euclidean joint position error (meters) after FK, root pinned."""
    truth = np.asarray(truth, dtype=np.float64)
    pred = _as_rotations(pred, truth.shape[-3])
    _check_lengths(pred, truth)
    _, p_pred = forward_kinematics(project_to_rotation(pred), skel, validate=False)
    _, p_true = forward_kinematics(truth, skel)
    return float(np.linalg.norm(p_pred - p_true, axis=-1).mean())


@dataclass
class MetricsReport:
    crit_score: float
    pos_err: float
    loc_rot_err: float
    global_rot_err: float
    crit_type: str = "MSE"
    model_id: str = ""
    dataset_id: str = ""

    def to_dict(self):
        return asdict(self)

    def to_json(self):
        return json.dumps(self.to_dict(), sort_keys=True, indent=2) + "\n"

    @classmethod
    def from_json(cls, text):
        return cls(**json.loads(text))


METRIC_FIELDS = ("crit_score", "pos_err", "loc_rot_err", "global_rot_err")


def compute_metrics(preds, truths, skel, model_id="", dataset_id=""):
    """Pool per-frame predictions over sequences into one report.

    ``preds`` are raw ``(T_i, 216)`` arrays and ``truths`` the matching local
    rotations ``(T_i, 24, 3, 3)``.
    """
    if not preds:
        raise ValidationError("nothing to evaluate")
    for p, t in zip(preds, truths):
        _check_lengths(np.asarray(p), np.asarray(t))
    pred = np.concatenate([np.asarray(p).reshape(len(p), -1) for p in preds])
    truth = np.concatenate([np.asarray(t) for t in truths])
    flat_truth = truth.reshape(len(truth), -1)
    if pred.shape != flat_truth.shape:
        raise ValidationError(f"prediction width {pred.shape} != target width {flat_truth.shape}")
    return MetricsReport(
        crit_score=float(((pred - flat_truth) ** 2).mean()),
        pos_err=position_error(pred, truth, skel),
        loc_rot_err=local_rotation_error(pred, truth),
        global_rot_err=global_rotation_error(pred, truth, skel),
        model_id=model_id,
        dataset_id=dataset_id,
    )


def predict_sequence(ckpt, features, window_len):
    """Raw outputs for the usable (unpadded) frames of one sequence."""
    dummy = np.zeros((features.shape[0], 1))
    windows = make_windows(features, dummy, window_len)
    return np.concatenate(predict_windows(ckpt.spec, ckpt.params, windows), axis=0)


def evaluate(model, data, skel=None, window_len=None, model_id="", dataset_id=""):
    """Run the model over each sequence and compute all four metrics.

    Parameters
    ----------
    model : Checkpoint or callable
        A checkpoint, or any callable mapping features ``(T, F)`` to raw
        outputs for the first ``T - 2`` frames.
    data : list of (features, PoseSequence)
    window_len : int, optional
        Inference window; defaults to the checkpoint's training window.
    """
    skel = skel or smpl_skeleton()
    if isinstance(model, Checkpoint):
        width = model.spec.input_dim
        window_len = window_len or model.train_config.get("window_len", 120)
        bad = [f.shape[-1] for f, _ in data if f.shape[-1] != width]
        if bad:
            raise ValidationError(
                f"dataset feature width {bad[0]} does not match model input width {width}")

        def predictor(f):
            return predict_sequence(model, f, window_len)
    else:
        predictor = model
    preds, truths = [], []
    for features, seq in data:
        preds.append(predictor(np.asarray(features)))
        truths.append(seq.rot[:len(seq) - PADDED_FRAMES])
    return compute_metrics(preds, truths, skel, model_id, dataset_id)


# ---------------------------------------------------------------------------
# Dataset fixtures
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class DatasetSpec:
    """Seeded description of a synthetic dataset.

    Joint rotation axes and per-joint amplitude budgets are drawn once per
    dataset; phases, frequencies and component weights per sequence.
    """

    kind: str = "procedural"
    n_sequences: int = 8
    seq_len: int = 122
    fps: float = 60.0
    seed: int = 0
    planted_joints: tuple | None = None
    max_amplitude_deg: float = 45.0
    max_freq_hz: float = 2.0
    n_components: int = 3
    noise_scale: float = 1.0

    def __post_init__(self):
        if self.kind not in ("procedural", "planted_signal", "file"):
            raise ValidationError(f"unknown dataset kind {self.kind!r}")
        if self.planted_joints is not None:
            object.__setattr__(self, "planted_joints", validate_sensors(self.planted_joints))
        if self.kind == "planted_signal" and not self.planted_joints:
            raise ValidationError("planted_signal datasets need planted_joints")
        if not 0 <= self.max_amplitude_deg <= 45.0:
            raise ValidationError("max_amplitude_deg must lie in [0, 45]")
        if not 0 < self.max_freq_hz <= 2.0:
            raise ValidationError("max_freq_hz must lie in (0, 2]")
        if self.n_sequences < 1 or self.n_components < 1:
            raise ValidationError("n_sequences and n_components must be positive")
        if not self.fps > 0:
            raise ValidationError("fps must be positive")

    def to_dict(self):
        d = asdict(self)
        if d["planted_joints"] is not None:
            d["planted_joints"] = list(d["planted_joints"])
        return d


def _unit_vectors(rng, n):
    v = rng.standard_normal((n, 3))
    return v / np.linalg.norm(v, axis=1, keepdims=True)


def procedural_pose_dataset(spec, n_joints=24):
    """Sum-of-sinusoids joint rotations about per-joint axes.

    ``theta_j(t) = sum_k A_jk sin(2 pi f_jk t + phi_jk)`` with
    ``sum_k |A_jk| <= max_amplitude_deg`` and ``f_jk <= max_freq_hz``.
    """
    rng = np.random.default_rng(spec.seed)
    axes = _unit_vectors(rng, n_joints)
    budget = rng.uniform(0.0, spec.max_amplitude_deg, size=n_joints)
    t = np.arange(spec.seq_len) / spec.fps
    out = []
    for _ in range(spec.n_sequences):
        w = rng.dirichlet(np.ones(spec.n_components), size=n_joints)
        amp = budget[:, None] * w
        freq = rng.uniform(0.0, spec.max_freq_hz, size=(n_joints, spec.n_components))
        phase = rng.uniform(0.0, 2 * np.pi, size=(n_joints, spec.n_components))
        theta = (amp[None] * np.sin(2 * np.pi * freq[None] * t[:, None, None]
                                    + phase[None])).sum(axis=-1)  # (T, J)
        rot = rot_axis_angle(axes[None], theta)
        out.append(PoseSequence(rot, spec.fps))
    return out


def synthesize_dataset(spec, skel=None, sensors=ALL_SENSORS):
    """Procedural poses with their synthetic IMU features: ``[(features, seq)]``."""
    skel = skel or smpl_skeleton()
    poses = procedural_pose_dataset(spec, skel.n_joints)
    return [(synthesize_imu(seq, skel, sensors).features(), seq) for seq in poses]


def planted_signal_dataset(spec, skel=None):
    """Only the planted joints carry pose information.

    Features of every other joint are replaced by seeded Gaussian noise drawn
    independently of the poses. Targets stay the true poses.
    """
    if not spec.planted_joints:
        raise ValidationError("planted_signal_dataset needs planted_joints")
    skel = skel or smpl_skeleton()
    data = synthesize_dataset(spec, skel, ALL_SENSORS)
    planted = set(spec.planted_joints)
    noise_rng = np.random.default_rng([spec.seed, 0x5EED])
    out = []
    for features, seq in data:
        features = features.copy()
        for j in ALL_SENSORS:
            if j not in planted:
                block = slice(12 * j, 12 * (j + 1))
                features[:, block] = spec.noise_scale * noise_rng.standard_normal(
                    (features.shape[0], 12))
        out.append((features, seq))
    return out


def split_by_parity(items):
    """Even-indexed items for training, odd-indexed for evaluation."""
    return list(items[0::2]), list(items[1::2])
