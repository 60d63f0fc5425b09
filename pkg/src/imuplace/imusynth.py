"""
Synthetic IMU data from pose sequences.

An IMU sample is 12 scalars: the sensor's global orientation (3x3, row-major)
followed by its linear acceleration (3-vector, m/s^2). Acceleration comes from
the second finite difference of the sensor position over consecutive frames.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from imuplace.errors import SequenceTooShortError, ValidationError
from imuplace.fileio import atomic_write_text
from imuplace.kinematics import forward_kinematics

FEATURES_PER_SENSOR = 12
ALL_SENSORS = tuple(range(24))


def validate_sensors(sensors, n_joints=24):
    sensors = tuple(int(s) for s in sensors)
    if not sensors:
        raise ValidationError("sensor set must not be empty")
    if len(set(sensors)) != len(sensors):
        raise ValidationError(f"sensor set has duplicates: {sensors}")
    if any(not 0 <= s < n_joints for s in sensors):
        raise ValidationError(f"sensor indices must lie in [0, {n_joints - 1}]: {sensors}")
    return sensors


def acceleration_from_positions(v, fps=60.0):
    """Per-frame acceleration from per-frame positions.

    ``a[i] = (v[i] + v[i+2] - 2 v[i+1]) * fps**2`` for ``i <= T - 3``; the last
    computable value is repeated into the final two frames so the output has
    the same length as the input.

    Parameters
    ----------
    v : array_like, shape (T, ...)
        Positions in meters; trailing dimensions are carried through.
    fps : float
        Frame rate in Hz.
    """
    v = np.asarray(v, dtype=np.float64)
    if not fps > 0:
        raise ValidationError(f"fps must be positive, got {fps}")
    if v.shape[0] < 3:
        raise SequenceTooShortError(
            f"sequence too short: acceleration needs at least 3 frames, got {v.shape[0]}"
        )
    core = (v[:-2] + v[2:] - 2.0 * v[1:-1]) * (fps * fps)
    return np.concatenate([core, core[-1:], core[-1:]], axis=0)


def argmax_vertex_per_joint(w):
    """Column index of the largest weight in each row; ties go to the lowest index."""
    w = np.asarray(w, dtype=np.float64)
    if w.ndim != 2 or w.size == 0:
        raise ValidationError(f"weight matrix must be non-empty 2-D, got shape {w.shape}")
    if np.any(w < 0) or not np.all(np.isfinite(w)):
        raise ValidationError("weights must be finite and non-negative")
    return np.argmax(w, axis=1)


@dataclass
class ImuSequence:
    """Per-frame synthetic readings for an ordered set of sensors.

    ``accel`` has shape ``(T, S, 3)`` and ``orient`` has shape ``(T, S, 3, 3)``.
    """

    accel: np.ndarray
    orient: np.ndarray
    sensors: tuple
    fps: float = 60.0

    def __len__(self):
        return self.accel.shape[0]

    def features(self):
        return flatten_features(self.accel, self.orient)


def synthesize_imu(seq, skel, sensors=ALL_SENSORS):
    """Run forward kinematics per frame and read out virtual IMUs at joints.

    Each sensor's orientation is the global rotation of its joint; its
    acceleration is the finite-difference acceleration of the joint position.
    """
    sensors = validate_sensors(sensors, skel.n_joints)
    if len(seq) < 3:
        raise SequenceTooShortError(
            f"sequence too short: IMU synthesis needs at least 3 frames, got {len(seq)}"
        )
    global_rot, positions = forward_kinematics(seq.rot, skel)
    idx = list(sensors)
    accel = acceleration_from_positions(positions[:, idx, :], seq.fps)
    return ImuSequence(accel, global_rot[:, idx], sensors, seq.fps)


def flatten_features(accel, orient):
    """Per-frame feature vectors of width ``S * 12``.

    For each sensor: 9 orientation scalars (row-major) then 3 acceleration
    scalars, sensors in the given order.
    """
    accel = np.asarray(accel, dtype=np.float64)
    orient = np.asarray(orient, dtype=np.float64)
    if accel.ndim != 3 or orient.ndim != 4 or accel.shape[:2] != orient.shape[:2]:
        raise ValidationError(
            f"inconsistent frame widths: accel {accel.shape}, orient {orient.shape}"
        )
    t, s = accel.shape[:2]
    block = np.concatenate([orient.reshape(t, s, 9), accel], axis=-1)
    return block.reshape(t, s * FEATURES_PER_SENSOR)


def flatten_frames(frames):
    """Flatten a ragged per-frame list of ``(accel, orient)`` sensor readings."""
    widths = {len(f) for f in frames}
    if len(widths) != 1:
        raise ValidationError(f"inconsistent sensor counts across frames: {sorted(widths)}")
    accel = np.array([[a for a, _ in f] for f in frames], dtype=np.float64)
    orient = np.array([[o for _, o in f] for f in frames], dtype=np.float64)
    return flatten_features(accel, orient)


def sensor_columns(sensors, subset):
    """Column indices selecting ``subset`` out of features laid out for ``sensors``."""
    pos = {s: i for i, s in enumerate(sensors)}
    missing = [s for s in subset if s not in pos]
    if missing:
        raise ValidationError(f"sensors {missing} not present in {tuple(sensors)}")
    return np.concatenate([
        np.arange(pos[s] * FEATURES_PER_SENSOR, (pos[s] + 1) * FEATURES_PER_SENSOR)
        for s in subset
    ])


def select_sensors(features, sensors, subset):
    return np.asarray(features)[:, sensor_columns(sensors, subset)]


# ---------------------------------------------------------------------------
# IMU sequence file format
# ---------------------------------------------------------------------------

@dataclass
class ImuFeatureFile:
    features: np.ndarray
    sensors: tuple
    fps: float


def imu_features_to_ndjson(features, sensors, fps):
    features = np.asarray(features, dtype=np.float64)
    sensors = validate_sensors(sensors)
    if features.ndim != 2 or features.shape[1] != len(sensors) * FEATURES_PER_SENSOR:
        raise ValidationError(
            f"features of shape {features.shape} do not match {len(sensors)} sensors"
        )
    out = [json.dumps({"version": 1, "fps": fps, "sensors": list(sensors)},
                      separators=(",", ":")) + "\n"]
    for row in features:
        out.append(json.dumps({"feat": [float(x) for x in row]}, separators=(",", ":")) + "\n")
    return "".join(out)


def imu_features_from_ndjson(text):
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if not lines:
        raise ValidationError("empty IMU file")
    header = json.loads(lines[0])
    if header.get("version") != 1:
        raise ValidationError(f"unsupported IMU file version {header.get('version')!r}")
    sensors = validate_sensors(header["sensors"])
    width = len(sensors) * FEATURES_PER_SENSOR
    rows = [json.loads(ln)["feat"] for ln in lines[1:]]
    if any(len(r) != width for r in rows):
        raise ValidationError(f"every frame must hold {width} floats")
    feats = np.asarray(rows, dtype=np.float64).reshape(len(rows), width)
    return ImuFeatureFile(feats, sensors, header["fps"])


def write_imu_features(path, features, sensors, fps):
    atomic_write_text(Path(path), imu_features_to_ndjson(features, sensors, fps))


def read_imu_features(path):
    return imu_features_from_ndjson(Path(path).read_text())
