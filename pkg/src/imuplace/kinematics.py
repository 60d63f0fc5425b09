"""
Rotation-matrix algebra on SO(3) and forward kinematics over a joint tree.

Arrays follow the convention ``(*, 3, 3)`` for rotations and ``(*, J, 3, 3)``
for poses, where leading dimensions are batch (usually time) dimensions.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from imuplace.errors import DegenerateInputError, ValidationError
from imuplace.fileio import atomic_write_text

ROT_TOL = 1e-6

JOINT_NAMES = (
    "Pelvis", "L Hip", "R Hip", "Spine1", "L Knee", "R Knee",
    "Spine2", "L Ankle", "R Ankle", "Spine3", "L Foot", "R Foot",
    "Neck", "L Collar", "R Collar", "Head", "L Shoulder", "R Shoulder",
    "L Elbow", "R Elbow", "L Wrist", "R Wrist", "L Hand", "R Hand",
)

SMPL_PARENTS = (
    -1, 0, 0, 0, 1, 2, 3, 4, 5, 6, 7, 8,
    9, 9, 9, 12, 13, 14, 16, 17, 18, 19, 20, 21,
)

# Neutral rest-pose joint locations (meters, y up, x toward the body's left).
_REST_JOINTS = np.array([
    [-0.0018, -0.2233, 0.0282],   # Pelvis
    [0.0695, -0.3141, 0.0239],    # L Hip
    [-0.0677, -0.3147, 0.0190],   # R Hip
    [-0.0025, -0.1089, 0.0015],   # Spine1
    [0.1040, -0.6851, 0.0197],    # L Knee
    [-0.1065, -0.6883, 0.0148],   # R Knee
    [0.0054, 0.0250, 0.0282],     # Spine2
    [0.0893, -1.0895, -0.0185],   # L Ankle
    [-0.0917, -1.0893, -0.0224],  # R Ankle
    [0.0018, 0.0798, 0.0305],     # Spine3
    [0.1176, -1.1450, 0.1039],    # L Foot
    [-0.1166, -1.1427, 0.1060],   # R Foot
    [-0.0002, 0.2932, -0.0125],   # Neck
    [0.0805, 0.1973, 0.0141],     # L Collar
    [-0.0745, 0.1966, 0.0104],    # R Collar
    [0.0050, 0.3665, 0.0353],     # Head
    [0.1733, 0.2286, 0.0048],     # L Shoulder
    [-0.1686, 0.2298, 0.0028],    # R Shoulder
    [0.4248, 0.2213, -0.0372],    # L Elbow
    [-0.4207, 0.2217, -0.0398],   # R Elbow
    [0.6714, 0.2354, -0.0418],    # L Wrist
    [-0.6727, 0.2350, -0.0442],   # R Wrist
    [0.7585, 0.2283, -0.0528],    # L Hand
    [-0.7573, 0.2285, -0.0549],   # R Hand
])


def _rest_offsets():
    offsets = np.zeros_like(_REST_JOINTS)
    for j in range(1, len(SMPL_PARENTS)):
        offsets[j] = _REST_JOINTS[j] - _REST_JOINTS[SMPL_PARENTS[j]]
    return offsets


SMPL_OFFSETS = _rest_offsets()


@dataclass(frozen=True)
class Skeleton:
    """Kinematic tree: joint names, parent indices and rest-pose bone offsets.

    ``offsets[j]`` is the position of joint ``j`` in its parent's frame at rest.
    The root (index 0) has parent ``-1`` and sits at the origin.
    """

    names: tuple
    parents: tuple
    offsets: np.ndarray = field(repr=False)

    def __post_init__(self):
        parents = tuple(int(p) for p in self.parents)
        offsets = np.asarray(self.offsets, dtype=np.float64)
        object.__setattr__(self, "parents", parents)
        object.__setattr__(self, "names", tuple(self.names))
        object.__setattr__(self, "offsets", offsets)
        n = len(parents)
        if n == 0 or parents[0] != -1:
            raise ValidationError("joint 0 must be the root (parent -1)")
        if any(not 0 <= parents[j] < j for j in range(1, n)):
            raise ValidationError("parents must satisfy 0 <= parents[j] < j for j > 0")
        if len(self.names) != n or offsets.shape != (n, 3):
            raise ValidationError(
                f"expected {n} names and offsets of shape ({n}, 3), "
                f"got {len(self.names)} names and {offsets.shape}"
            )

    @property
    def n_joints(self):
        return len(self.parents)

    def with_offsets(self, offsets):
        return Skeleton(self.names, self.parents, offsets)


def smpl_skeleton():
    """The 24-joint SMPL tree with the bundled neutral rest offsets."""
    return Skeleton(JOINT_NAMES, SMPL_PARENTS, SMPL_OFFSETS.copy())


# ---------------------------------------------------------------------------
# SO(3) helpers
# ---------------------------------------------------------------------------

def is_rotation(m, tol=ROT_TOL):
    """Elementwise check of orthonormality and unit determinant, shape ``(*,)``."""
    m = np.asarray(m, dtype=np.float64)
    eye = np.eye(3)
    ortho = np.abs(np.swapaxes(m, -1, -2) @ m - eye).max(axis=(-1, -2)) <= tol
    det = np.abs(np.linalg.det(m) - 1.0) <= tol
    return ortho & det


def validate_rotation(m, tol=ROT_TOL):
    m = np.asarray(m, dtype=np.float64)
    if m.shape[-2:] != (3, 3):
        raise ValidationError(f"rotation arrays must end in (3, 3), got {m.shape}")
    if not np.all(np.isfinite(m)) or not np.all(is_rotation(m, tol)):
        raise ValidationError("input is not a valid rotation matrix")
    return m


def rot_axis_angle(axis, angle_deg):
    """Rodrigues rotation about a unit ``axis`` by ``angle_deg`` degrees.

    ``axis`` may be ``(3,)`` or ``(*, 3)``; ``angle_deg`` broadcasts against the
    leading dimensions.
    """
    axis = np.asarray(axis, dtype=np.float64)
    norm = np.linalg.norm(axis, axis=-1)
    if np.any(np.abs(norm - 1.0) > 1e-9):
        raise ValidationError("rotation axis must be a unit vector")
    theta = np.radians(np.asarray(angle_deg, dtype=np.float64))
    shape = np.broadcast_shapes(axis.shape[:-1], theta.shape)
    axis = np.broadcast_to(axis, shape + (3,))
    theta = np.broadcast_to(theta, shape)
    k = skew(axis)
    s = np.sin(theta)[..., None, None]
    c = np.cos(theta)[..., None, None]
    return np.eye(3) + s * k + (1.0 - c) * (k @ k)


def skew(v):
    v = np.asarray(v, dtype=np.float64)
    out = np.zeros(v.shape[:-1] + (3, 3))
    out[..., 0, 1] = -v[..., 2]
    out[..., 0, 2] = v[..., 1]
    out[..., 1, 0] = v[..., 2]
    out[..., 1, 2] = -v[..., 0]
    out[..., 2, 0] = -v[..., 1]
    out[..., 2, 1] = v[..., 0]
    return out


def rotvec_to_matrix(rotvec):
    """Axis-angle vector (radians, axis scaled by angle) to rotation matrix."""
    rotvec = np.asarray(rotvec, dtype=np.float64)
    theta = np.linalg.norm(rotvec, axis=-1)
    safe = np.where(theta > 0, theta, 1.0)
    axis = rotvec / safe[..., None]
    axis = np.where((theta > 0)[..., None], axis, np.array([1.0, 0.0, 0.0]))
    return rot_axis_angle(axis, np.degrees(theta))


def _geodesic_rad(a, b):
    # atan2 form keeps full precision near 0 and 180 degrees.
    m = np.swapaxes(a, -1, -2) @ b
    cos = (np.trace(m, axis1=-2, axis2=-1) - 1.0) / 2.0
    vee = np.stack([
        m[..., 2, 1] - m[..., 1, 2],
        m[..., 0, 2] - m[..., 2, 0],
        m[..., 1, 0] - m[..., 0, 1],
    ], axis=-1)
    sin = np.linalg.norm(vee, axis=-1) / 2.0
    return np.arctan2(sin, np.clip(cos, -1.0, 1.0))


def geodesic_angle_deg(a, b, validate=True):
    """Minimal rotation angle between ``a`` and ``b`` in degrees, in [0, 180].

    Broadcasts over leading dimensions. Equal to
    ``arccos(clip((trace(a.T @ b) - 1) / 2, -1, 1))``.
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if validate:
        validate_rotation(a)
        validate_rotation(b)
    return np.degrees(_geodesic_rad(a, b))


def project_to_rotation(m, rcond=1e-12):
    """Nearest rotation in Frobenius norm (orthogonal polar factor, det +1).

    Raises :class:`DegenerateInputError` for rank-deficient input.
    """
    m = np.asarray(m, dtype=np.float64)
    if m.shape[-2:] != (3, 3):
        raise ValidationError(f"expected (*, 3, 3), got {m.shape}")
    if not np.all(np.isfinite(m)):
        raise DegenerateInputError("matrix contains non-finite entries")
    u, s, vt = np.linalg.svd(m)
    if np.any(s[..., -1] <= rcond * np.maximum(s[..., 0], np.finfo(float).tiny)):
        raise DegenerateInputError("cannot project a rank-deficient matrix to SO(3)")
    d = np.sign(np.linalg.det(u @ vt))
    u = u.copy()
    u[..., :, -1] *= d[..., None]
    return u @ vt


# ---------------------------------------------------------------------------
# Forward kinematics
# ---------------------------------------------------------------------------

def forward_kinematics(local_rot, skel, validate=True):
    """Global joint rotations and positions from local rotations.

    Parameters
    ----------
    local_rot : array_like, shape (*, J, 3, 3)
        Rotation of each joint relative to its parent frame.
    skel : Skeleton
        Tree with ``J`` joints.

    Returns
    -------
    global_rot : ndarray, shape (*, J, 3, 3)
    positions : ndarray, shape (*, J, 3)
        Joint positions in meters, root pinned at the origin.
    """
    local_rot = np.asarray(local_rot, dtype=np.float64)
    n = skel.n_joints
    if local_rot.shape[-3:] != (n, 3, 3):
        raise ValidationError(
            f"pose must have shape (*, {n}, 3, 3), got {local_rot.shape}"
        )
    if validate:
        validate_rotation(local_rot)
    global_rot = np.empty_like(local_rot)
    positions = np.zeros(local_rot.shape[:-2] + (3,))
    global_rot[..., 0, :, :] = local_rot[..., 0, :, :]
    for j in range(1, n):
        p = skel.parents[j]
        global_rot[..., j, :, :] = global_rot[..., p, :, :] @ local_rot[..., j, :, :]
        positions[..., j, :] = positions[..., p, :] + global_rot[..., p, :, :] @ skel.offsets[j]
    return global_rot, positions


# ---------------------------------------------------------------------------
# Pose sequences and their file format
# ---------------------------------------------------------------------------

@dataclass
class PoseSequence:
    """Local joint rotations over time, ``rot`` of shape ``(T, J, 3, 3)``."""

    rot: np.ndarray
    fps: float = 60.0

    def __post_init__(self):
        self.rot = np.asarray(self.rot, dtype=np.float64)
        if self.rot.ndim != 4 or self.rot.shape[-2:] != (3, 3):
            raise ValidationError(f"pose sequence must be (T, J, 3, 3), got {self.rot.shape}")
        if not self.fps > 0:
            raise ValidationError(f"fps must be positive, got {self.fps}")

    def __len__(self):
        return self.rot.shape[0]

    @property
    def n_joints(self):
        return self.rot.shape[1]

    def targets(self):
        """Flattened regression targets, shape ``(T, J * 9)``."""
        return self.rot.reshape(len(self), -1)


def _dump_line(obj):
    return json.dumps(obj, separators=(",", ":")) + "\n"


def pose_sequence_to_ndjson(seq):
    header = {"version": 1, "fps": seq.fps, "joints": seq.n_joints}
    lines = [_dump_line(header)]
    for frame in seq.rot.reshape(len(seq), -1):
        lines.append(_dump_line({"rot": [float(x) for x in frame]}))
    return "".join(lines)


def pose_sequence_from_ndjson(text):
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if not lines:
        raise ValidationError("empty pose file")
    header = json.loads(lines[0])
    if header.get("version") != 1:
        raise ValidationError(f"unsupported pose file version {header.get('version')!r}")
    joints = int(header["joints"])
    frames = [json.loads(ln)["rot"] for ln in lines[1:]]
    if any(len(f) != joints * 9 for f in frames):
        raise ValidationError(f"every frame must hold {joints * 9} floats")
    rot = np.asarray(frames, dtype=np.float64).reshape(len(frames), joints, 3, 3)
    return PoseSequence(rot, fps=header["fps"])


def write_pose_sequence(path, seq):
    atomic_write_text(Path(path), pose_sequence_to_ndjson(seq))


def read_pose_sequence(path):
    return pose_sequence_from_ndjson(Path(path).read_text())
