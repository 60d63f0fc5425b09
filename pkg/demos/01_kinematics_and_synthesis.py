# %% [markdown]
# # Skeleton, forward kinematics and synthetic IMUs
#
# A pose is 24 local joint rotations on the SMPL tree. Forward kinematics
# chains them into global rotations and joint positions; a virtual IMU at a
# joint reports that global rotation plus the second difference of the
# joint's position.

# %%
import numpy as np

from imuplace.evalharness import DatasetSpec, procedural_pose_dataset
from imuplace.imusynth import synthesize_imu
from imuplace.kinematics import (
    JOINT_NAMES,
    forward_kinematics,
    geodesic_angle_deg,
    rot_axis_angle,
    smpl_skeleton,
)

skel = smpl_skeleton()
for j in (0, 9, 16, 20):
    print(j, JOINT_NAMES[j], "parent:", JOINT_NAMES[skel.parents[j]] if skel.parents[j] >= 0 else "-")

# %% [markdown]
# Rest pose: every local rotation is the identity, so each joint sits at the
# sum of the bone offsets above it.

# %%
rest = np.tile(np.eye(3), (24, 1, 1))
_, pos = forward_kinematics(rest, skel)
print("left wrist at rest (m):", pos[20].round(3))

# %% [markdown]
# Raising the left shoulder by 60 degrees about the forward axis moves the
# whole arm below it, while the local rotation error is confined to one joint.

# %%
raised = rest.copy()
raised[16] = rot_axis_angle([0.0, 0.0, 1.0], 60.0)
_, pos_raised = forward_kinematics(raised, skel)
print("wrist displacement (m):", np.linalg.norm(pos_raised[20] - pos[20]).round(3))
print("angle between poses at the shoulder:", geodesic_angle_deg(rest[16], raised[16]), "deg")

# %% [markdown]
# ## Procedural motion and its IMU features
#
# The generator sums a few sinusoids per joint about a fixed axis.

# %%
seq = procedural_pose_dataset(DatasetSpec(n_sequences=1, seq_len=120, seed=0))[0]
imu = synthesize_imu(seq, skel)
features = imu.features()
print("frames:", len(seq), "feature width:", features.shape[1])

# %%
accel_norm = np.linalg.norm(imu.accel[:-2], axis=-1)
busiest = np.argsort(-accel_norm.mean(axis=0))[:5]
for j in busiest:
    print(f"{JOINT_NAMES[j]:<12} mean |a| = {accel_norm[:, j].mean():.2f} m/s^2")
