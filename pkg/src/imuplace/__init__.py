"""Data-driven IMU placement for inertial pose estimation.

Synthesize IMU readings from pose sequences, train biRNN or transformer
pose regressors, rank sensor locations by feature ablation and evaluate
with local/global rotation and position errors.
"""

__version__ = "0.1.0"
