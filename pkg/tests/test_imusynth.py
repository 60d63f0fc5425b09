import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from imuplace.errors import SequenceTooShortError, ValidationError
from imuplace.imusynth import (
    acceleration_from_positions,
    argmax_vertex_per_joint,
    flatten_features,
    flatten_frames,
    imu_features_from_ndjson,
    read_imu_features,
    select_sensors,
    synthesize_imu,
    write_imu_features,
)
from imuplace.kinematics import (
    PoseSequence,
    forward_kinematics,
    rot_axis_angle,
    rotvec_to_matrix,
    smpl_skeleton,
)


def static_sequence(n_frames, n_joints=24):
    return PoseSequence(np.tile(np.eye(3), (n_frames, n_joints, 1, 1)), fps=60)


# -- acceleration -----------------------------------------------------------

def test_constant_positions_have_zero_acceleration():
    v = np.tile([0.3, -1.0, 2.0], (10, 1))
    np.testing.assert_array_equal(acceleration_from_positions(v), 0.0)


def test_constant_velocity_has_zero_acceleration():
    i = np.arange(20)[:, None]
    v = np.array([1.0, 2.0, 3.0]) + i * np.array([0.01, -0.02, 0.5])
    np.testing.assert_allclose(acceleration_from_positions(v), 0.0, atol=1e-9)


def test_free_fall_recovers_gravity():
    g, fps = 9.81, 60.0
    t = np.arange(30) / fps
    v = np.zeros((30, 3))
    v[:, 2] = 0.5 * g * t ** 2
    a = acceleration_from_positions(v, fps)
    np.testing.assert_allclose(a[:-2], np.tile([0.0, 0.0, g], (28, 1)), rtol=1e-9, atol=1e-9)


def test_padding_repeats_last_value_and_keeps_length():
    v = np.random.default_rng(0).normal(size=(7, 3))
    a = acceleration_from_positions(v, 60)
    assert a.shape == v.shape
    np.testing.assert_array_equal(a[-1], a[-3])
    np.testing.assert_array_equal(a[-2], a[-3])


def test_too_short_sequence_rejected():
    with pytest.raises(SequenceTooShortError):
        acceleration_from_positions(np.zeros((2, 3)))


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 2**20), alpha=st.floats(-5, 5), beta=st.floats(-5, 5))
def test_acceleration_is_linear(seed, alpha, beta):
    rng = np.random.default_rng(seed)
    v, u = rng.normal(size=(2, 12, 3))
    lhs = acceleration_from_positions(alpha * v + beta * u)
    rhs = alpha * acceleration_from_positions(v) + beta * acceleration_from_positions(u)
    np.testing.assert_allclose(lhs[:-2], rhs[:-2], rtol=1e-9, atol=1e-6)


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 2**20), fps=st.sampled_from([30.0, 60.0, 120.0]))
def test_quadratics_are_exact(seed, fps):
    rng = np.random.default_rng(seed)
    c0, c1, c2 = rng.normal(size=(3, 3))
    i = np.arange(25)[:, None]
    v = c0 + c1 * i + c2 * i ** 2
    a = acceleration_from_positions(v, fps)
    np.testing.assert_allclose(a[:-2], np.tile(2 * c2 * fps ** 2, (23, 1)), rtol=1e-6)


# -- argmax vertex selection ------------------------------------------------

def test_argmax_unique_maxima():
    w = [[0.1, 0.8, 0.1], [0.7, 0.2, 0.1]]
    np.testing.assert_array_equal(argmax_vertex_per_joint(w), [1, 0])


def test_argmax_diagonal():
    w = np.eye(5) + 0.1
    np.testing.assert_array_equal(argmax_vertex_per_joint(w), np.arange(5))


def test_argmax_tie_goes_to_lowest_index():
    assert argmax_vertex_per_joint([[0.5, 0.5, 0.0]])[0] == 0


def test_argmax_rejects_empty():
    with pytest.raises(ValidationError):
        argmax_vertex_per_joint(np.zeros((0, 3)))


# -- synthesis --------------------------------------------------------------

def test_static_identity_pose():
    skel = smpl_skeleton()
    imu = synthesize_imu(static_sequence(5), skel)
    assert len(imu) == 5
    np.testing.assert_array_equal(imu.accel, 0.0)
    np.testing.assert_array_equal(imu.orient, np.tile(np.eye(3), (5, 24, 1, 1)))


def test_spinning_root():
    skel = smpl_skeleton()
    n = 12
    rot = np.tile(np.eye(3), (n, 24, 1, 1))
    rot[:, 0] = rot_axis_angle([0.0, 1.0, 0.0], 3.0 * np.arange(n))
    imu = synthesize_imu(PoseSequence(rot, 60), skel, sensors=[0, 20])
    np.testing.assert_allclose(imu.orient[:, 0], rot[:, 0], atol=1e-15)
    np.testing.assert_array_equal(imu.accel[:, 0], 0.0)
    # the wrist circles the vertical axis, so it does accelerate
    _, pos = forward_kinematics(rot, skel)
    expected = (pos[:-2, 20] + pos[2:, 20] - 2 * pos[1:-1, 20]) * 3600.0
    np.testing.assert_allclose(imu.accel[:-2, 1], expected, atol=1e-9)
    assert np.abs(imu.accel[:, 1]).max() > 0.1


def test_all_sensors_give_288_features():
    imu = synthesize_imu(static_sequence(4), smpl_skeleton())
    assert imu.features().shape == (4, 288)


def test_synthesis_propagates_too_short():
    with pytest.raises(SequenceTooShortError):
        synthesize_imu(static_sequence(2), smpl_skeleton())


def test_subset_consistency():
    rng = np.random.default_rng(5)
    seq = PoseSequence(rotvec_to_matrix(0.3 * rng.normal(size=(9, 24, 3))), 60)
    skel = smpl_skeleton()
    full = synthesize_imu(seq, skel).features()
    subset = (20, 0, 16, 5, 9, 4)
    direct = synthesize_imu(seq, skel, subset).features()
    np.testing.assert_array_equal(select_sensors(full, range(24), subset), direct)


def test_duplicate_sensor_rejected():
    with pytest.raises(ValidationError):
        synthesize_imu(static_sequence(4), smpl_skeleton(), sensors=[1, 1])


# -- feature layout ---------------------------------------------------------

def test_single_identity_sensor_layout():
    f = flatten_features(np.zeros((1, 1, 3)), np.eye(3)[None, None])
    np.testing.assert_array_equal(f[0], [1, 0, 0, 0, 1, 0, 0, 0, 1, 0, 0, 0])


def test_orientation_precedes_acceleration():
    orient = np.arange(9.0).reshape(1, 1, 3, 3)
    accel = np.array([[[10.0, 11.0, 12.0]]])
    np.testing.assert_array_equal(flatten_features(accel, orient)[0],
                                  np.r_[np.arange(9.0), 10.0, 11.0, 12.0])


@pytest.mark.parametrize("n_sensors, width", [(6, 72), (24, 288)])
def test_feature_width(n_sensors, width):
    f = flatten_features(np.zeros((3, n_sensors, 3)), np.tile(np.eye(3), (3, n_sensors, 1, 1)))
    assert f.shape == (3, width)


def test_ragged_frames_rejected():
    frame2 = [(np.zeros(3), np.eye(3))] * 2
    frame1 = [(np.zeros(3), np.eye(3))]
    with pytest.raises(ValidationError):
        flatten_frames([frame2, frame1])


# -- IMU files --------------------------------------------------------------

def test_imu_file_round_trip(tmp_path):
    feats = np.random.default_rng(1).normal(size=(5, 24))
    path = tmp_path / "x.imu.ndjson"
    write_imu_features(path, feats, (3, 7), 60)
    assert path.read_text().splitlines()[0] == '{"version":1,"fps":60,"sensors":[3,7]}'
    back = read_imu_features(path)
    np.testing.assert_array_equal(back.features, feats)
    assert back.sensors == (3, 7)


def test_imu_file_width_checked():
    text = '{"version":1,"fps":60,"sensors":[0]}\n{"feat":[1,2,3]}\n'
    with pytest.raises(ValidationError):
        imu_features_from_ndjson(text)
