import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from imuplace.attribution import (
    AttributionReport,
    Baseline,
    ablate_joint,
    feature_ablation,
    per_dataset_ablation,
    rank_sensors,
)
from imuplace.errors import ValidationError
from imuplace.evalharness import DatasetSpec, planted_signal_dataset
from imuplace.kinematics import JOINT_NAMES, forward_kinematics, smpl_skeleton
from imuplace.neuralseq import Checkpoint, desk_spec, init_params


def report_from(scores):
    return AttributionReport(dict(enumerate(scores)), base_loss=0.0)


def random_eval_set(n_seq=3, t_len=12, n_sensors=24, seed=0):
    rng = np.random.default_rng(seed)
    return [(rng.normal(size=(t_len, 12 * n_sensors)), rng.normal(size=(t_len, 216)))
            for _ in range(n_seq)]


def tiny_checkpoint(n_sensors=24, seed=0, zero_slot=None):
    spec = desk_spec("transformer", n_sensors=n_sensors, hidden=16, layers=1, heads=2, seed=seed)
    params = init_params(spec)
    if zero_slot is not None:
        params["embed.W"][12 * zero_slot:12 * (zero_slot + 1)] = 0.0
    return Checkpoint(spec, params, train_config={"window_len": 8})


# -- ablate_joint -----------------------------------------------------------

def test_zero_baseline_blanks_block_only():
    f = np.random.default_rng(0).normal(size=(5, 36))
    out = ablate_joint(f, 1)
    np.testing.assert_array_equal(out[:, 12:24], 0.0)
    np.testing.assert_array_equal(out[:, :12], f[:, :12])
    np.testing.assert_array_equal(out[:, 24:], f[:, 24:])
    assert not np.shares_memory(out, f)


def test_own_values_baseline_is_noop():
    f = np.random.default_rng(1).normal(size=(5, 36))
    np.testing.assert_array_equal(ablate_joint(f, 2, f[:, 24:36]), f)


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 2**16), a=st.integers(0, 5), b=st.integers(0, 5))
def test_disjoint_ablations_commute(seed, a, b):
    rng = np.random.default_rng(seed)
    f = rng.normal(size=(4, 72))
    base = Baseline("dataset_mean", rng.normal(size=72))
    ab = ablate_joint(ablate_joint(f, a, base), b, base)
    ba = ablate_joint(ablate_joint(f, b, base), a, base)
    np.testing.assert_array_equal(ab, ba)


def test_slot_out_of_range():
    with pytest.raises(ValidationError):
        ablate_joint(np.zeros((3, 24)), 2)


def test_dataset_mean_baseline_width_checked():
    with pytest.raises(ValidationError):
        ablate_joint(np.zeros((3, 24)), 0, Baseline("dataset_mean", np.zeros(12)))
    with pytest.raises(ValidationError):
        ablate_joint(np.zeros((3, 24)), 0, Baseline("dataset_mean"))


def test_unknown_baseline_kind():
    with pytest.raises(ValidationError):
        Baseline("median")


# -- feature_ablation -------------------------------------------------------

def test_structurally_ignored_joint_scores_zero():
    ckpt = tiny_checkpoint(zero_slot=7)
    report = feature_ablation(ckpt, random_eval_set())
    assert abs(report.scores[7]) <= 1e-9
    assert len(report.scores) == 24
    assert all(np.isfinite(list(report.scores.values())))


def test_processing_order_does_not_matter():
    ckpt = tiny_checkpoint(n_sensors=4)
    data = random_eval_set(n_sensors=4)
    ref = feature_ablation(ckpt, data)
    shuffled = feature_ablation(ckpt, data, order=[3, 1, 0, 2])
    threaded = feature_ablation(ckpt, data, n_jobs=4)
    assert ref.scores == shuffled.scores == threaded.scores


def test_constant_dataset_with_mean_baseline_scores_exactly_zero():
    frame = np.random.default_rng(2).normal(size=48)
    data = [(np.tile(frame, (10, 1)), np.zeros((10, 216))) for _ in range(3)]
    report = feature_ablation(tiny_checkpoint(n_sensors=4), data, Baseline.dataset_mean(data))
    assert all(s == 0.0 for s in report.scores.values())


def test_linear_model_scores_follow_coefficient_magnitude():
    # y = sum_j c_j x_j with unit-variance independent inputs: score_j ~ c_j^2
    rng = np.random.default_rng(3)
    coef = np.array([0.5, 3.0, -1.0, 2.0, -0.1])
    x = rng.normal(size=(4000, 60))
    weights = np.zeros((60, 1))
    weights[::12, 0] = coef

    def model(f):
        return f[:-2] @ weights

    report = feature_ablation(model, [(x, x @ weights)])
    assert report.base_loss < 1e-25
    ranked = rank_sensors(report, 5)
    assert ranked == tuple(np.argsort(-np.abs(coef)))
    np.testing.assert_allclose([report.scores[j] for j in range(5)], coef ** 2, rtol=0.1)


def test_sensor_subset_checkpoint_reports_joint_ids():
    spec = desk_spec("birnn", n_sensors=2, hidden=4, layers=1, sensors=(16, 3))
    ckpt = Checkpoint(spec, init_params(spec), train_config={"window_len": 8})
    report = feature_ablation(ckpt, random_eval_set(n_sensors=2))
    assert set(report.scores) == {3, 16}


def test_empty_eval_set_rejected():
    with pytest.raises(ValidationError):
        feature_ablation(tiny_checkpoint(), [])


def test_width_mismatch_rejected():
    with pytest.raises(ValidationError):
        feature_ablation(tiny_checkpoint(), random_eval_set(n_sensors=6))


# -- report I/O -------------------------------------------------------------

def test_report_keys_are_joint_names():
    report = feature_ablation(tiny_checkpoint(), random_eval_set(n_seq=1))
    d = report.to_dict()
    assert list(d["scores"]) == list(JOINT_NAMES)
    assert set(d) == {"model_id", "dataset_id", "baseline", "base_loss", "scores"}


def test_report_json_round_trip():
    rng = np.random.default_rng(4)
    report = AttributionReport(dict(enumerate(rng.normal(size=24))), 0.5, "dataset_mean", "m", "d")
    back = AttributionReport.from_json(report.to_json())
    assert back.scores == report.scores
    assert (back.base_loss, back.baseline_kind, back.model_id, back.dataset_id) == (0.5, "dataset_mean", "m", "d")


def test_report_csv():
    lines = report_from(np.arange(24.0)).to_csv().splitlines()
    assert lines[0] == "joint,name,score"
    assert lines[1] == "0,Pelvis,0.0"
    assert len(lines) == 25


# -- ranking ----------------------------------------------------------------

def test_rank_argmax():
    assert rank_sensors(report_from([3.0, 1.0, 2.0] + [0.0] * 21), 1) == (0,)


def test_rank_all_sorted():
    scores = np.random.default_rng(5).permutation(24).astype(float)
    ranked = rank_sensors(report_from(scores), 24)
    assert sorted(ranked) == list(range(24))
    assert list(scores[list(ranked)]) == sorted(scores, reverse=True)


def test_rank_ties_go_to_lower_index():
    assert rank_sensors(report_from([1.0] * 24), 3) == (0, 1, 2)
    assert rank_sensors(report_from([0.0, 2.0, 2.0, 5.0] + [0.0] * 20), 3) == (3, 1, 2)


def test_rank_reproduces_listed_six_sensor_order():
    # pelvis, left shoulder, left wrist, right knee, upper spine, left knee
    order = [0, 16, 20, 5, 9, 4]
    scores = np.zeros(24)
    scores[order] = [6.0, 5.0, 4.0, 3.0, 2.0, 1.0]
    ranked = rank_sensors(report_from(scores), 6)
    assert list(ranked) == order
    assert [JOINT_NAMES[j] for j in ranked] == [
        "Pelvis", "L Shoulder", "L Wrist", "R Knee", "Spine3", "L Knee"]


@pytest.mark.parametrize("k", [0, 25, -1])
def test_rank_k_out_of_range(k):
    with pytest.raises(ValidationError):
        rank_sensors(report_from(np.zeros(24)), k)


# -- per-dataset ------------------------------------------------------------

def test_identical_datasets_give_identical_reports():
    data = random_eval_set(n_seq=2)
    ckpt = tiny_checkpoint()
    reports = per_dataset_ablation(ckpt, {"a": data, "b": data})
    assert reports["a"].scores == reports["b"].scores
    assert reports["a"].dataset_id == "a" and reports["b"].dataset_id == "b"


def test_single_dataset_matches_direct_call():
    data = random_eval_set(n_seq=2)
    ckpt = tiny_checkpoint()
    via = per_dataset_ablation(ckpt, {"only": data}, Baseline("dataset_mean"))["only"]
    direct = feature_ablation(ckpt, data, Baseline.dataset_mean(data))
    assert via.scores == direct.scores


def orientation_reader(skel):
    # reads each sensor's orientation block as that joint's global rotation
    def model(f):
        return f[:-2].reshape(len(f) - 2, 24, 12)[:, :, :9].reshape(len(f) - 2, 216)
    return model


def global_targets(data, skel):
    out = []
    for features, seq in data:
        glob, _ = forward_kinematics(seq.rot, skel)
        out.append((features, glob.reshape(len(seq), 216)))
    return out


def test_per_dataset_recovers_each_planted_set():
    skel = smpl_skeleton()
    planted = {"a": (0, 16, 20, 5, 9, 4), "b": (1, 2, 12, 15, 21, 23)}
    datasets = {
        label: global_targets(planted_signal_dataset(
            DatasetSpec("planted_signal", n_sequences=2, seq_len=20, seed=i, planted_joints=joints)), skel)
        for i, (label, joints) in enumerate(planted.items())
    }
    reports = per_dataset_ablation(orientation_reader(skel), datasets)
    for label, joints in planted.items():
        assert set(rank_sensors(reports[label], 6)) == set(joints)
