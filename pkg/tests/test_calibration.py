import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from egokin.calibration import (
    AssociationError,
    CalibrationOptions,
    CalibrationResult,
    UnderdeterminedError,
    apply_scale,
    associate,
    calibration_cost,
    solve_calibration,
)
from egokin.core_types import ImuSequence, Pose, PoseTrajectory, quat_geodesic_angle
from egokin.dead_reckoning import integrate
from egokin.imu_signal import bandpass_accel
from egokin.sim import SimProfile, generate, random_transform


def exact_problem(seed=0, lam=1.0, T=None, v0=(0.0, 0.0, 0.0), n=1000, rate=200.0, every=20):
    """IMU log plus SfM positions that satisfy the objective exactly at (v0, T, lam)."""
    rng = np.random.default_rng(seed)
    t = np.arange(n) / rate
    w = rng.uniform(2, 8, 3)
    accel = np.column_stack([np.sin(w[0] * t), np.cos(w[1] * t) - 1, np.sin(w[2] * t + 1) - math.sin(1)])
    seq = ImuSequence(t, accel, np.zeros((n, 3)))
    T = T or Pose()
    pos = integrate(seq, v0).positions[::every]
    pc = T.apply(pos) / lam
    sfm = PoseTrajectory(t[::every], np.tile([1.0, 0, 0, 0], (pc.shape[0], 1)), pc)
    return seq, sfm


def test_identity_case():
    seq, sfm = exact_problem()
    res = solve_calibration(seq, sfm)
    assert res.converged
    assert res.lam == pytest.approx(1.0, abs=1e-9)
    assert np.allclose(res.v0, 0, atol=1e-9)
    assert quat_geodesic_angle(res.T_I.rotation, [1, 0, 0, 0]) < 1e-9
    assert np.allclose(res.T_I.translation, 0, atol=1e-9)
    assert res.residual_rms < 1e-9


def test_pure_scale_case():
    seq, sfm = exact_problem(lam=2.0)
    assert solve_calibration(seq, sfm).lam == pytest.approx(2.0, abs=1e-6)


def test_synthetic_recovery():
    rng = np.random.default_rng(7)
    prof = SimProfile(seed=7, true_lambda=2.5, true_T_I=random_transform(rng),
                      true_v0=np.array([0.3, -0.1, 0.0])).noiseless()
    b = generate(prof)
    res = solve_calibration(bandpass_accel(b.imu), b.sfm)
    assert res.lam == pytest.approx(2.5, rel=0.01)
    assert np.linalg.norm(res.v0 - [0.3, -0.1, 0.0]) < 0.01
    assert math.degrees(quat_geodesic_angle(res.T_I.rotation, prof.true_T_I.rotation)) < 0.5


def test_noiseless_optimum_residual_small():
    rng = np.random.default_rng(3)
    seq, sfm = exact_problem(seed=3, lam=0.4, T=random_transform(rng), v0=(0.2, -0.3, 0.1))
    res = solve_calibration(seq, sfm)
    extent = np.ptp(sfm.translations * res.lam, axis=0).max()
    assert res.residual_rms < 1e-6 * extent


@settings(max_examples=8)
@given(st.integers(0, 1000), st.floats(0.25, 4.0))
def test_scale_equivariance(seed, s):
    rng = np.random.default_rng(seed)
    seq, sfm = exact_problem(seed=seed, lam=1.7, T=random_transform(rng), v0=rng.uniform(-0.5, 0.5, 3))
    base = solve_calibration(seq, sfm).lam
    scaled = solve_calibration(seq, sfm.replace(translations=sfm.translations * s)).lam
    assert scaled == pytest.approx(base / s, rel=1e-6)


def test_reported_cost_matches_direct_evaluation():
    b = generate(SimProfile.randomized(11))
    f = bandpass_accel(b.imu)
    res = solve_calibration(f, b.sfm)
    direct = calibration_cost(f, b.sfm, res)
    assert res.cost == pytest.approx(direct, rel=1e-12, abs=1e-12)
    assert res.residual_rms == pytest.approx(math.sqrt(direct / len(b.sfm)), rel=1e-9)


def test_underdetermined():
    seq, sfm = exact_problem()
    short = PoseTrajectory(sfm.timestamps[:7], sfm.rotations[:7], sfm.translations[:7])
    with pytest.raises(UnderdeterminedError, match="underdetermined"):
        solve_calibration(seq, short)


def test_rejects_scaled_input():
    seq, sfm = exact_problem()
    with pytest.raises(ValueError):
        solve_calibration(seq, apply_scale(sfm, 1.0))


def test_association_gap():
    seq, sfm = exact_problem()
    late = sfm.replace(timestamps=sfm.timestamps + 0.0026)  # nearest sample is 2.4 ms away: fine
    solve_calibration(seq, late)
    far = sfm.replace(timestamps=np.r_[sfm.timestamps[:-1], seq.t[-1] + 0.02])
    with pytest.raises(AssociationError):
        solve_calibration(seq, far)


def test_associate_nearest():
    idx, ok = associate([0.0, 0.26, 0.9], [0.0, 0.1, 0.2, 0.3], 0.05)
    assert idx.tolist()[:2] == [0, 3]
    assert ok.tolist() == [True, True, False]


def test_endpoint_only_runs():
    seq, sfm = exact_problem(lam=2.0)
    res = solve_calibration(seq, sfm, CalibrationOptions(endpoint_only=True))
    assert res.n_frames == 1
    assert res.cost == pytest.approx(calibration_cost(seq, sfm, res, endpoint_only=True), abs=1e-12)


def test_apply_scale():
    traj = PoseTrajectory([0.0, 1.0], [[1, 0, 0, 0], [0, 1, 0, 0]], [[1, 2, 3], [-1, 0, 2]])
    same = apply_scale(traj, 1.0)
    assert np.array_equal(same.translations, traj.translations) and same.scaled
    assert np.array_equal(apply_scale(traj, 2.0).translations[0], [2, 4, 6])
    assert np.array_equal(apply_scale(traj, 2.0).rotations, traj.rotations)
    back = apply_scale(apply_scale(traj, 3.3), 1 / 3.3)
    assert np.allclose(back.translations, traj.translations, atol=1e-12)
    for bad in (0.0, -1.0):
        with pytest.raises(ValueError):
            apply_scale(traj, bad)


def test_result_json_round_trip(tmp_path):
    seq, sfm = exact_problem(lam=1.3)
    res = solve_calibration(seq, sfm)
    res.save(tmp_path / "c.json")
    back = CalibrationResult.load(tmp_path / "c.json")
    assert back.lam == pytest.approx(res.lam, rel=1e-8)
    assert back.converged == res.converged
    import json
    d = json.loads((tmp_path / "c.json").read_text())
    assert {"v0", "T_I", "lambda", "residual_rms", "converged"} <= set(d)
