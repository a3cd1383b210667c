import math

import numpy as np
import pytest
from hypothesis import given

from egokin.core_types import (
    DegenerateQuaternionError,
    ImuSample,
    ImuSequence,
    Pose,
    PoseTrajectory,
    matrix_to_quat,
    pose_compose,
    pose_inverse,
    pose_relative,
    quat_from_rotvec,
    quat_geodesic_angle,
    quat_mul,
    quat_conj,
    quat_normalize,
    quat_to_matrix,
    quat_to_rotvec,
    read_imu_csv,
    read_trajectory,
    write_imu_csv,
    write_trajectory,
)

from strategies import poses, unit_quats

QZ90 = np.array([math.cos(math.pi / 4), 0.0, 0.0, math.sin(math.pi / 4)])


def assert_pose_close(a, b, tol=1e-9):
    assert np.allclose(a.translation, b.translation, atol=tol)
    assert quat_geodesic_angle(a.rotation, b.rotation) < tol


@pytest.mark.parametrize("q, expected", [
    ((2, 0, 0, 0), (1, 0, 0, 0)),
    ((0, 0, 0, 2), (0, 0, 0, 1)),
    ((1, 1, 1, 1), (0.5, 0.5, 0.5, 0.5)),
])
def test_quat_normalize_examples(q, expected):
    assert np.allclose(quat_normalize(q), expected, atol=1e-15)


def test_quat_normalize_zero_raises():
    with pytest.raises(DegenerateQuaternionError, match="degenerate quaternion"):
        quat_normalize((0, 0, 0, 0))


def test_geodesic_angle_examples():
    ident = np.array([1.0, 0, 0, 0])
    assert quat_geodesic_angle(ident, ident) == 0.0
    assert quat_geodesic_angle(ident, QZ90) == pytest.approx(math.pi / 2, abs=1e-12)
    q = quat_normalize([0.3, -0.2, 0.9, 0.1])
    assert quat_geodesic_angle(q, -q) == pytest.approx(0.0, abs=1e-12)


def test_pose_examples():
    p = Pose(quat_normalize([0.2, 0.5, -0.1, 0.7]), [1.0, -2.0, 0.5])
    assert_pose_close(pose_compose(Pose.identity(), p), p)
    assert_pose_close(pose_compose(p, pose_inverse(p)), Pose.identity())
    assert_pose_close(pose_relative(p, p), Pose.identity())


@given(unit_quats())
def test_rotation_matrix_is_orthonormal(q):
    R = quat_to_matrix(quat_normalize(q))
    assert np.allclose(R @ R.T, np.eye(3), atol=1e-9)
    assert np.linalg.det(R) == pytest.approx(1.0, abs=1e-9)


@given(unit_quats())
def test_matrix_quat_round_trip(q):
    back = matrix_to_quat(quat_to_matrix(q))
    assert quat_geodesic_angle(q, back) < 1e-7
    assert abs(abs(np.dot(q, back)) - 1.0) < 1e-12


@given(poses(), poses(), poses())
def test_compose_is_associative(a, b, c):
    assert_pose_close(pose_compose(pose_compose(a, b), c), pose_compose(a, pose_compose(b, c)), 1e-8)


@given(poses())
def test_compose_inverse_is_identity(p):
    assert_pose_close(pose_compose(p, pose_inverse(p)), Pose.identity())
    assert_pose_close(pose_compose(pose_inverse(p), p), Pose.identity())


@given(unit_quats(), unit_quats())
def test_geodesic_matches_axis_angle(a, b):
    rv = quat_to_rotvec(quat_mul(quat_conj(a), b))
    expected = np.linalg.norm(rv)
    if expected > math.pi:
        expected = 2 * math.pi - expected
    assert quat_geodesic_angle(a, b) == pytest.approx(expected, abs=1e-9)
    assert quat_geodesic_angle(a, b) == pytest.approx(quat_geodesic_angle(b, a), abs=1e-12)


def test_rotvec_round_trip(rng):
    for _ in range(50):
        rv = rng.standard_normal(3)
        rv *= rng.uniform(0, 3.1) / np.linalg.norm(rv)  # inside the injective ball |rv| < pi
        assert np.allclose(quat_to_rotvec(quat_from_rotvec(rv)), rv, atol=1e-12)


def test_pose_matrix_round_trip():
    p = Pose(quat_normalize([0.9, 0.1, 0.3, -0.2]), [1, 2, 3])
    assert_pose_close(Pose.from_matrix(p.matrix()), p)
    pts = np.array([[1.0, 0, 0], [0, 2.0, -1]])
    assert np.allclose(p.apply(pts), (p.matrix() @ np.c_[pts, np.ones(2)].T).T[:, :3])


def test_pose_is_immutable():
    p = Pose()
    with pytest.raises(ValueError):
        p.translation[0] = 1.0


def test_trajectory_validation():
    with pytest.raises(ValueError):
        PoseTrajectory([0.0, 0.0], np.tile([1, 0, 0, 0], (2, 1)), np.zeros((2, 3)))
    with pytest.raises(ValueError):
        PoseTrajectory([], np.zeros((0, 4)), np.zeros((0, 3)))
    with pytest.raises(DegenerateQuaternionError):
        PoseTrajectory([0.0], [[0, 0, 0, 0]], [[0, 0, 0]])


def test_trajectory_file_round_trip(tmp_path, rng):
    n = 7
    q = rng.standard_normal((n, 4))
    traj = PoseTrajectory(np.arange(n) * 0.1, q, rng.standard_normal((n, 3)), scaled=True, point_count=321)
    write_trajectory(traj, tmp_path / "t.txt")
    text = (tmp_path / "t.txt").read_text().splitlines()
    assert text[0] == "# scaled=1 points=321"
    back = read_trajectory(tmp_path / "t.txt")
    assert back.scaled and back.point_count == 321
    assert np.allclose(back.translations, traj.translations, rtol=1e-8, atol=1e-9)
    for a, b in zip(back.rotations, traj.rotations):
        assert quat_geodesic_angle(a, b) < 1e-7
        assert a[0] >= 0  # canonical sign on disk


def test_trajectory_without_point_count(tmp_path):
    traj = PoseTrajectory([0.0], [[1, 0, 0, 0]], [[0, 0, 0]])
    write_trajectory(traj, tmp_path / "t.txt")
    assert (tmp_path / "t.txt").read_text().startswith("# scaled=0 points=-")
    assert read_trajectory(tmp_path / "t.txt").point_count is None


def test_imu_csv_round_trip(tmp_path, rng):
    seq = ImuSequence(np.arange(5) / 200.0, rng.standard_normal((5, 3)), rng.standard_normal((5, 3)))
    write_imu_csv(seq, tmp_path / "imu.csv")
    assert (tmp_path / "imu.csv").read_text().splitlines()[0] == "t,ax,ay,az,gx,gy,gz"
    back = read_imu_csv(tmp_path / "imu.csv")
    assert np.allclose(back.accel, seq.accel, rtol=1e-8)
    assert np.allclose(back.gyro, seq.gyro, rtol=1e-8)


def test_imu_sequence_from_samples():
    s = [ImuSample(0.0, [1, 2, 3], [0, 0, 1]), ImuSample(0.1, [4, 5, 6], [0, 1, 0])]
    seq = ImuSequence.from_samples(s)
    assert len(seq) == 2
    assert np.array_equal(seq[1].linear_accel, [4, 5, 6])
    with pytest.raises(ValueError):
        ImuSequence.from_samples([s[1], s[0]])
    with pytest.raises(ValueError):
        ImuSample(0.0, [np.nan, 0, 0], [0, 0, 0])
