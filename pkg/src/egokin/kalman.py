"""Renormalising EKF over ``x = [p (3), q (4, wxyz), v (3)]``.

Prediction integrates body-frame IMU samples (acceleration rotated into the
world frame by the state quaternion, gravity assumed removed upstream).
Updates observe position and quaternion directly, ``H = [I₇ | 0]``.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
from numpy.typing import ArrayLike

from . import _kernels
from .calibration import MAX_GAP, CalibrationResult, associate
from .core_types import FloatArray, ImuSample, ImuSequence, Pose, PoseTrajectory

log = logging.getLogger(__name__)

STATE_DIM = 10
OBS_DIM = 7
H = np.hstack([np.eye(OBS_DIM), np.zeros((OBS_DIM, STATE_DIM - OBS_DIM))])
MAX_CONDITION = 1e12


class DegenerateInnovationError(np.linalg.LinAlgError):
    pass


@dataclass(frozen=True)
class KalmanConfig:
    Q: FloatArray = field(default_factory=lambda: 0.01 * np.eye(STATE_DIM))
    R: FloatArray = field(default_factory=lambda: 0.1 * np.eye(OBS_DIM))
    P0_scale: float = 0.1
    jac_step: float = 1e-6
    max_gap: float = MAX_GAP
    P0: FloatArray | None = None  # full initial covariance; overrides P0_scale when given

    def __post_init__(self) -> None:
        Q = np.asarray(self.Q, dtype=np.float64)
        R = np.asarray(self.R, dtype=np.float64)
        if Q.shape != (STATE_DIM, STATE_DIM) or R.shape != (OBS_DIM, OBS_DIM):
            raise ValueError("Q must be 10x10 and R 7x7")
        for name, M in (("Q", Q), ("R", R)):
            if not np.allclose(M, M.T, atol=1e-12):
                raise ValueError(f"{name} must be symmetric")
            if np.linalg.eigvalsh(M).min() < -1e-12:
                raise ValueError(f"{name} must be positive semi-definite")
        object.__setattr__(self, "Q", Q)
        object.__setattr__(self, "R", R)
        if self.P0 is not None:
            P0 = np.asarray(self.P0, dtype=np.float64)
            if P0.shape != (STATE_DIM, STATE_DIM):
                raise ValueError("P0 must be 10x10")
            object.__setattr__(self, "P0", P0)

    def initial_covariance(self) -> FloatArray:
        if self.P0 is not None:
            return self.P0.copy()
        return self.P0_scale * np.eye(STATE_DIM)

    @classmethod
    def scaled(cls, q: float = 0.01, r: float = 0.1, p0: float = 0.1) -> "KalmanConfig":
        return cls(q * np.eye(STATE_DIM), r * np.eye(OBS_DIM), p0)


@dataclass(frozen=True)
class KalmanState:
    x: FloatArray
    P: FloatArray

    @property
    def position(self) -> FloatArray:
        return self.x[0:3]

    @property
    def quaternion(self) -> FloatArray:
        return self.x[3:7]

    @property
    def velocity(self) -> FloatArray:
        return self.x[7:10]

    def pose(self) -> Pose:
        return Pose(self.quaternion, self.position)


def ekf_init(pose0: Pose, v0: ArrayLike, cfg: KalmanConfig | None = None) -> KalmanState:
    cfg = cfg or KalmanConfig()
    x = np.concatenate([pose0.translation, pose0.rotation, np.asarray(v0, dtype=np.float64).reshape(3)])
    return KalmanState(x, cfg.initial_covariance())


def ekf_predict(s: KalmanState, u: ImuSample, dt: float, cfg: KalmanConfig | None = None) -> KalmanState:
    cfg = cfg or KalmanConfig()
    if not dt > 0:
        raise ValueError("dt must be > 0")
    x, P = _kernels.ekf_predict_step(s.x, s.P, u.linear_accel, u.angular_vel, dt, cfg.Q, cfg.jac_step)
    return KalmanState(x, P)


def ekf_update(s: KalmanState, obs: Pose, cfg: KalmanConfig | None = None) -> tuple[KalmanState, FloatArray]:
    cfg = cfg or KalmanConfig()
    z = np.concatenate([obs.translation, obs.rotation])
    # q and -q are the same rotation; pick the one closest to the prediction
    if np.dot(z[3:7], s.x[3:7]) < 0:
        z[3:7] = -z[3:7]
    y = z - H @ s.x
    S = H @ s.P @ H.T + cfg.R
    if np.linalg.cond(S) > MAX_CONDITION:
        raise DegenerateInnovationError("degenerate innovation covariance")
    K = np.linalg.solve(S, H @ s.P).T  # P Hᵀ S⁻¹ with S symmetric
    x = s.x + K @ y
    x[3:7] /= np.linalg.norm(x[3:7])
    P = (np.eye(STATE_DIM) - K @ H) @ s.P
    P = 0.5 * (P + P.T)
    return KalmanState(x, P), y


@dataclass(frozen=True)
class FusionResult:
    trajectory: PoseTrajectory
    innovations: FloatArray
    dropped: int


def fuse_trajectories(
    seq: ImuSequence,
    sfm_scaled: PoseTrajectory,
    calib: CalibrationResult,
    cfg: KalmanConfig | None = None,
) -> FusionResult:
    """Predict at every IMU sample, update at every associated SfM frame.

    ``seq`` is the gravity-free IMU log in the IMU frame. The filter runs in the
    camera world frame: it starts from ``T_I`` applied to the IMU origin, with
    velocity ``R_I · v0``. Output poses are the posterior states at SfM times.
    """
    cfg = cfg or KalmanConfig()
    if not sfm_scaled.scaled:
        raise ValueError("fusion expects a metric (scaled) SfM trajectory")
    if len(sfm_scaled) == 0 or len(seq) == 0:
        raise ValueError("nothing to fuse: empty observation set")

    idx, ok = associate(sfm_scaled.timestamps, seq.t, cfg.max_gap)
    dropped = int((~ok).sum())
    if dropped:
        log.warning("dropped %d SfM frames without an IMU sample within %.0f ms", dropped, cfg.max_gap * 1e3)
    if not ok.any():
        raise ValueError("nothing to fuse: no SfM frame matches an IMU sample")
    obs_at: dict[int, list[int]] = {}
    for j in np.flatnonzero(ok):
        obs_at.setdefault(int(idx[j]), []).append(int(j))

    state = ekf_init(calib.T_I, calib.T_I.R @ calib.v0, cfg)
    last = max(obs_at)
    times, quats, trans, innov = [], [], [], []
    for k in range(last + 1):
        if k > 0:
            dt = float(seq.t[k] - seq.t[k - 1])
            x, P = _kernels.ekf_predict_step(state.x, state.P, seq.accel[k - 1], seq.gyro[k - 1],
                                             dt, cfg.Q, cfg.jac_step)
            state = KalmanState(x, P)
        for j in obs_at.get(k, ()):
            state, y = ekf_update(state, sfm_scaled[j], cfg)
            innov.append(y)
            times.append(sfm_scaled.timestamps[j])
            quats.append(state.quaternion.copy())
            trans.append(state.position.copy())
    traj = PoseTrajectory(np.array(times), np.array(quats), np.array(trans), scaled=True,
                          point_count=sfm_scaled.point_count)
    return FusionResult(traj, np.array(innov), dropped)


def imu_only_trajectory(seq: ImuSequence, calib: CalibrationResult, timestamps: ArrayLike) -> PoseTrajectory:
    """Dead-reckoned positions through ``T_I`` with the calibration's fixed orientation."""
    from .calibration import imu_positions

    t = np.asarray(timestamps, dtype=np.float64)
    pos = imu_positions(seq, calib, t)
    rot = np.tile(calib.T_I.rotation, (t.size, 1))
    return PoseTrajectory(t, rot, pos, scaled=True)
