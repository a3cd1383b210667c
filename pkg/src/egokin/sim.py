"""Synthetic ground truth for the annotation pipeline.

The rig moves along an analytic path ``p(t)`` expressed in the IMU navigation
frame, starting at the origin with velocity ``v(0)``. Its body orientation is
a constant-rate yaw ``R_b(t) = Rz(yaw_rate · t)``. From this:

* IMU accelerometer: ``R_b(t)ᵀ (p''(t) + gravity)`` plus white noise,
  gyroscope ``(0, 0, yaw_rate)`` plus white noise;
* ground truth (metric, camera world frame): ``T_I ∘ (R_b(t), p(t))``;
* SfM: ground truth positions with metric noise, divided by ``λ``, rotations
  perturbed by a small random rotation.

With ``yaw_rate = 0`` the translation-only dead reckoning is exact up to
discretisation, so calibration can recover ``(v0, T_I, λ)`` exactly.

Noise comes from numpy's PCG64 generator, so a seed reproduces a bundle bit for bit.
"""
from __future__ import annotations

import enum
import json
import math
from dataclasses import dataclass, field, fields
from pathlib import Path

import numpy as np

from .core_types import (
    FloatArray,
    ImuSequence,
    Pose,
    PoseTrajectory,
    quat_canonical,
    quat_from_rotvec,
    quat_mul,
    write_imu_csv,
    write_trajectory,
)


class Motion(str, enum.Enum):
    REST = "Rest"
    CONST_VEL = "ConstVel"
    CIRCLE = "Circle"
    SMOOTH_RANDOM = "SmoothRandom"


@dataclass(frozen=True)
class SimProfile:
    seed: int = 0
    duration: float = 10.0
    imu_rate: float = 200.0
    sfm_rate: float = 10.0
    accel_noise_sigma: float = 0.05
    gyro_noise_sigma: float = 0.005
    sfm_trans_noise_sigma: float = 0.05
    sfm_rot_noise_sigma: float = 0.01
    true_lambda: float = 1.0
    true_T_I: Pose = field(default_factory=Pose.identity)
    true_v0: FloatArray = field(default_factory=lambda: np.zeros(3))
    gravity: FloatArray = field(default_factory=lambda: np.array([0.0, 0.0, -9.81]))
    motion: Motion = Motion.SMOOTH_RANDOM
    yaw_rate: float = 0.0
    point_count: int = 2000

    def __post_init__(self) -> None:
        if not (self.imu_rate > 0 and self.sfm_rate > 0 and self.duration > 0):
            raise ValueError("rates and duration must be > 0")
        sigmas = (self.accel_noise_sigma, self.gyro_noise_sigma,
                  self.sfm_trans_noise_sigma, self.sfm_rot_noise_sigma)
        if min(sigmas) < 0:
            raise ValueError("noise sigmas must be >= 0")
        if not self.true_lambda > 0:
            raise ValueError("true_lambda must be > 0")
        object.__setattr__(self, "motion", Motion(self.motion))
        object.__setattr__(self, "true_v0", np.asarray(self.true_v0, dtype=np.float64).reshape(3))
        object.__setattr__(self, "gravity", np.asarray(self.gravity, dtype=np.float64).reshape(3))
        if not isinstance(self.true_T_I, Pose):
            d = self.true_T_I
            object.__setattr__(self, "true_T_I", Pose(d["rotation"], d["translation"]))

    def noiseless(self) -> "SimProfile":
        return self.replace(accel_noise_sigma=0.0, gyro_noise_sigma=0.0,
                            sfm_trans_noise_sigma=0.0, sfm_rot_noise_sigma=0.0)

    def replace(self, **changes) -> "SimProfile":
        kw = {f.name: getattr(self, f.name) for f in fields(self)}
        kw.update(changes)
        return SimProfile(**kw)

    def to_dict(self) -> dict:
        d = {f.name: getattr(self, f.name) for f in fields(self)}
        d["true_T_I"] = {"rotation": self.true_T_I.rotation.tolist(),
                         "translation": self.true_T_I.translation.tolist()}
        d["true_v0"] = self.true_v0.tolist()
        d["gravity"] = self.gravity.tolist()
        d["motion"] = self.motion.value
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "SimProfile":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown profile keys: {sorted(unknown)}")
        return cls(**d)

    @classmethod
    def randomized(cls, seed: int, **overrides) -> "SimProfile":
        """Profile with seeded random ``λ ∈ [0.2, 5]`` (log-uniform), ``T_I`` and ``v0``."""
        rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence([seed, 0x5EED])))
        kw = dict(
            seed=seed,
            true_lambda=float(np.exp(rng.uniform(math.log(0.2), math.log(5.0)))),
            true_T_I=random_transform(rng),
            true_v0=rng.uniform(-0.5, 0.5, 3),
        )
        kw.update(overrides)
        return cls(**kw)

    @classmethod
    def load(cls, path: str | Path) -> "SimProfile":
        return cls.from_dict(json.loads(Path(path).read_text()))


class _Path:
    """Closed-form position / velocity / acceleration of the rig in the IMU frame."""

    def __init__(self, profile: SimProfile, rng: np.random.Generator):
        self.kind = profile.motion
        self.v0 = profile.true_v0.copy()
        T = profile.duration
        if self.kind is Motion.CIRCLE:
            self.radius = 1.0
            cycles = max(1, round(T / 2.0))
            self.omega = 2.0 * math.pi * cycles / T
        elif self.kind is Motion.SMOOTH_RANDOM:
            # periodic over the clip with frequencies 0.6-1.5 Hz so the band-pass keeps them
            lo = max(1, math.ceil(0.6 * T))
            hi = max(lo + 3, math.ceil(1.5 * T))
            cycles = np.stack([rng.choice(np.arange(lo, hi), size=3, replace=False) for _ in range(3)])
            self.freqs = 2.0 * math.pi * cycles / T
            amps = rng.uniform(0.15, 0.4, size=(3, 3)) * rng.choice([-1.0, 1.0], size=(3, 3))
            # last term cancels the initial velocity of the first two
            amps[:, 2] = -(amps[:, 0] * self.freqs[:, 0] + amps[:, 1] * self.freqs[:, 1]) / self.freqs[:, 2]
            self.amps = amps

    def __call__(self, t: FloatArray):
        t = np.asarray(t, dtype=np.float64)[:, None]
        zeros = np.zeros((t.shape[0], 3))
        if self.kind is Motion.REST:
            return zeros, zeros.copy(), zeros.copy()
        pos = self.v0 * t
        vel = np.broadcast_to(self.v0, pos.shape).copy()
        acc = zeros
        if self.kind is Motion.CIRCLE:
            w, r = self.omega, self.radius
            s, c = np.sin(w * t[:, 0]), np.cos(w * t[:, 0])
            pos = pos + r * np.column_stack([s, 1.0 - c, np.zeros_like(s)])
            vel = vel + r * w * np.column_stack([c, s, np.zeros_like(s)])
            acc = r * w * w * np.column_stack([-s, c, np.zeros_like(s)])
        elif self.kind is Motion.SMOOTH_RANDOM:
            # sum_k a_k sin(w_k t) with sum_k a_k w_k = 0: no velocity or acceleration at t=0
            wt = t[:, :, None] * self.freqs[None]
            pos = pos + np.sum(self.amps * np.sin(wt), axis=2)
            vel = vel + np.sum(self.amps * self.freqs * np.cos(wt), axis=2)
            acc = -np.sum(self.amps * self.freqs ** 2 * np.sin(wt), axis=2)
        return pos, vel, acc


@dataclass(frozen=True)
class SimBundle:
    profile: SimProfile
    ground_truth: PoseTrajectory
    imu: ImuSequence
    sfm: PoseTrajectory
    imu_positions: FloatArray  # noiseless rig positions in the IMU frame, per IMU sample
    v0: FloatArray  # true initial velocity in the IMU frame

    def save(self, out_dir: str | Path) -> None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        write_imu_csv(self.imu, out / "imu.csv", digits=17)
        write_trajectory(self.sfm, out / "sfm.txt", digits=17)
        write_trajectory(self.ground_truth, out / "gt.txt", digits=17)


def _yaw_quats(angles: FloatArray) -> FloatArray:
    half = 0.5 * angles
    return np.column_stack([np.cos(half), np.zeros_like(half), np.zeros_like(half), np.sin(half)])


def generate(profile: SimProfile) -> SimBundle:
    rng = np.random.Generator(np.random.PCG64(profile.seed))
    path = _Path(profile, rng)

    n_imu = int(round(profile.duration * profile.imu_rate))
    t_imu = np.arange(n_imu) / profile.imu_rate
    pos, vel, acc = path(t_imu)

    yaw = profile.yaw_rate * t_imu
    c, s = np.cos(yaw), np.sin(yaw)
    world = acc + profile.gravity
    # R_bᵀ for a yaw rotation
    body = np.column_stack([c * world[:, 0] + s * world[:, 1],
                            -s * world[:, 0] + c * world[:, 1],
                            world[:, 2]])
    gyro = np.tile([0.0, 0.0, profile.yaw_rate], (n_imu, 1))
    body = body + profile.accel_noise_sigma * rng.standard_normal((n_imu, 3))
    gyro = gyro + profile.gyro_noise_sigma * rng.standard_normal((n_imu, 3))
    imu = ImuSequence(t_imu, body, gyro)

    n_sfm = int(math.floor(profile.duration * profile.sfm_rate - 1e-9)) + 1
    t_sfm = np.arange(n_sfm) / profile.sfm_rate
    p_sfm, _, _ = path(t_sfm)
    T = profile.true_T_I
    gt_pos = T.apply(p_sfm)
    gt_rot = np.array([quat_canonical(quat_mul(T.rotation, q)) for q in _yaw_quats(profile.yaw_rate * t_sfm)])
    ground_truth = PoseTrajectory(t_sfm, gt_rot, gt_pos, scaled=True, point_count=profile.point_count)

    noisy_pos = gt_pos + profile.sfm_trans_noise_sigma * rng.standard_normal((n_sfm, 3))
    rot_noise = profile.sfm_rot_noise_sigma * rng.standard_normal((n_sfm, 3))
    noisy_rot = np.array([quat_canonical(quat_mul(q, quat_from_rotvec(e))) for q, e in zip(gt_rot, rot_noise)])
    sfm = PoseTrajectory(t_sfm, noisy_rot, noisy_pos / profile.true_lambda,
                         scaled=False, point_count=profile.point_count)

    _, vel0, _ = path(np.zeros(1))
    return SimBundle(profile, ground_truth, imu, sfm, pos, vel0[0])


def random_transform(rng: np.random.Generator, max_translation: float = 1.0) -> Pose:
    """Uniformly random rotation and a bounded random translation."""
    q = rng.standard_normal(4)
    return Pose(quat_canonical(q / np.linalg.norm(q)), rng.uniform(-max_translation, max_translation, 3))


@dataclass(frozen=True)
class OracleReport:
    """Recovered-versus-true calibration and trajectory errors for one bundle.

    Errors are summed over SfM frames against the metric ground truth, with no
    extra alignment. ``error`` holds the message of a failed stage; the metrics
    of later stages are then ``nan``.
    """

    seed: int
    true_lambda: float
    lam: float = math.nan
    lambda_rel_err: float = math.nan
    v0_err: float = math.nan  # m/s
    T_I_rot_err_deg: float = math.nan
    converged: bool = False
    fused_trans_err: float = math.nan
    fused_rot_err: float = math.nan
    imu_trans_err: float = math.nan
    sfm_trans_err: float = math.nan
    error: str | None = None

    @property
    def fusion_wins(self) -> bool:
        return self.fused_trans_err < min(self.imu_trans_err, self.sfm_trans_err)

    @property
    def degraded(self) -> bool:
        return self.error is not None or not self.converged

    def to_dict(self) -> dict:
        d = {f.name: getattr(self, f.name) for f in fields(self)}
        return {k: (None if isinstance(v, float) and math.isnan(v) else v) for k, v in d.items()}


def run_oracle_suite(profile: SimProfile, kalman_config=None) -> OracleReport:
    """Filter, integrate, calibrate, fuse and score one simulated bundle; never raises."""
    from .calibration import apply_scale, solve_calibration
    from .core_types import quat_geodesic_angle
    from .evaluation import rot_err, trans_err
    from .imu_signal import bandpass_accel
    from .kalman import fuse_trajectories, imu_only_trajectory

    kw: dict = {"seed": profile.seed, "true_lambda": profile.true_lambda}
    try:
        bundle = generate(profile)
        gt = bundle.ground_truth
        filtered = bandpass_accel(bundle.imu)
        calib = solve_calibration(filtered, bundle.sfm)
        kw.update(
            lam=calib.lam,
            lambda_rel_err=abs(calib.lam - profile.true_lambda) / profile.true_lambda,
            v0_err=float(np.linalg.norm(calib.v0 - bundle.v0)),
            T_I_rot_err_deg=math.degrees(quat_geodesic_angle(calib.T_I.rotation, profile.true_T_I.rotation)),
            converged=calib.converged,
        )
        sfm = apply_scale(bundle.sfm, calib.lam)
        kw["sfm_trans_err"] = trans_err(sfm, gt)
        kw["imu_trans_err"] = trans_err(imu_only_trajectory(filtered, calib, gt.timestamps), gt)
        fused = fuse_trajectories(filtered, sfm, calib, kalman_config).trajectory
        kw["fused_trans_err"] = trans_err(fused, gt)
        kw["fused_rot_err"] = rot_err(fused, gt)
    except Exception as exc:  # the report is the failure channel
        kw["error"] = f"{type(exc).__name__}: {exc}"
    return OracleReport(**kw)
