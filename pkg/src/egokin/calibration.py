"""Joint estimation of initial velocity, IMU-to-camera transform and SfM scale.

Minimises ``sum_t |T_I · P_I(t; v0) - λ · P_c(t)|²`` over ten parameters
``[v0 (3), rotation vector (3), translation (3), log λ]`` with a
Levenberg-Marquardt loop on a central-difference Jacobian. ``P_I`` is
re-integrated from the accelerometer for every candidate ``v0``.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import _kernels
from .core_types import (
    FloatArray,
    ImuSequence,
    Pose,
    PoseTrajectory,
    fmt,
    matrix_to_quat,
    quat_from_rotvec,
    quat_to_matrix,
    quat_to_rotvec,
)

MIN_FRAMES = 8
MAX_GAP = 0.010


class UnderdeterminedError(ValueError):
    pass


class AssociationError(ValueError):
    pass


def associate(query_t, ref_t, max_gap: float = MAX_GAP):
    """Index of the nearest ``ref_t`` for every ``query_t`` and a within-gap mask."""
    query_t = np.asarray(query_t, dtype=np.float64)
    ref_t = np.asarray(ref_t, dtype=np.float64)
    hi = np.clip(np.searchsorted(ref_t, query_t), 1, ref_t.size - 1) if ref_t.size > 1 else np.zeros(query_t.size, int)
    if ref_t.size > 1:
        lo = hi - 1
        idx = np.where(np.abs(query_t - ref_t[lo]) <= np.abs(ref_t[hi] - query_t), lo, hi)
    else:
        idx = hi
    ok = np.abs(ref_t[idx] - query_t) <= max_gap + 1e-12
    return idx, ok


@dataclass(frozen=True)
class CalibrationResult:
    v0: FloatArray
    T_I: Pose
    lam: float
    residual_rms: float
    iterations: int
    converged: bool
    cost: float = 0.0
    n_frames: int = 0

    def __post_init__(self) -> None:
        if not self.lam > 0:
            raise ValueError("lambda must be positive")

    def to_dict(self) -> dict:
        return {
            "v0": [float(fmt(v)) for v in self.v0],
            "T_I": {
                "rotation": [float(fmt(v)) for v in self.T_I.canonical().rotation],
                "translation": [float(fmt(v)) for v in self.T_I.translation],
            },
            "lambda": float(fmt(self.lam)),
            "residual_rms": float(fmt(self.residual_rms)),
            "iterations": self.iterations,
            "converged": self.converged,
            "cost": float(fmt(self.cost)),
            "n_frames": self.n_frames,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "CalibrationResult":
        return cls(
            v0=np.asarray(d["v0"], dtype=np.float64),
            T_I=Pose(d["T_I"]["rotation"], d["T_I"]["translation"]),
            lam=float(d["lambda"]),
            residual_rms=float(d.get("residual_rms", 0.0)),
            iterations=int(d.get("iterations", 0)),
            converged=bool(d.get("converged", True)),
            cost=float(d.get("cost", 0.0)),
            n_frames=int(d.get("n_frames", 0)),
        )

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n")

    @classmethod
    def load(cls, path: str | Path) -> "CalibrationResult":
        return cls.from_dict(json.loads(Path(path).read_text()))


@dataclass(frozen=True)
class CalibrationOptions:
    max_iterations: int = 200
    ftol: float = 1e-10
    gtol: float = 1e-8
    jac_step: float = 1e-6
    endpoint_only: bool = False
    max_gap: float = MAX_GAP
    restarts: int = 4
    seed: int = 0


def apply_scale(sfm: PoseTrajectory, lam: float) -> PoseTrajectory:
    if not lam > 0:
        raise ValueError("lambda must be > 0")
    return sfm.replace(translations=sfm.translations * lam, scaled=True)


def _unpack(theta: FloatArray):
    return theta[0:3], quat_to_matrix(quat_from_rotvec(theta[3:6])), theta[6:9], math.exp(theta[9])


class _Problem:
    def __init__(self, seq: ImuSequence, sfm: PoseTrajectory, opts: CalibrationOptions):
        idx, ok = associate(sfm.timestamps, seq.t, opts.max_gap)
        if not np.all(ok):
            bad = sfm.timestamps[~ok][0]
            raise AssociationError(f"SfM frame at t={bad:.6f} has no IMU sample within {opts.max_gap * 1e3:.0f} ms")
        if opts.endpoint_only:
            idx = idx[-1:]
            pc = sfm.translations[-1:]
        else:
            pc = sfm.translations
        self.seq = seq
        self.idx = idx
        self.pc = np.asarray(pc)
        # integration only needs samples up to the last associated frame
        self.last = int(idx.max()) + 1
        self.t = seq.t[: self.last]
        self.acc = seq.accel[: self.last]

    def positions(self, v0: FloatArray) -> FloatArray:
        pos, _ = _kernels.dead_reckon(self.t, self.acc, v0)
        return pos[self.idx]

    def residual(self, theta: FloatArray) -> FloatArray:
        v0, R, t, lam = _unpack(theta)
        return (self.positions(v0) @ R.T + t - lam * self.pc).ravel()

    def jacobian(self, theta: FloatArray, rel_step: float) -> FloatArray:
        cols = []
        for j in range(theta.size):
            h = rel_step * max(1.0, abs(theta[j]))
            tp = theta.copy()
            tm = theta.copy()
            tp[j] += h
            tm[j] -= h
            cols.append((self.residual(tp) - self.residual(tm)) / (2.0 * h))
        return np.column_stack(cols)


def _levenberg_marquardt(problem: _Problem, theta0: FloatArray, opts: CalibrationOptions):
    theta = theta0.astype(np.float64).copy()
    r = problem.residual(theta)
    cost = float(r @ r)
    mu = None
    nu = 2.0
    converged = False
    it = 0
    for it in range(1, opts.max_iterations + 1):
        J = problem.jacobian(theta, opts.jac_step)
        g = J.T @ r
        if np.linalg.norm(g) < opts.gtol or cost == 0.0:
            converged = True
            break
        A = J.T @ J
        D = np.maximum(np.diag(A), 1e-12)
        if mu is None:
            mu = 1e-3
        stepped = False
        while mu < 1e16:
            try:
                delta = np.linalg.solve(A + mu * np.diag(D), -g)
            except np.linalg.LinAlgError:
                mu *= nu
                nu *= 2.0
                continue
            cand = theta + delta
            r_new = problem.residual(cand)
            cost_new = float(r_new @ r_new)
            predicted = float(delta @ (mu * D * delta - g))
            if np.isfinite(cost_new) and cost_new < cost and predicted > 0:
                rho = (cost - cost_new) / predicted
                mu *= max(1.0 / 3.0, 1.0 - (2.0 * rho - 1.0) ** 3)
                nu = 2.0
                rel = (cost - cost_new) / cost
                theta, r, cost = cand, r_new, cost_new
                stepped = True
                if rel < opts.ftol:
                    converged = True
                break
            mu *= nu
            nu *= 2.0
        if converged:
            break
        if not stepped:
            # no descent direction left at machine precision: a stationary point
            converged = True
            break
    return theta, cost, it, converged


def _linear_init(problem: _Problem, sfm_t: FloatArray) -> FloatArray | None:
    """Closed-form start from the relaxation ``P_c ≈ M P0 + w τ + c`` (M unconstrained)."""
    p0 = problem.positions(np.zeros(3))
    if problem.idx.size < 5:
        return None
    tau = problem.t[problem.idx] - problem.t[0]
    X = np.column_stack([p0, tau, np.ones(tau.size)])
    sv = np.linalg.svd(X, compute_uv=False)
    if sv[-1] <= 1e-9 * sv[0]:
        return None
    B, *_ = np.linalg.lstsq(X, problem.pc, rcond=None)
    M = B[:3].T
    U, S, Vt = np.linalg.svd(M)
    if S.mean() <= 0:
        return None
    d = np.sign(np.linalg.det(U @ Vt)) or 1.0
    R = U @ np.diag([1.0, 1.0, d]) @ Vt
    lam = 1.0 / S.mean()
    v0 = lam * R.T @ B[3]
    t = lam * B[4]
    return np.concatenate([v0, quat_to_rotvec(matrix_to_quat(R)), t, [math.log(lam)]])


def _default_init(problem: _Problem, seq: ImuSequence, sfm: PoseTrajectory, rotvec=np.zeros(3)) -> FloatArray:
    p0 = problem.positions(np.zeros(3))
    imu_len = float(np.linalg.norm(np.diff(p0, axis=0), axis=1).sum()) if p0.shape[0] > 1 else 0.0
    sfm_len = sfm.path_length()
    lam = imu_len / sfm_len if imu_len > 0 and sfm_len > 0 else 1.0
    return np.concatenate([np.zeros(3), rotvec, np.zeros(3), [math.log(lam)]])


def solve_calibration(
    seq: ImuSequence,
    sfm: PoseTrajectory,
    opts: CalibrationOptions | None = None,
) -> CalibrationResult:
    opts = opts or CalibrationOptions()
    if len(sfm) < MIN_FRAMES:
        raise UnderdeterminedError(f"underdetermined: {len(sfm)} SfM frames, need >= {MIN_FRAMES}")
    if sfm.scaled:
        raise ValueError("calibration expects an unscaled SfM trajectory")
    problem = _Problem(seq, sfm, opts)

    starts = []
    lin = None if opts.endpoint_only else _linear_init(problem, sfm.timestamps)
    if lin is not None:
        starts.append(lin)
    starts.append(_default_init(problem, seq, sfm))

    best = None
    for theta0 in starts:
        cand = _levenberg_marquardt(problem, theta0, opts)
        if best is None or cand[1] < best[1]:
            best = cand
        if cand[3]:
            break
    if not best[3]:
        rng = np.random.default_rng(opts.seed)
        for _ in range(opts.restarts):
            axis = rng.normal(size=3)
            rv = axis / np.linalg.norm(axis) * rng.uniform(0, math.pi)
            cand = _levenberg_marquardt(problem, _default_init(problem, seq, sfm, rv), opts)
            if cand[1] < best[1] or (cand[3] and not best[3] and cand[1] <= best[1] * (1 + 1e-9)):
                best = cand

    theta, cost, iters, converged = best
    v0, R, t, lam = _unpack(theta)
    n = problem.idx.size
    return CalibrationResult(
        v0=v0.copy(),
        T_I=Pose(matrix_to_quat(R), t),
        lam=lam,
        residual_rms=math.sqrt(cost / n),
        iterations=iters,
        converged=converged,
        cost=cost,
        n_frames=n,
    )


def calibration_cost(seq: ImuSequence, sfm: PoseTrajectory, result: CalibrationResult,
                     endpoint_only: bool = False) -> float:
    """Direct evaluation of the objective at ``result`` (independent of the solver's bookkeeping)."""
    idx, _ = associate(sfm.timestamps, seq.t)
    pos, _ = _kernels.dead_reckon(seq.t, seq.accel, result.v0)
    p = result.T_I.apply(pos[idx]) - result.lam * sfm.translations
    if endpoint_only:
        p = p[-1:]
    return float(np.sum(p * p))


def imu_positions(seq: ImuSequence, result: CalibrationResult, timestamps) -> FloatArray:
    """Dead-reckoned IMU positions mapped through ``T_I`` at the given times."""
    idx, _ = associate(timestamps, seq.t)
    pos, _ = _kernels.dead_reckon(seq.t, seq.accel, result.v0)
    return result.T_I.apply(pos[idx])
