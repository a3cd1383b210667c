"""Rotation and translation error between a generated and a reference trajectory."""
from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .core_types import FloatArray, Pose, PoseTrajectory, fmt, matrix_to_quat, pose_compose, pose_inverse, quat_mul


class DegenerateScaleError(ValueError):
    pass


def _check_lengths(gen: PoseTrajectory, gt: PoseTrajectory) -> None:
    if len(gen) != len(gt):
        raise ValueError(f"frame count mismatch: {len(gen)} vs {len(gt)}")


def _transform(traj: PoseTrajectory, T: Pose, scale: float, origin: FloatArray) -> PoseTrajectory:
    """Apply ``T`` to every pose, then scale translations by ``scale`` about ``origin``."""
    rot = np.array([quat_mul(T.rotation, q) for q in traj.rotations])
    trans = origin + scale * (T.apply(traj.translations) - origin)
    return traj.replace(rotations=rot, translations=trans)


def canonical_align(gen: PoseTrajectory, gt: PoseTrajectory) -> PoseTrajectory:
    """Move ``gen`` so its first pose equals ``gt``'s, then match total path length.

    The scale is applied about the first position, so the first pose stays fixed.
    """
    _check_lengths(gen, gt)
    if np.array_equal(gen.translations, gt.translations) and np.array_equal(gen.rotations, gt.rotations):
        return gen  # already canonical; skip the round-off of composing with an identity
    T = pose_compose(gt[0], pose_inverse(gen[0]))
    L_gen, L_gt = gen.path_length(), gt.path_length()
    if L_gen == 0.0:
        if L_gt != 0.0:
            raise DegenerateScaleError("degenerate scale")
        scale = 1.0
    else:
        scale = L_gt / L_gen
    out = _transform(gen, T, scale, gt.translations[0])
    # first frame coincides exactly, not just to rounding
    rot = np.array(out.rotations)
    trans = np.array(out.translations)
    rot[0], trans[0] = gt.rotations[0], gt.translations[0]
    return out.replace(rotations=rot, translations=trans)


def umeyama_align(gen: PoseTrajectory, gt: PoseTrajectory) -> PoseTrajectory:
    """Least-squares similarity transform of ``gen`` positions onto ``gt`` positions."""
    _check_lengths(gen, gt)
    X, Y = gen.translations, gt.translations
    mx, my = X.mean(axis=0), Y.mean(axis=0)
    Xc, Yc = X - mx, Y - my
    var_x = float(np.mean(np.sum(Xc * Xc, axis=1)))
    if var_x == 0.0:
        raise DegenerateScaleError("degenerate scale")
    U, D, Vt = np.linalg.svd(Yc.T @ Xc / X.shape[0])
    S = np.eye(3)
    if np.linalg.det(U) * np.linalg.det(Vt) < 0:
        S[2, 2] = -1.0
    R = U @ S @ Vt
    s = float(np.trace(np.diag(D) @ S)) / var_x
    t = my - s * R @ mx
    rot = np.array([quat_mul(matrix_to_quat(R), q) for q in gen.rotations])
    return gen.replace(rotations=rot, translations=s * X @ R.T + t)


def rotation_errors(gen: PoseTrajectory, gt: PoseTrajectory) -> FloatArray:
    """Per-frame angle of ``R_gen R_gtᵀ``, i.e. ``arccos((tr − 1) / 2)``.

    Evaluated as ``2·atan2(|v|, |w|)`` on the relative quaternion, which equals the
    trace form but stays exact at 0 (identical rotations give exactly 0).
    """
    _check_lengths(gen, gt)
    a, b = gen.rotations, gt.rotations
    # a ⊗ conj(b), grouped so that a == b cancels term by term
    w = np.sum(a * b, axis=1)
    v = b[:, :1] * a[:, 1:] - a[:, :1] * b[:, 1:] - np.cross(a[:, 1:], b[:, 1:])
    return 2.0 * np.arctan2(np.linalg.norm(v, axis=1), np.abs(w))


def translation_errors(gen: PoseTrajectory, gt: PoseTrajectory) -> FloatArray:
    _check_lengths(gen, gt)
    return np.linalg.norm(gen.translations - gt.translations, axis=1)


def rot_err(gen: PoseTrajectory, gt: PoseTrajectory) -> float:
    return float(rotation_errors(gen, gt).sum())


def trans_err(gen: PoseTrajectory, gt: PoseTrajectory) -> float:
    return float(translation_errors(gen, gt).sum())


@dataclass(frozen=True)
class TrajectoryError:
    rot_err: float  # radians, summed over frames
    trans_err: float  # metres, summed over frames
    per_frame: tuple[tuple[float, float], ...]
    n_frames: int

    def to_dict(self) -> dict:
        return {
            "rot_err": float(fmt(self.rot_err)),
            "trans_err": float(fmt(self.trans_err)),
            "n_frames": self.n_frames,
            "per_frame": [[float(fmt(r)), float(fmt(t))] for r, t in self.per_frame],
        }

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2) + "\n")


def evaluate(gen: PoseTrajectory, gt: PoseTrajectory, align: str | None = "canonical") -> TrajectoryError:
    """Align ``gen`` (``"canonical"``, ``"umeyama"`` or ``None``) and score it against ``gt``."""
    if align == "canonical":
        gen = canonical_align(gen, gt)
    elif align == "umeyama":
        gen = umeyama_align(gen, gt)
    elif align is not None:
        raise ValueError(f"unknown alignment {align!r}")
    r = rotation_errors(gen, gt)
    t = translation_errors(gen, gt)
    return TrajectoryError(float(r.sum()), float(t.sum()),
                           tuple(zip(r.tolist(), t.tolist())), len(gt))
