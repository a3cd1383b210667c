"""Per-pixel Plücker ray maps for camera poses.

For pixel ``(u, v)`` the ray vector is ``d = R K⁻¹ [u, v, 1]ᵀ + t`` and the
embedding is ``(t × d, d)``. ``d`` is deliberately left unnormalised and keeps
the ``+ t`` term.
"""
from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable

import numpy as np

from .core_types import FloatArray, Pose, PoseTrajectory, pose_relative

PLK_MAGIC = b"PLK1"


@dataclass(frozen=True)
class Intrinsics:
    fx: float
    fy: float
    cx: float
    cy: float
    width: int
    height: int

    def __post_init__(self) -> None:
        if not (self.fx > 0 and self.fy > 0):
            raise ValueError("focal lengths must be positive")
        if self.width < 1 or self.height < 1:
            raise ValueError("image size must be positive")
        if not (0 <= self.cx < self.width and 0 <= self.cy < self.height):
            raise ValueError("principal point must lie inside the image")

    @property
    def K(self) -> FloatArray:
        return np.array([[self.fx, 0.0, self.cx], [0.0, self.fy, self.cy], [0.0, 0.0, 1.0]])

    @property
    def K_inv(self) -> FloatArray:
        return np.array([
            [1.0 / self.fx, 0.0, -self.cx / self.fx],
            [0.0, 1.0 / self.fy, -self.cy / self.fy],
            [0.0, 0.0, 1.0],
        ])


def pluecker_embed(pose: Pose, K: Intrinsics, pixel_centers: bool = True) -> FloatArray:
    """Return a ``(height, width, 6)`` array of ``(m₁, m₂, m₃, d₁, d₂, d₃)``.

    ``pixel_centers`` samples at ``(u + 0.5, v + 0.5)``; pass False to use the
    integer pixel indices.
    """
    off = 0.5 if pixel_centers else 0.0
    u = np.arange(K.width, dtype=np.float64) + off
    v = np.arange(K.height, dtype=np.float64) + off
    uu, vv = np.meshgrid(u, v)
    pix = np.stack([uu, vv, np.ones_like(uu)], axis=-1)
    M = pose.R @ K.K_inv
    d = pix @ M.T + pose.translation
    m = np.cross(np.broadcast_to(pose.translation, d.shape), d)
    return np.concatenate([m, d], axis=-1)


def pluecker_pixel(pose: Pose, K: Intrinsics, u: float, v: float) -> FloatArray:
    """Single-pixel version, for spot checks."""
    d = pose.R @ (K.K_inv @ np.array([u, v, 1.0])) + pose.translation
    return np.concatenate([np.cross(pose.translation, d), d])


def relative_trajectory(traj: PoseTrajectory) -> PoseTrajectory:
    """Express every pose relative to the first one (which becomes identity)."""
    ref = traj[0]
    rel = [pose_relative(ref, p) for p in traj]
    return PoseTrajectory.from_poses(traj.timestamps, rel, scaled=traj.scaled, point_count=traj.point_count)


def write_plk(frames: Iterable[FloatArray], path: str | Path) -> None:
    """Write ``PLK1``: magic, u32 width, height, frame count, then f32 frames (row-major, channels interleaved)."""
    frames = [np.asarray(f) for f in frames]
    if not frames:
        h = w = 0
    else:
        h, w, c = frames[0].shape
        if c != 6 or any(f.shape != frames[0].shape for f in frames):
            raise ValueError("all frames must share one (height, width, 6) shape")
    with open(path, "wb") as fh:
        fh.write(PLK_MAGIC)
        fh.write(struct.pack("<III", w, h, len(frames)))
        for f in frames:
            fh.write(np.ascontiguousarray(f, dtype="<f4").tobytes())


def read_plk(path: str | Path) -> np.ndarray:
    """Return a ``(frames, height, width, 6)`` float32 array."""
    raw = Path(path).read_bytes()
    if raw[:4] != PLK_MAGIC:
        raise ValueError(f"{path}: not a PLK1 file")
    w, h, n = struct.unpack("<III", raw[4:16])
    expected = 16 + n * h * w * 6 * 4
    if len(raw) != expected:
        raise ValueError(f"{path}: truncated ({len(raw)} bytes, expected {expected})")
    return np.frombuffer(raw, dtype="<f4", offset=16).reshape(n, h, w, 6)


def embed_trajectory(traj: PoseTrajectory, K: Intrinsics, pixel_centers: bool = True,
                     relative: bool = True) -> list[FloatArray]:
    if relative:
        traj = relative_trajectory(traj)
    return [pluecker_embed(p, K, pixel_centers) for p in traj]
