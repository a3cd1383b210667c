"""Pose, quaternion and trajectory primitives.

Conventions used everywhere in the package:

* quaternions are stored as ``(w, x, y, z)`` arrays;
* a :class:`Pose` maps points from the camera (body) frame into the world
  frame, ``p_world = R @ p_body + t``;
* frames are right-handed, camera looks along +z.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator, Optional, Sequence

import numpy as np
from numpy.typing import ArrayLike, NDArray

FloatArray = NDArray[np.float64]

IDENTITY_QUAT = np.array([1.0, 0.0, 0.0, 0.0])


class DegenerateQuaternionError(ValueError):
    pass


def _frozen(a: ArrayLike, shape: tuple[int, ...], name: str) -> FloatArray:
    out = np.array(a, dtype=np.float64)
    if out.shape != shape:
        raise ValueError(f"{name} must have shape {shape}, got {out.shape}")
    if not np.all(np.isfinite(out)):
        raise ValueError(f"{name} has non-finite components")
    out.flags.writeable = False
    return out


# ---------------------------------------------------------------------------
# quaternion helpers
# ---------------------------------------------------------------------------

def quat_normalize(q: ArrayLike) -> FloatArray:
    """Return ``q / |q|``; raises :class:`DegenerateQuaternionError` on zero norm."""
    q = np.asarray(q, dtype=np.float64)
    n = np.linalg.norm(q)
    if not np.isfinite(n) or n == 0.0:
        raise DegenerateQuaternionError("degenerate quaternion")
    return q / n


def quat_canonical(q: ArrayLike) -> FloatArray:
    """Flip the sign so that ``w >= 0`` (same rotation, unique storage)."""
    q = np.asarray(q, dtype=np.float64)
    return -q if q[0] < 0 else q.copy()


def quat_conj(q: ArrayLike) -> FloatArray:
    w, x, y, z = q
    return np.array([w, -x, -y, -z])


def quat_mul(a: ArrayLike, b: ArrayLike) -> FloatArray:
    """Hamilton product ``a ⊗ b``."""
    aw, ax, ay, az = a
    bw, bx, by, bz = b
    return np.array([
        aw * bw - ax * bx - ay * by - az * bz,
        aw * bx + ax * bw + ay * bz - az * by,
        aw * by - ax * bz + ay * bw + az * bx,
        aw * bz + ax * by - ay * bx + az * bw,
    ])


def quat_to_matrix(q: ArrayLike) -> FloatArray:
    w, x, y, z = quat_normalize(q)
    return np.array([
        [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
        [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
        [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
    ])


def matrix_to_quat(m: ArrayLike) -> FloatArray:
    """Rotation matrix to canonical unit quaternion (Shepperd's method)."""
    m = np.asarray(m, dtype=np.float64)
    tr = m[0, 0] + m[1, 1] + m[2, 2]
    if tr > 0:
        s = 2.0 * math.sqrt(tr + 1.0)
        q = [0.25 * s, (m[2, 1] - m[1, 2]) / s, (m[0, 2] - m[2, 0]) / s, (m[1, 0] - m[0, 1]) / s]
    elif m[0, 0] > m[1, 1] and m[0, 0] > m[2, 2]:
        s = 2.0 * math.sqrt(1.0 + m[0, 0] - m[1, 1] - m[2, 2])
        q = [(m[2, 1] - m[1, 2]) / s, 0.25 * s, (m[0, 1] + m[1, 0]) / s, (m[0, 2] + m[2, 0]) / s]
    elif m[1, 1] > m[2, 2]:
        s = 2.0 * math.sqrt(1.0 + m[1, 1] - m[0, 0] - m[2, 2])
        q = [(m[0, 2] - m[2, 0]) / s, (m[0, 1] + m[1, 0]) / s, 0.25 * s, (m[1, 2] + m[2, 1]) / s]
    else:
        s = 2.0 * math.sqrt(1.0 + m[2, 2] - m[0, 0] - m[1, 1])
        q = [(m[1, 0] - m[0, 1]) / s, (m[0, 2] + m[2, 0]) / s, (m[1, 2] + m[2, 1]) / s, 0.25 * s]
    return quat_canonical(quat_normalize(q))


def quat_from_rotvec(rv: ArrayLike) -> FloatArray:
    """Quaternion exponential of an axis-angle vector (angle = norm)."""
    rv = np.asarray(rv, dtype=np.float64)
    angle = float(np.linalg.norm(rv))
    if angle < 1e-12:
        # second-order series keeps the map smooth for numerical Jacobians
        q = np.concatenate([[1.0 - angle * angle / 8.0], 0.5 * rv])
        return q / np.linalg.norm(q)
    half = 0.5 * angle
    return np.concatenate([[math.cos(half)], math.sin(half) * rv / angle])


def quat_to_rotvec(q: ArrayLike) -> FloatArray:
    q = quat_canonical(quat_normalize(q))
    vn = float(np.linalg.norm(q[1:]))
    if vn < 1e-15:
        return 2.0 * q[1:]
    angle = 2.0 * math.atan2(vn, q[0])
    return q[1:] * (angle / vn)


def quat_rotate(q: ArrayLike, v: ArrayLike) -> FloatArray:
    return quat_to_matrix(q) @ np.asarray(v, dtype=np.float64)


def quat_geodesic_angle(a: ArrayLike, b: ArrayLike) -> float:
    """Rotation angle of ``a⁻¹ ⊗ b`` in ``[0, π]``; insensitive to sign flips."""
    d = quat_mul(quat_conj(quat_normalize(a)), quat_normalize(b))
    return 2.0 * math.atan2(float(np.linalg.norm(d[1:])), abs(float(d[0])))


# ---------------------------------------------------------------------------
# poses
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Pose:
    rotation: FloatArray = field(default_factory=lambda: IDENTITY_QUAT.copy())
    translation: FloatArray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self) -> None:
        q = _frozen(self.rotation, (4,), "rotation")
        q = quat_normalize(q)
        q.flags.writeable = False
        object.__setattr__(self, "rotation", q)
        object.__setattr__(self, "translation", _frozen(self.translation, (3,), "translation"))

    @classmethod
    def identity(cls) -> "Pose":
        return cls()

    @classmethod
    def from_matrix(cls, m: ArrayLike) -> "Pose":
        m = np.asarray(m, dtype=np.float64)
        return cls(matrix_to_quat(m[:3, :3]), m[:3, 3])

    @property
    def R(self) -> FloatArray:
        return quat_to_matrix(self.rotation)

    def matrix(self) -> FloatArray:
        out = np.eye(4)
        out[:3, :3] = self.R
        out[:3, 3] = self.translation
        return out

    def apply(self, points: ArrayLike) -> FloatArray:
        """Transform points of shape ``(3,)`` or ``(N, 3)``."""
        return np.asarray(points, dtype=np.float64) @ self.R.T + self.translation

    def canonical(self) -> "Pose":
        return Pose(quat_canonical(self.rotation), self.translation)


def pose_compose(a: Pose, b: Pose) -> Pose:
    """``a ∘ b``: apply ``b`` first, then ``a``."""
    return Pose(quat_mul(a.rotation, b.rotation), a.R @ b.translation + a.translation)


def pose_inverse(a: Pose) -> Pose:
    qi = quat_conj(a.rotation)
    return Pose(qi, -(quat_to_matrix(qi) @ a.translation))


def pose_relative(ref: Pose, p: Pose) -> Pose:
    """Pose of ``p`` expressed in the frame of ``ref``."""
    return pose_compose(pose_inverse(ref), p)


# ---------------------------------------------------------------------------
# trajectories and IMU data
# ---------------------------------------------------------------------------

def _check_increasing(t: FloatArray, what: str) -> None:
    if t.size > 1 and not np.all(np.diff(t) > 0):
        raise ValueError(f"{what} timestamps must be strictly increasing")


@dataclass(frozen=True)
class PoseTrajectory:
    """Timed pose sequence.

    ``scaled`` is True once translations are in metres; ``point_count`` is the
    number of reconstructed SfM points when known.
    """

    timestamps: FloatArray
    rotations: FloatArray
    translations: FloatArray
    scaled: bool = False
    point_count: Optional[int] = None

    def __post_init__(self) -> None:
        t = np.array(self.timestamps, dtype=np.float64).reshape(-1)
        n = t.size
        if n < 1:
            raise ValueError("trajectory needs at least one pose")
        q = np.array(self.rotations, dtype=np.float64).reshape(n, 4)
        tr = np.array(self.translations, dtype=np.float64).reshape(n, 3)
        if not (np.all(np.isfinite(t)) and np.all(np.isfinite(q)) and np.all(np.isfinite(tr))):
            raise ValueError("trajectory has non-finite values")
        _check_increasing(t, "trajectory")
        norms = np.linalg.norm(q, axis=1)
        if np.any(norms == 0):
            raise DegenerateQuaternionError("degenerate quaternion")
        q = q / norms[:, None]
        for a in (t, q, tr):
            a.flags.writeable = False
        object.__setattr__(self, "timestamps", t)
        object.__setattr__(self, "rotations", q)
        object.__setattr__(self, "translations", tr)
        if self.point_count is not None:
            object.__setattr__(self, "point_count", int(self.point_count))

    @classmethod
    def from_poses(cls, timestamps: ArrayLike, poses: Sequence[Pose], **kw) -> "PoseTrajectory":
        return cls(
            np.asarray(timestamps, dtype=np.float64),
            np.array([p.rotation for p in poses]).reshape(-1, 4),
            np.array([p.translation for p in poses]).reshape(-1, 3),
            **kw,
        )

    def __len__(self) -> int:
        return self.timestamps.size

    def __getitem__(self, k: int) -> Pose:
        return Pose(self.rotations[k], self.translations[k])

    def __iter__(self) -> Iterator[Pose]:
        return (self[k] for k in range(len(self)))

    @property
    def poses(self) -> list[Pose]:
        return list(self)

    def replace(self, **changes) -> "PoseTrajectory":
        kw = dict(
            timestamps=self.timestamps,
            rotations=self.rotations,
            translations=self.translations,
            scaled=self.scaled,
            point_count=self.point_count,
        )
        kw.update(changes)
        return PoseTrajectory(**kw)

    def path_length(self) -> float:
        return float(np.linalg.norm(np.diff(self.translations, axis=0), axis=1).sum())


@dataclass(frozen=True)
class ImuSample:
    t: float
    linear_accel: FloatArray
    angular_vel: FloatArray

    def __post_init__(self) -> None:
        if not math.isfinite(self.t):
            raise ValueError("non-finite sample time")
        object.__setattr__(self, "linear_accel", _frozen(self.linear_accel, (3,), "linear_accel"))
        object.__setattr__(self, "angular_vel", _frozen(self.angular_vel, (3,), "angular_vel"))


@dataclass(frozen=True)
class ImuSequence:
    """Columnar IMU log: times ``(N,)``, accelerations and angular rates ``(N, 3)``."""

    t: FloatArray
    accel: FloatArray
    gyro: FloatArray

    def __post_init__(self) -> None:
        t = np.array(self.t, dtype=np.float64).reshape(-1)
        a = np.array(self.accel, dtype=np.float64).reshape(t.size, 3)
        g = np.array(self.gyro, dtype=np.float64).reshape(t.size, 3)
        if not (np.all(np.isfinite(t)) and np.all(np.isfinite(a)) and np.all(np.isfinite(g))):
            raise ValueError("IMU sequence has non-finite values")
        _check_increasing(t, "IMU")
        for x in (t, a, g):
            x.flags.writeable = False
        object.__setattr__(self, "t", t)
        object.__setattr__(self, "accel", a)
        object.__setattr__(self, "gyro", g)

    @classmethod
    def from_samples(cls, samples: Sequence[ImuSample]) -> "ImuSequence":
        return cls(
            [s.t for s in samples],
            np.array([s.linear_accel for s in samples]).reshape(-1, 3),
            np.array([s.angular_vel for s in samples]).reshape(-1, 3),
        )

    def __len__(self) -> int:
        return self.t.size

    def __getitem__(self, k: int) -> ImuSample:
        return ImuSample(float(self.t[k]), self.accel[k], self.gyro[k])

    @property
    def samples(self) -> list[ImuSample]:
        return [self[k] for k in range(len(self))]

    def with_accel(self, accel: ArrayLike) -> "ImuSequence":
        return ImuSequence(self.t, accel, self.gyro)


# ---------------------------------------------------------------------------
# file formats
# ---------------------------------------------------------------------------

def fmt(x: float, digits: int = 9) -> str:
    """Fixed significant-digit formatting shared by every text writer."""
    s = f"{float(x):.{digits}g}"
    return "0" if s == "-0" else s


def write_trajectory(traj: PoseTrajectory, path: str | Path, digits: int = 9) -> None:
    pts = "-" if traj.point_count is None else str(traj.point_count)
    lines = [f"# scaled={int(traj.scaled)} points={pts}"]
    for t, q, tr in zip(traj.timestamps, traj.rotations, traj.translations):
        q = quat_canonical(q)
        vals = [t, *tr, *q]
        lines.append(" ".join(fmt(v, digits) for v in vals))
    Path(path).write_text("\n".join(lines) + "\n")


def read_trajectory(path: str | Path) -> PoseTrajectory:
    text = Path(path).read_text().splitlines()
    if not text or not text[0].startswith("#"):
        raise ValueError(f"{path}: missing '# scaled=.. points=..' header")
    meta = dict(tok.split("=", 1) for tok in text[0][1:].split() if "=" in tok)
    try:
        scaled = bool(int(meta["scaled"]))
        points = None if meta.get("points", "-") == "-" else int(meta["points"])
    except (KeyError, ValueError) as exc:
        raise ValueError(f"{path}: malformed header {text[0]!r}") from exc
    rows = []
    for lineno, line in enumerate(text[1:], start=2):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split()
        if len(parts) != 8:
            raise ValueError(f"{path}:{lineno}: expected 8 columns, got {len(parts)}")
        rows.append([float(p) for p in parts])
    if not rows:
        raise ValueError(f"{path}: no poses")
    a = np.array(rows)
    return PoseTrajectory(a[:, 0], a[:, 4:8], a[:, 1:4], scaled=scaled, point_count=points)


IMU_HEADER = "t,ax,ay,az,gx,gy,gz"


def write_imu_csv(seq: ImuSequence, path: str | Path, digits: int = 9) -> None:
    lines = [IMU_HEADER]
    data = np.column_stack([seq.t, seq.accel, seq.gyro])
    lines.extend(",".join(fmt(v, digits) for v in row) for row in data)
    Path(path).write_text("\n".join(lines) + "\n")


def read_imu_csv(path: str | Path) -> ImuSequence:
    text = Path(path).read_text().splitlines()
    if not text or text[0].strip().replace(" ", "") != IMU_HEADER:
        raise ValueError(f"{path}: expected header {IMU_HEADER!r}")
    rows = []
    for lineno, line in enumerate(text[1:], start=2):
        if not line.strip():
            continue
        parts = line.split(",")
        if len(parts) != 7:
            raise ValueError(f"{path}:{lineno}: expected 7 columns")
        rows.append([float(p) for p in parts])
    if not rows:
        raise ValueError(f"{path}: no samples")
    a = np.array(rows)
    return ImuSequence(a[:, 0], a[:, 1:4], a[:, 4:7])
