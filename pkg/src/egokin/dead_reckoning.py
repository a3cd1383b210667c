"""Translation-only IMU dead reckoning.

``P(k+1) = P(k) + v(k) dt + a(k) dt² / 2`` and ``v(k+1) = v(k) + a(k) dt`` with
``P(0) = 0``; ``dt`` comes from the timestamps, so uneven sampling is allowed.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.typing import ArrayLike

from . import _kernels
from .core_types import FloatArray, ImuSequence


@dataclass(frozen=True)
class ImuTrajectory:
    timestamps: FloatArray
    positions: FloatArray
    velocities: FloatArray

    def __len__(self) -> int:
        return self.timestamps.size


def integrate(seq: ImuSequence, v0: ArrayLike = (0.0, 0.0, 0.0)) -> ImuTrajectory:
    if len(seq) < 2:
        raise ValueError("need at least 2 IMU samples to integrate")
    v0 = np.asarray(v0, dtype=np.float64).reshape(3)
    pos, vel = _kernels.dead_reckon(seq.t, seq.accel, v0)
    return ImuTrajectory(seq.t, pos, vel)
