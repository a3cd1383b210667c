"""Reference numpy implementations of the hot loops.

These are what ``egokin._kernels`` exposes when the compiled extension is not
importable. Signatures and semantics match ``_ckernels.pyx`` exactly.
"""
from __future__ import annotations

import math

import numpy as np


def dead_reckon(t, accel, v0):
    """Forward recursion ``P += v dt + a dt²/2``, ``v += a dt`` from ``P(0) = 0``.

    Acceleration is taken at the left end of each step.
    """
    t = np.ascontiguousarray(t, dtype=np.float64)
    a = np.ascontiguousarray(accel, dtype=np.float64)
    n = t.size
    pos = np.zeros((n, 3))
    vel = np.empty((n, 3))
    vel[0] = v0
    if n > 1:
        dt = np.diff(t)[:, None]
        vel[1:] = v0 + np.cumsum(a[:-1] * dt, axis=0)
        pos[1:] = np.cumsum(vel[:-1] * dt + 0.5 * a[:-1] * dt * dt, axis=0)
    return pos, vel


def _rotmat(q):
    w, x, y, z = q / math.sqrt(q[0] * q[0] + q[1] * q[1] + q[2] * q[2] + q[3] * q[3])
    return np.array([
        [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
        [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
        [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
    ])


def _gyro_increment(gyro, dt):
    wn = math.sqrt(gyro[0] ** 2 + gyro[1] ** 2 + gyro[2] ** 2)
    half = 0.5 * wn * dt
    if wn * dt < 1e-12:
        return np.array([1.0, 0.5 * dt * gyro[0], 0.5 * dt * gyro[1], 0.5 * dt * gyro[2]])
    s = math.sin(half) / wn
    return np.array([math.cos(half), s * gyro[0], s * gyro[1], s * gyro[2]])


def ekf_transition(x, accel, gyro, dt):
    """State transition for ``[p(3), q(4, wxyz), v(3)]`` with body-frame IMU input."""
    x = np.asarray(x, dtype=np.float64)
    aw = _rotmat(x[3:7]) @ np.asarray(accel, dtype=np.float64)
    dq = _gyro_increment(np.asarray(gyro, dtype=np.float64), dt)
    qw, qx, qy, qz = x[3:7]
    bw, bx, by, bz = dq
    out = np.empty(10)
    out[0:3] = x[0:3] + x[7:10] * dt + 0.5 * aw * dt * dt
    out[3] = qw * bw - qx * bx - qy * by - qz * bz
    out[4] = qw * bx + qx * bw + qy * bz - qz * by
    out[5] = qw * by - qx * bz + qy * bw + qz * bx
    out[6] = qw * bz + qx * by - qy * bx + qz * bw
    out[7:10] = x[7:10] + aw * dt
    return out


def transition_jacobian(x, accel, gyro, dt, h=1e-6):
    x = np.asarray(x, dtype=np.float64)
    F = np.empty((10, 10))
    for j in range(10):
        xp = x.copy()
        xm = x.copy()
        xp[j] += h
        xm[j] -= h
        F[:, j] = (ekf_transition(xp, accel, gyro, dt) - ekf_transition(xm, accel, gyro, dt)) / (2.0 * h)
    return F


def ekf_predict_step(x, P, accel, gyro, dt, Q, h=1e-6):
    """One prediction: ``x ← f(x, u)`` (quaternion renormalized), ``P ← F P Fᵀ + Q``."""
    F = transition_jacobian(x, accel, gyro, dt, h)
    xn = ekf_transition(x, accel, gyro, dt)
    xn[3:7] /= np.linalg.norm(xn[3:7])
    Pn = F @ np.asarray(P, dtype=np.float64) @ F.T + Q
    Pn = 0.5 * (Pn + Pn.T)
    return xn, Pn
