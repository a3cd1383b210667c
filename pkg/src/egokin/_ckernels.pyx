# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled versions of the per-sample loops in ``_kernels_py``."""
import numpy as np
cimport numpy as cnp
from libc.math cimport sqrt, sin, cos

cnp.import_array()


def dead_reckon(t, accel, v0):
    cdef const double[::1] tt = np.ascontiguousarray(t, dtype=np.float64)
    cdef const double[:, ::1] a = np.ascontiguousarray(accel, dtype=np.float64)
    cdef Py_ssize_t n = tt.shape[0]
    pos_arr = np.zeros((n, 3))
    vel_arr = np.empty((n, 3))
    cdef double[:, ::1] pos = pos_arr
    cdef double[:, ::1] vel = vel_arr
    cdef Py_ssize_t k, i
    cdef double dt
    v0_arr = np.asarray(v0, dtype=np.float64)
    for i in range(3):
        vel[0, i] = v0_arr[i]
    for k in range(n - 1):
        dt = tt[k + 1] - tt[k]
        for i in range(3):
            pos[k + 1, i] = pos[k, i] + vel[k, i] * dt + 0.5 * a[k, i] * dt * dt
            vel[k + 1, i] = vel[k, i] + a[k, i] * dt
    return pos_arr, vel_arr


cdef void _transition(const double* x, const double* acc, const double* gyro,
                      double dt, double* out) noexcept nogil:
    cdef double qw = x[3], qx = x[4], qy = x[5], qz = x[6]
    cdef double nrm = sqrt(qw * qw + qx * qx + qy * qy + qz * qz)
    cdef double w = qw / nrm, xx = qx / nrm, y = qy / nrm, z = qz / nrm
    cdef double r00 = 1 - 2 * (y * y + z * z), r01 = 2 * (xx * y - w * z), r02 = 2 * (xx * z + w * y)
    cdef double r10 = 2 * (xx * y + w * z), r11 = 1 - 2 * (xx * xx + z * z), r12 = 2 * (y * z - w * xx)
    cdef double r20 = 2 * (xx * z - w * y), r21 = 2 * (y * z + w * xx), r22 = 1 - 2 * (xx * xx + y * y)
    cdef double aw0 = r00 * acc[0] + r01 * acc[1] + r02 * acc[2]
    cdef double aw1 = r10 * acc[0] + r11 * acc[1] + r12 * acc[2]
    cdef double aw2 = r20 * acc[0] + r21 * acc[1] + r22 * acc[2]
    cdef double wn = sqrt(gyro[0] * gyro[0] + gyro[1] * gyro[1] + gyro[2] * gyro[2])
    cdef double bw, bx, by, bz, s
    if wn * dt < 1e-12:
        bw = 1.0
        bx = 0.5 * dt * gyro[0]
        by = 0.5 * dt * gyro[1]
        bz = 0.5 * dt * gyro[2]
    else:
        s = sin(0.5 * wn * dt) / wn
        bw = cos(0.5 * wn * dt)
        bx = s * gyro[0]
        by = s * gyro[1]
        bz = s * gyro[2]
    out[0] = x[0] + x[7] * dt + 0.5 * aw0 * dt * dt
    out[1] = x[1] + x[8] * dt + 0.5 * aw1 * dt * dt
    out[2] = x[2] + x[9] * dt + 0.5 * aw2 * dt * dt
    out[3] = qw * bw - qx * bx - qy * by - qz * bz
    out[4] = qw * bx + qx * bw + qy * bz - qz * by
    out[5] = qw * by - qx * bz + qy * bw + qz * bx
    out[6] = qw * bz + qx * by - qy * bx + qz * bw
    out[7] = x[7] + aw0 * dt
    out[8] = x[8] + aw1 * dt
    out[9] = x[9] + aw2 * dt


cdef void _jacobian(const double* x, const double* acc, const double* gyro,
                    double dt, double h, double* F) noexcept nogil:
    cdef double xp[10]
    cdef double xm[10]
    cdef double fp[10]
    cdef double fm[10]
    cdef int i, j
    for j in range(10):
        for i in range(10):
            xp[i] = x[i]
            xm[i] = x[i]
        xp[j] += h
        xm[j] -= h
        _transition(xp, acc, gyro, dt, fp)
        _transition(xm, acc, gyro, dt, fm)
        for i in range(10):
            F[i * 10 + j] = (fp[i] - fm[i]) / (2.0 * h)


def ekf_transition(x, accel, gyro, double dt):
    cdef const double[::1] xv = np.ascontiguousarray(x, dtype=np.float64)
    cdef const double[::1] av = np.ascontiguousarray(accel, dtype=np.float64)
    cdef const double[::1] gv = np.ascontiguousarray(gyro, dtype=np.float64)
    out_arr = np.empty(10)
    cdef double[::1] out = out_arr
    _transition(&xv[0], &av[0], &gv[0], dt, &out[0])
    return out_arr


def transition_jacobian(x, accel, gyro, double dt, double h=1e-6):
    cdef const double[::1] xv = np.ascontiguousarray(x, dtype=np.float64)
    cdef const double[::1] av = np.ascontiguousarray(accel, dtype=np.float64)
    cdef const double[::1] gv = np.ascontiguousarray(gyro, dtype=np.float64)
    F_arr = np.empty((10, 10))
    cdef double[:, ::1] F = F_arr
    _jacobian(&xv[0], &av[0], &gv[0], dt, h, &F[0, 0])
    return F_arr


def ekf_predict_step(x, P, accel, gyro, double dt, Q, double h=1e-6):
    cdef const double[::1] xv = np.ascontiguousarray(x, dtype=np.float64)
    cdef const double[::1] av = np.ascontiguousarray(accel, dtype=np.float64)
    cdef const double[::1] gv = np.ascontiguousarray(gyro, dtype=np.float64)
    cdef const double[:, ::1] Pv = np.ascontiguousarray(P, dtype=np.float64)
    cdef const double[:, ::1] Qv = np.ascontiguousarray(Q, dtype=np.float64)
    xn_arr = np.empty(10)
    Pn_arr = np.empty((10, 10))
    cdef double[::1] xn = xn_arr
    cdef double[:, ::1] Pn = Pn_arr
    cdef double F[100]
    cdef double FP[100]
    cdef double acc, nrm
    cdef int i, j, k
    with nogil:
        _jacobian(&xv[0], &av[0], &gv[0], dt, h, F)
        _transition(&xv[0], &av[0], &gv[0], dt, &xn[0])
        nrm = sqrt(xn[3] * xn[3] + xn[4] * xn[4] + xn[5] * xn[5] + xn[6] * xn[6])
        for i in range(3, 7):
            xn[i] = xn[i] / nrm
        for i in range(10):
            for j in range(10):
                acc = 0.0
                for k in range(10):
                    acc = acc + F[i * 10 + k] * Pv[k, j]
                FP[i * 10 + j] = acc
        for i in range(10):
            for j in range(10):
                acc = 0.0
                for k in range(10):
                    acc = acc + FP[i * 10 + k] * F[j * 10 + k]
                Pn[i, j] = acc + Qv[i, j]
        for i in range(10):
            for j in range(i + 1, 10):
                acc = 0.5 * (Pn[i, j] + Pn[j, i])
                Pn[i, j] = acc
                Pn[j, i] = acc
    return xn_arr, Pn_arr
