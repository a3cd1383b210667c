"""Frequency-domain Butterworth filtering and IMU quality gating.

The filters are the Butterworth magnitude responses applied directly as a
mask on the FFT bins, ``ifft(H(|f|) * fft(x))``, not a realised IIR filter.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Literal

import numpy as np
from numpy.typing import ArrayLike

from .core_types import FloatArray, ImuSequence, PoseTrajectory

DEFAULT_RATE = 200.0
DEFAULT_GRAVITY_CUT = 0.25
DEFAULT_NOISE_CUT = 15.0
DEFAULT_ORDER = 4


class FilterKind(str, enum.Enum):
    LOW_PASS = "low"
    HIGH_PASS = "high"


@dataclass(frozen=True)
class FilterSpec:
    cutoff_hz: float
    order: int = DEFAULT_ORDER
    kind: FilterKind = FilterKind.LOW_PASS

    def __post_init__(self) -> None:
        if not self.cutoff_hz > 0:
            raise ValueError("cutoff_hz must be > 0")
        if int(self.order) != self.order or self.order < 1:
            raise ValueError("order must be a positive integer")
        object.__setattr__(self, "kind", FilterKind(self.kind))

    def response(self, freq: ArrayLike) -> FloatArray:
        return butterworth_gain(freq, self.cutoff_hz, self.order, self.kind)


def butterworth_gain(freq: ArrayLike, cutoff_hz: float, order: int, kind: FilterKind) -> FloatArray:
    """``1/(1+r)`` (low) or ``r/(1+r)`` (high) with ``r = (|f|/w_c)^(2n)``."""
    with np.errstate(over="ignore", invalid="ignore"):
        r = (np.abs(np.asarray(freq, dtype=np.float64)) / cutoff_hz) ** (2 * int(order))
        low = 1.0 / (1.0 + r)
        if FilterKind(kind) is FilterKind.LOW_PASS:
            return low
        return np.where(np.isinf(r), 1.0, r * low)


def fft_filter(signal: ArrayLike, sample_rate: float, spec: FilterSpec) -> FloatArray:
    x = np.asarray(signal, dtype=np.float64)
    if x.ndim != 1 or x.size < 2:
        raise ValueError("signal must be 1-D with at least 2 samples")
    if not np.all(np.isfinite(x)):
        raise ValueError("signal contains non-finite samples")
    if not sample_rate > 0:
        raise ValueError("sample_rate must be > 0")
    spectrum = np.fft.rfft(x)
    freqs = np.fft.rfftfreq(x.size, d=1.0 / sample_rate)
    return np.fft.irfft(spec.response(freqs) * spectrum, n=x.size)


def resample_uniform(seq: ImuSequence, rate: float = DEFAULT_RATE) -> ImuSequence:
    """Linearly interpolate every channel onto ``t0 + k / rate`` within ``[t0, t_end]``."""
    if not rate > 0:
        raise ValueError("rate must be > 0")
    if len(seq) < 2:
        raise ValueError("need at least 2 samples to resample")
    t0, t1 = seq.t[0], seq.t[-1]
    # the 1e-9 slack keeps a sample that lands on t_end up to rounding
    n = int(np.floor((t1 - t0) * rate + 1e-9)) + 1
    grid = t0 + np.arange(n) / rate
    acc = np.column_stack([np.interp(grid, seq.t, seq.accel[:, i]) for i in range(3)])
    gyr = np.column_stack([np.interp(grid, seq.t, seq.gyro[:, i]) for i in range(3)])
    return ImuSequence(grid, acc, gyr)


def is_uniform(seq: ImuSequence, rtol: float = 1e-6) -> bool:
    if len(seq) < 2:
        return True
    dt = np.diff(seq.t)
    return bool(np.all(np.abs(dt - dt.mean()) <= rtol * dt.mean()))


def sample_rate(seq: ImuSequence) -> float:
    return (len(seq) - 1) / float(seq.t[-1] - seq.t[0])


def bandpass_accel(
    seq: ImuSequence,
    gravity_cut: FilterSpec | None = None,
    noise_cut: FilterSpec | None = None,
) -> ImuSequence:
    """High-pass (gravity) then low-pass (noise) each accelerometer axis.

    Angular velocity is passed through untouched.
    """
    gravity_cut = gravity_cut or FilterSpec(DEFAULT_GRAVITY_CUT, DEFAULT_ORDER, FilterKind.HIGH_PASS)
    noise_cut = noise_cut or FilterSpec(DEFAULT_NOISE_CUT, DEFAULT_ORDER, FilterKind.LOW_PASS)
    if not is_uniform(seq):
        raise ValueError("bandpass_accel needs uniformly sampled input; call resample_uniform first")
    fs = sample_rate(seq)
    out = np.empty_like(seq.accel)
    for i in range(3):
        out[:, i] = fft_filter(fft_filter(seq.accel[:, i], fs, gravity_cut), fs, noise_cut)
    return seq.with_accel(out)


VarianceMode = Literal["magnitude", "per_axis"]


def imu_variance(seq: ImuSequence, mode: VarianceMode = "magnitude") -> float:
    """Population variance of the acceleration.

    ``magnitude`` uses the per-sample norm ``|a_t|``; ``per_axis`` sums the
    three per-axis variances.
    """
    if len(seq) < 1:
        raise ValueError("empty IMU sequence")
    if mode == "magnitude":
        x = np.linalg.norm(seq.accel, axis=1)[:, None]
    elif mode == "per_axis":
        x = seq.accel
    else:
        raise ValueError(f"unknown variance mode {mode!r}")
    # constant columns are exactly zero (np.var leaves rounding residue from the mean)
    var = np.where(np.all(x == x[0], axis=0), 0.0, np.var(x, axis=0))
    return float(var.sum())


@dataclass(frozen=True)
class QualityThresholds:
    min_points: int
    max_variance: float
    variance_mode: VarianceMode = "magnitude"

    def __post_init__(self) -> None:
        if self.min_points < 0:
            raise ValueError("min_points must be >= 0")
        if not self.max_variance > 0:
            raise ValueError("max_variance must be > 0")


@dataclass(frozen=True)
class GateResult:
    passed: bool
    reasons: tuple[str, ...] = ()
    variance: float = 0.0

    def __bool__(self) -> bool:
        return self.passed

    @property
    def status(self) -> str:
        return "ok" if self.passed else "rejected:" + ",".join(self.reasons)


class MissingDiagnosticsError(ValueError):
    pass


def quality_gate(traj: PoseTrajectory, seq: ImuSequence, thr: QualityThresholds) -> GateResult:
    if traj.point_count is None:
        raise MissingDiagnosticsError("no SfM diagnostics")
    var = imu_variance(seq, thr.variance_mode)
    reasons = []
    if traj.point_count < thr.min_points:
        reasons.append("points")
    if var > thr.max_variance:
        reasons.append("variance")
    return GateResult(not reasons, tuple(reasons), var)
