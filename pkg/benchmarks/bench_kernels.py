"""Time the compiled kernels against the numpy fallback.

    python benchmarks/bench_kernels.py [--repeat 5]

Both backends get identical inputs; the script also reports the largest
relative difference between their outputs.
"""
import argparse
import timeit

import numpy as np

from egokin import _kernels_py

try:
    from egokin import _ckernels
except ImportError:
    _ckernels = None


def _inputs(n_imu=20_000, seed=0):
    rng = np.random.default_rng(seed)
    t = np.cumsum(rng.uniform(0.004, 0.006, n_imu))
    accel = rng.normal(0.0, 3.0, (n_imu, 3))
    gyro = rng.normal(0.0, 0.5, (n_imu, 3))
    x = np.concatenate([rng.normal(size=3), [1.0, 0.0, 0.0, 0.0], rng.normal(size=3)])
    return t, accel, gyro, x


def _predict_loop(mod, x, P, accel, gyro, Q, steps):
    for k in range(steps):
        x, P = mod.ekf_predict_step(x, P, accel[k], gyro[k], 0.005, Q)
    return x, P


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--samples", type=int, default=20_000)
    ap.add_argument("--steps", type=int, default=2_000)
    args = ap.parse_args()
    if _ckernels is None:
        raise SystemExit("compiled extension not built; run `pip install -e . --no-build-isolation` first")

    t, accel, gyro, x = _inputs(args.samples)
    v0 = np.array([0.1, -0.2, 0.3])
    P, Q = 0.1 * np.eye(10), 0.01 * np.eye(10)

    cases = {
        f"dead_reckon ({args.samples} samples)": lambda m: m.dead_reckon(t, accel, v0),
        f"ekf_predict_step x{args.steps}": lambda m: _predict_loop(m, x, P, accel, gyro, Q, args.steps),
    }
    print(f"{'kernel':<34}{'python':>11}{'cython':>11}{'speedup':>9}{'rel diff':>11}")
    for name, fn in cases.items():
        times = {}
        for label, mod in (("python", _kernels_py), ("cython", _ckernels)):
            times[label] = min(timeit.repeat(lambda: fn(mod), number=1, repeat=args.repeat))
        diff = max(np.abs(a - b).max() / np.abs(a).max() for a, b in zip(fn(_kernels_py), fn(_ckernels)))
        print(f"{name:<34}{times['python'] * 1e3:>9.2f}ms{times['cython'] * 1e3:>9.2f}ms"
              f"{times['python'] / times['cython']:>8.1f}x{diff:>11.1e}")


if __name__ == "__main__":
    main()
