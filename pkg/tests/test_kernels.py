import os
import subprocess
import sys

import numpy as np
import pytest

from egokin import _kernels, _kernels_py

try:
    from egokin import _ckernels
except ImportError:  # extension not built: only the fallback can be checked
    _ckernels = None

needs_ext = pytest.mark.skipif(_ckernels is None, reason="compiled extension not built")


def random_case(rng):
    q = rng.standard_normal(4)
    x = np.r_[rng.standard_normal(3), q / np.linalg.norm(q), rng.standard_normal(3)]
    A = rng.standard_normal((10, 10))
    return x, A @ A.T, rng.normal(0, 3, 3), rng.normal(0, 1, 3), rng.uniform(1e-3, 0.05)


def test_backend_reported():
    assert _kernels.BACKEND in ("cython", "python")


@needs_ext
def test_dead_reckon_backends_agree(rng):
    t = np.cumsum(rng.uniform(1e-3, 1e-2, 500))
    a = rng.standard_normal((500, 3))
    v0 = rng.standard_normal(3)
    pc, vc = _ckernels.dead_reckon(t, a, v0)
    pp, vp = _kernels_py.dead_reckon(t, a, v0)
    assert np.allclose(pc, pp, rtol=1e-12, atol=1e-12)
    assert np.allclose(vc, vp, rtol=1e-12, atol=1e-12)


@needs_ext
def test_ekf_kernels_backends_agree(rng):
    for _ in range(50):
        x, P, acc, gyr, dt = random_case(rng)
        assert np.allclose(_ckernels.ekf_transition(x, acc, gyr, dt), _kernels_py.ekf_transition(x, acc, gyr, dt),
                           atol=1e-14)
        assert np.allclose(_ckernels.transition_jacobian(x, acc, gyr, dt),
                           _kernels_py.transition_jacobian(x, acc, gyr, dt), atol=1e-8)
        xc, Pc = _ckernels.ekf_predict_step(x, P, acc, gyr, dt, 0.01 * np.eye(10))
        xp, Pp = _kernels_py.ekf_predict_step(x, P, acc, gyr, dt, 0.01 * np.eye(10))
        assert np.allclose(xc, xp, atol=1e-14)
        assert np.allclose(Pc, Pp, rtol=1e-8, atol=1e-8)
        assert np.array_equal(Pc, Pc.T)


def test_small_rotation_branch(rng):
    x, _, acc, _, dt = random_case(rng)
    a = _kernels_py.ekf_transition(x, acc, np.zeros(3), dt)
    b = _kernels_py.ekf_transition(x, acc, np.full(3, 1e-15), dt)
    assert np.allclose(a, b, atol=1e-14)


def test_pure_python_switch():
    code = "from egokin import _kernels; print(_kernels.BACKEND)"
    env = dict(os.environ, EGOKIN_PURE_PYTHON="1")
    out = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True, check=True)
    assert out.stdout.strip() == "python"
