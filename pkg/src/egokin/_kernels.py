"""Backend selection for the hot loops.

The compiled extension is used when it imports; set ``EGOKIN_PURE_PYTHON=1`` to
force the numpy fallback.
"""
from __future__ import annotations

import os

from . import _kernels_py

if os.environ.get("EGOKIN_PURE_PYTHON"):
    _impl = _kernels_py
    BACKEND = "python"
else:
    try:
        from . import _ckernels as _impl  # type: ignore[attr-defined]

        BACKEND = "cython"
    except ImportError:
        _impl = _kernels_py
        BACKEND = "python"

dead_reckon = _impl.dead_reckon
ekf_transition = _impl.ekf_transition
transition_jacobian = _impl.transition_jacobian
ekf_predict_step = _impl.ekf_predict_step

__all__ = ["BACKEND", "dead_reckon", "ekf_transition", "transition_jacobian", "ekf_predict_step"]
