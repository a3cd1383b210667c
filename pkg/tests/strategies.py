"""Hypothesis strategies shared by the test modules."""
import numpy as np
from hypothesis import strategies as st

from egokin.core_types import Pose

finite = st.floats(-10.0, 10.0, allow_nan=False, allow_infinity=False)
vec3 = st.tuples(finite, finite, finite).map(np.array)


@st.composite
def unit_quats(draw):
    q = np.array(draw(st.tuples(*[st.floats(-1, 1, allow_nan=False)] * 4)))
    if np.linalg.norm(q) < 1e-3:
        q = np.array([1.0, 0.0, 0.0, 0.0])
    return q / np.linalg.norm(q)


@st.composite
def poses(draw):
    return Pose(draw(unit_quats()), draw(vec3))
