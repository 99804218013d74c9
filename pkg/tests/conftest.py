import numpy as np
import pytest
from hypothesis import HealthCheck, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

settings.register_profile("default", deadline=None, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")

finite = st.floats(-1.0, 1.0, allow_nan=False, allow_infinity=False)


@st.composite
def unit_quats(draw):
    q = draw(arrays(np.float64, 4, elements=finite).filter(lambda v: np.linalg.norm(v) > 0.1))
    return q / np.linalg.norm(q)


@st.composite
def rotvecs(draw, max_angle=3.0):
    v = draw(arrays(np.float64, 3, elements=finite).filter(lambda v: np.linalg.norm(v) > 1e-3))
    angle = draw(st.floats(0.0, max_angle))
    return v / np.linalg.norm(v) * angle


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def random_walk_trajectory(rng, n=50, step=0.1, frames=None):
    """Trajectory with random-walk rotations and translations (non-constant motion)."""
    from hocue.geometry import quat_from_matrix, rotation_exp
    from hocue.trajectory import Trajectory

    Rs = [np.eye(3)]
    for _ in range(n - 1):
        Rs.append(rotation_exp(rng.normal(scale=step, size=3)) @ Rs[-1])
    ts = np.cumsum(rng.normal(scale=step, size=(n, 3)), axis=0)
    frames = np.arange(n) if frames is None else frames
    return Trajectory(frames, np.array([quat_from_matrix(R) for R in Rs]), ts)
