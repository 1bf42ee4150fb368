import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))


def random_homography(rng, perspective=1e-3, center=(160.0, 120.0)):
    """Well-conditioned random projective matrix: rotation, scale, shear, shift, tilt."""
    theta = rng.uniform(-np.pi, np.pi)
    s = rng.uniform(0.7, 1.4)
    shear = rng.uniform(-0.2, 0.2)
    a = np.array([[np.cos(theta), -np.sin(theta)], [np.sin(theta), np.cos(theta)]]) @ np.array([[s, shear], [0, s]])
    m = np.eye(3)
    m[:2, :2] = a
    m[:2, 2] = rng.uniform(-40, 40, size=2)
    m[2, :2] = rng.uniform(-perspective, perspective, size=2)
    cx, cy = center
    to_c = np.array([[1, 0, -cx], [0, 1, -cy], [0, 0, 1.0]])
    back = np.array([[1, 0, cx], [0, 1, cy], [0, 0, 1.0]])
    m = back @ m @ to_c
    return m / m[2, 2]


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
