import numpy as np
import pytest

from sinrgraph.pointproc import ModelParams, NoiseSpec, PointPattern, Window


@pytest.fixture
def torus20():
    return Window(20.0, 20.0, "torus")


@pytest.fixture
def base_params(torus20):
    return ModelParams(noise=NoiseSpec("constant", 0.1), window=torus20)


def pattern_of(points, window=None, origins=None):
    window = window or Window(20.0, 20.0, "plane")
    points = np.asarray(points, dtype=float)
    origins = origins or ["poisson"] * len(points)
    return PointPattern(points, origins, window)
