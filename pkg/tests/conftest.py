from __future__ import annotations

import numpy as np
import pytest

from discrete_riemann.green import GreenEvaluator
from discrete_riemann.surface import annulus, flat_torus


@pytest.fixture(scope="session")
def torus16():
    return flat_torus(16)


@pytest.fixture(scope="session")
def torus32():
    return flat_torus(32)


@pytest.fixture(scope="session")
def ev32(torus32):
    return GreenEvaluator(torus32)


@pytest.fixture(scope="session")
def ring():
    """Annulus 0.5 <= |z| <= 1 at moderate resolution."""
    return annulus(0.5, 12, 64)


@pytest.fixture(scope="session")
def wide_ring():
    """Annulus 0.5 <= |z| <= 2."""
    return annulus(0.25, 16, 64, outer=2.0)


def vertex_at(s, p: complex) -> int:
    return int(np.argmin(np.abs(s.planar_coords - p)))
