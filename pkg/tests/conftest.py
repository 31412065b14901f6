from __future__ import annotations

import numpy as np
import pytest

from qdesign.models import ProblemInstance


@pytest.fixture
def symmetric() -> ProblemInstance:
    """a₁ = e₁, a₂ = e₂, c = (1, 1), λ = 1: the uniform design is optimal."""
    return ProblemInstance(np.eye(2), np.array([1.0, 1.0]), 1.0)


@pytest.fixture
def orthonormal() -> ProblemInstance:
    return ProblemInstance(np.eye(3), np.array([3.0, -1.0, 2.0]), 0.5)


@pytest.fixture
def single() -> ProblemInstance:
    return ProblemInstance(np.array([[1.0], [2.0], [-0.5]]), np.array([0.3, 1.2, 0.4]), 0.7)


@pytest.fixture
def pathological() -> ProblemInstance:
    return ProblemInstance(np.array([[1.0, 2.0, -1.0], [0.0, 0.0, 0.0]]), np.array([0.0, 1.0]), 1.0)
