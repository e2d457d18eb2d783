import numpy as np
import pytest
import torch

from nmqd.bath import BathSpec, SpectralDensity, pade_decompose
from nmqd.grids import TimeGrid

torch.set_num_threads(1)


@pytest.fixture(scope="session")
def drude_bath():
    return BathSpec(SpectralDensity("drude", 0.1, 1.0), 1.0)


@pytest.fixture(scope="session")
def drude_modes(drude_bath):
    """Four-mode decomposition; small enough for fast hierarchies."""
    return pade_decompose(drude_bath, 3)


@pytest.fixture(scope="session")
def drude_modes_psd(drude_bath):
    """Six-mode decomposition whose covariance is positive semidefinite on
    the standard dt = 0.01 grids; used wherever noise is sampled."""
    return pade_decompose(drude_bath, 5)


@pytest.fixture(scope="session")
def short_grid():
    return TimeGrid(0.01, 100)


@pytest.fixture
def rng():
    return np.random.default_rng(7)
