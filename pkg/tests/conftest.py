import os
import sys

import numpy as np
import pytest

sys.path.insert(0, os.path.dirname(__file__))

from nondipole_tdse.angular import Symmetry, build_channels
from nondipole_tdse.hamiltonian import InteractionModel, assemble
from nondipole_tdse.pulse import EnvelopeShape, Pulse
from nondipole_tdse.radial import (KnotLaw, assemble_operators, build_basis,
                                   build_workspace)


@pytest.fixture(scope="session")
def small_basis():
    """Coarse box for algebra tests (not converged physics)."""
    return build_basis(30.0, order=5, n_breakpoints=16)


@pytest.fixture(scope="session")
def small_ops(small_basis):
    return assemble_operators(small_basis)


@pytest.fixture(scope="session")
def small_workspace(small_basis, small_ops):
    return build_workspace(small_basis, small_ops, l_max=2, Z=1.0, e_cut=1e9)


@pytest.fixture(scope="session")
def medium_basis():
    """Box adequate for weak-field physics at omega ~ 1."""
    return build_basis(120.0, order=7, n_breakpoints=240,
                       knot_law=KnotLaw.SQRT_RAMP)


@pytest.fixture(scope="session")
def medium_ops(medium_basis):
    return assemble_operators(medium_basis)


@pytest.fixture(scope="session")
def medium_workspace(medium_basis, medium_ops):
    return build_workspace(medium_basis, medium_ops, l_max=3, Z=1.0, e_cut=12.0)


@pytest.fixture(scope="session")
def tiny_nondipole_hamiltonian(small_workspace):
    pulse = Pulse(shape=EnvelopeShape.SIN_SQUARED, e0=3.0, omega=2.0,
                  n_cycles=2, cep=0.3)
    channels = build_channels(2, 2, Symmetry.FULL)
    return assemble(InteractionModel.FIRST_ORDER, pulse, channels,
                    small_workspace)


def rng(seed=0):
    return np.random.default_rng(seed)
