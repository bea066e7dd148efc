"""Hydrogen TDSE solver for intense high-frequency pulses, with dipole,
first-order beyond-dipole, envelope-approximation and propagation-gauge
interaction Hamiltonians."""

__version__ = "0.1.0"

from .angular import ChannelBasis, Symmetry, build_channels, coupling_tables, wigner3j
from .config import ConfigError, RunConfig, parse_config
from .constants import C_AU, field_strength_from_intensity
from .hamiltonian import (AssembledHamiltonian, InteractionModel,
                          WavefunctionState, assemble, gauge_boundary_check)
from .observables import (angular_distribution, energy_spectrum,
                          ionization_probability, make_energy_grid,
                          m_population, project)
from .propagator import (MaskConfig, PropagatorConfig, apply_mask, propagate,
                         step)
from .pulse import (EnvelopeShape, Pulse, coupling_scalars, envelope,
                    envelope_deriv, vector_potential)
from .radial import (KnotLaw, RadialBasis, assemble_operators, build_basis,
                     build_workspace, radial_matrix_elements, solve_channel)
