import math

import numpy as np
import pytest

from nondipole_tdse.angular import Symmetry, build_channels
from nondipole_tdse.hamiltonian import InteractionModel, WavefunctionState, assemble
from nondipole_tdse.observables import (EnergyGrid, angular_distribution,
                                        band_power, coulomb_phase,
                                        energy_spectrum, ionization_probability,
                                        m_population, make_energy_grid, project)
from nondipole_tdse.propagator import PropagatorConfig, propagate
from nondipole_tdse.pulse import EnvelopeShape, Pulse
from oracles import perturbation_ionization


@pytest.fixture(scope="module")
def weak_run(medium_workspace):
    """One-photon ionization at omega = 1, weak field."""
    pulse = Pulse(shape=EnvelopeShape.SIN_SQUARED, e0=0.02, omega=1.0,
                  n_cycles=20)
    h = assemble(InteractionModel.DIPOLE, pulse, build_channels(3, 0),
                 medium_workspace)
    trace = propagate(h, h.ground_state(), PropagatorConfig(steps_per_cycle=150))
    return h, trace


@pytest.fixture(scope="module")
def nondipole_run(medium_workspace):
    pulse = Pulse(shape=EnvelopeShape.SIN_SQUARED, e0=0.5, omega=1.0,
                  n_cycles=6)
    h = assemble(InteractionModel.FIRST_ORDER, pulse,
                 build_channels(3, 3, Symmetry.REFLECTION_EVEN),
                 medium_workspace)
    trace = propagate(h, h.ground_state(), PropagatorConfig(steps_per_cycle=150))
    return h, trace


class TestProjection:
    def test_ground_state_reads_off(self, weak_run):
        h, _ = weak_run
        proj = project(h.ground_state(), h)
        assert proj.amplitudes[(0, 0)][0] == pytest.approx(1.0, abs=1e-12)
        total_other = proj.norm_sq() - abs(proj.amplitudes[(0, 0)][0]) ** 2
        assert total_other < 1e-24

    def test_two_state_superposition(self, weak_run):
        h, _ = weak_run
        lay = h.layout
        flat = np.zeros(lay.size, dtype=complex)
        lay.column(flat, 0, 0)[0] = 0.6
        lay.column(flat, 0, 0)[1] = 0.8
        psi = WavefunctionState(flat=flat, t=0.0, layout=lay)
        proj = project(psi, h)
        probs = np.abs(proj.amplitudes[(0, 0)][:2]) ** 2
        assert probs[0] == pytest.approx(0.36, abs=1e-14)
        assert probs[1] == pytest.approx(0.64, abs=1e-14)

    def test_parseval_random_state(self, weak_run):
        h, _ = weak_run
        gen = np.random.default_rng(12)
        flat = gen.standard_normal(h.layout.size) \
            + 1j * gen.standard_normal(h.layout.size)
        flat /= np.linalg.norm(flat)
        psi = WavefunctionState(flat=flat, t=0.0, layout=h.layout)
        proj = project(psi, h)
        assert abs(proj.norm_sq() - psi.norm_sq()) < 1e-10

    def test_parseval_reflection_even(self, nondipole_run):
        h, trace = nondipole_run
        proj = project(trace.final_state, h)
        assert abs(proj.norm_sq() - trace.final_state.norm_sq()) < 1e-10


class TestIonization:
    def test_no_pulse_zero(self, weak_run):
        h, _ = weak_run
        proj = project(h.ground_state(), h)
        assert abs(ionization_probability(proj)) < 1e-12

    def test_matches_perturbation_theory(self, weak_run, medium_ops):
        h, trace = weak_run
        proj = project(trace.final_state, h)
        p_tdse = ionization_probability(proj)
        p_pt = perturbation_ionization(h.pulse, h.workspace, medium_ops)
        assert abs(p_tdse - p_pt) / p_pt < 0.05


class TestEnergySpectrum:
    def test_grid_invariants(self, weak_run):
        h, _ = weak_run
        grid = make_energy_grid(h.energies, n_points=400)
        assert np.all(np.diff(grid.nodes) > 0)
        for w in grid.channel_weights:
            assert np.all(w > 0)
        with pytest.raises(ValueError):
            EnergyGrid(nodes=np.array([1.0, 1.0]), channel_energies=(),
                       channel_weights=())

    def test_integral_reproduces_ionization(self, weak_run):
        h, trace = weak_run
        proj = project(trace.final_state, h)
        grid = make_energy_grid(h.energies, n_points=3000)
        spec = energy_spectrum(proj, grid)
        p = ionization_probability(proj)
        assert spec.integral() == pytest.approx(p, rel=1e-3)

    def test_nonnegative(self, weak_run):
        h, trace = weak_run
        spec = energy_spectrum(project(trace.final_state, h),
                               make_energy_grid(h.energies, n_points=500))
        assert np.all(spec.total >= 0.0)
        assert np.all(spec.per_l >= 0.0)

    def test_one_photon_peak_position(self, weak_run):
        h, trace = weak_run
        proj = project(trace.final_state, h)
        grid = make_energy_grid(h.energies, e_max=2.0, n_points=1000)
        spec = energy_spectrum(proj, grid)
        peak = spec.energies[np.argmax(spec.total)]
        spacing = np.max(np.diff(grid.channel_energies[1]))
        assert abs(peak - 0.5) <= spacing


class TestAngularDistribution:
    def test_single_p_wave_cos_squared(self, weak_run):
        h, _ = weak_run
        energies = h.energies
        amps = {(l, m): np.zeros(len(energies[l]), dtype=complex)
                for l in range(2) for m in [0]}
        cont = energies[1] > 0
        idx = np.argmax(cont) + 3
        from nondipole_tdse.observables import SpectralProjection
        amps[(1, 0)][idx] = 1.0
        proj = SpectralProjection(amplitudes=amps, energies=tuple(energies),
                                  Z=1.0)
        grid = make_energy_grid(energies, n_points=600)
        dist = angular_distribution(proj, grid, n_theta=24, n_phi=32)
        want = np.cos(dist.theta) ** 2
        got = dist.values[:, 0] / dist.values.max()
        assert dist.values.max() > 0
        # |Y_10|^2 = 3/(4 pi) cos^2(theta)
        assert np.allclose(dist.values[:, 0],
                           dist.integral() * 3 / (4 * np.pi) * want,
                           rtol=1e-6, atol=1e-12 * dist.values.max())
        # no phi dependence for m = 0
        assert np.max(np.std(dist.values, axis=1)) < 1e-12 * dist.values.max()

    def test_integral_reproduces_continuum_probability(self, nondipole_run):
        h, trace = nondipole_run
        proj = project(trace.final_state, h)
        grid = make_energy_grid(h.energies, n_points=2500)
        dist = angular_distribution(proj, grid)
        assert dist.integral() == pytest.approx(proj.continuum_probability(),
                                                rel=1e-3)

    def test_nonnegative(self, nondipole_run):
        h, trace = nondipole_run
        proj = project(trace.final_state, h)
        dist = angular_distribution(proj,
                                    make_energy_grid(h.energies, n_points=800))
        assert np.all(dist.values >= 0.0)

    def test_dipole_forward_backward_symmetric(self, weak_run):
        h, trace = weak_run
        proj = project(trace.final_state, h)
        grid = make_energy_grid(h.energies, n_points=800)
        dist = angular_distribution(proj, grid, n_theta=20, n_phi=40)
        fwd = dist.hemisphere_probability(backward=False)
        bwd = dist.hemisphere_probability(backward=True)
        assert bwd == pytest.approx(fwd, rel=1e-10)

    def test_coulomb_phase_values(self):
        from scipy.special import loggamma
        k = math.sqrt(2.0 * 1.7)
        want = float(np.imag(loggamma(2 + 1j * 0)))  # l=1, Z=0 -> 0
        assert coulomb_phase(1, 1.7, 0.0) == pytest.approx(0.0, abs=1e-14)
        got = coulomb_phase(2, 1.7, 1.0)
        want = float(np.imag(loggamma(3 - 1j / k)))
        assert got == pytest.approx(want, rel=1e-12)


class TestMPopulation:
    def test_dipole_zero(self, weak_run):
        h, trace = weak_run
        proj = project(trace.final_state, h)
        assert m_population(proj) == 0.0

    def test_nondipole_positive_and_matches_probe(self, medium_workspace):
        pulse = Pulse(shape=EnvelopeShape.SIN_SQUARED, e0=0.5, omega=1.0,
                      n_cycles=2)
        h = assemble(InteractionModel.FIRST_ORDER, pulse,
                     build_channels(3, 3), medium_workspace)
        trace = propagate(h, h.ground_state(),
                          PropagatorConfig(steps_per_cycle=100),
                          probes=("m_nonzero",), probe_stride=1000000)
        proj = project(trace.final_state, h)
        assert m_population(proj) > 0.0
        assert m_population(proj) == pytest.approx(
            trace.probes["m_nonzero"][-1], rel=1e-10)


class TestBandPower:
    def test_detects_oscillation_in_band(self):
        t = np.linspace(0.0, 50.0, 4001)
        w0 = 7.0
        smooth = np.sin(0.2 * t) ** 2
        wiggly = smooth + 0.3 * smooth * np.cos(w0 * t)
        p_smooth = band_power(t, smooth, 0.75 * w0, 1.25 * w0)
        p_wiggly = band_power(t, wiggly, 0.75 * w0, 1.25 * w0)
        assert p_wiggly > 20 * p_smooth

    def test_requires_uniform_grid(self):
        t = np.array([0.0, 1.0, 2.0, 3.5, 4.0, 5.0, 6.0, 7.0, 8.0, 9.0])
        with pytest.raises(ValueError):
            band_power(t, np.sin(t), 1.0, 2.0)
