import math

import numpy as np
import pytest

from nondipole_tdse.angular import Symmetry, build_channels
from nondipole_tdse.hamiltonian import (InteractionModel, WavefunctionState,
                                        assemble, gauge_boundary_check,
                                        make_layout)
from nondipole_tdse.observables import ionization_probability, project
from nondipole_tdse.propagator import PropagatorConfig, propagate
from nondipole_tdse.pulse import EnvelopeShape, Pulse, envelope
from nondipole_tdse.radial import build_basis, assemble_operators, build_workspace
from oracles import dense_hamiltonian


@pytest.fixture(scope="module")
def pulse():
    return Pulse(shape=EnvelopeShape.SIN_SQUARED, e0=3.0, omega=2.0,
                 n_cycles=2, cep=0.3)


@pytest.fixture(scope="module")
def tiny_workspace():
    # 12 retained radial splines: n_breakpoints + order - 4 = 12
    basis = build_basis(25.0, order=5, n_breakpoints=11)
    ops = assemble_operators(basis)
    return build_workspace(basis, ops, l_max=2, Z=1.0, e_cut=1e9)


class TestAssemble:
    def test_dipole_single_coupling_block(self, pulse, tiny_workspace):
        h = assemble(InteractionModel.DIPOLE, pulse,
                     build_channels(1, 0), tiny_workspace)
        mixes = h._mixes[0]
        assert mixes[0].pz is not None and mixes[0].pz.shape == (1, 1)
        assert mixes[0].x is None and mixes[0].px is None

    def test_envelope_vg_equals_dipole_at_envelope_peak(self, pulse,
                                                        tiny_workspace):
        ch = build_channels(2, 2)
        h_env = assemble(InteractionModel.ENVELOPE_VG, pulse, ch, tiny_workspace)
        h_dip = assemble(InteractionModel.DIPOLE, pulse, ch, tiny_workspace)
        t_peak = pulse.duration / 2.0       # f'(T/2) = 0
        gen = np.random.default_rng(0)
        v = gen.standard_normal(h_env.layout.size) \
            + 1j * gen.standard_normal(h_env.layout.size)
        out1 = np.empty_like(v)
        out2 = np.empty_like(v)
        h_env.apply_into(v, t_peak, out1)
        h_dip.apply_into(v, t_peak, out2)
        assert np.max(np.abs(out1 - out2)) < 1e-14 * np.max(np.abs(out1))

    def test_pg_full_minus_envelope_is_carrier_term(self, pulse,
                                                    tiny_workspace):
        from nondipole_tdse.constants import C_AU
        from nondipole_tdse.pulse import coupling_scalars
        ch = build_channels(2, 2)
        h_full = assemble(InteractionModel.PG_FULL, pulse, ch, tiny_workspace)
        h_env = assemble(InteractionModel.PG_ENVELOPE, pulse, ch, tiny_workspace)
        t = pulse.duration / 2.0
        gen = np.random.default_rng(1)
        v = gen.standard_normal(h_full.layout.size) \
            + 1j * gen.standard_normal(h_full.layout.size)
        out_full, out_env = np.empty_like(v), np.empty_like(v)
        h_full.apply_into(v, t, out_full)
        h_env.apply_into(v, t, out_env)
        cs = coupling_scalars(pulse, t)
        assert abs(cs.f2_cos2) > 1e-3      # carrier term present at this t
        # difference must equal -(1/4c)(E0/w)^2 f2_cos2 * (p_x v)
        s = -0.25 * (pulse.e0 / pulse.omega) ** 2 * cs.f2_cos2 / C_AU
        h_probe = assemble(InteractionModel.PG_ENVELOPE, pulse, ch,
                           tiny_workspace)
        # p_x v extracted from the envelope model at a reference time where
        # its scalar is known
        s_px_ref = h_probe.interaction_scalars(t)[2]
        out_h0 = np.empty_like(v)
        h0 = assemble(InteractionModel.DIPOLE, pulse, ch, tiny_workspace)
        h0.apply_into(v, t, out_h0)
        px_v = (out_env - out_h0) / s_px_ref
        assert np.allclose(out_full - out_env, s * px_v, rtol=1e-10, atol=1e-12)

    def test_nondipole_requires_m(self, pulse, tiny_workspace):
        with pytest.raises(ValueError):
            assemble(InteractionModel.FIRST_ORDER, pulse,
                     build_channels(2, 0), tiny_workspace)

    def test_workspace_channel_mismatch_rejected(self, pulse, tiny_workspace):
        with pytest.raises(ValueError):
            assemble(InteractionModel.DIPOLE, pulse,
                     build_channels(5, 0), tiny_workspace)


class TestApply:
    def test_field_free_ground_state(self, tiny_workspace):
        quiet = Pulse(shape=EnvelopeShape.SIN_SQUARED, e0=0.0, omega=2.0,
                      n_cycles=2)
        h = assemble(InteractionModel.DIPOLE, quiet,
                     build_channels(2, 0), tiny_workspace)
        psi = h.ground_state()
        out = h.apply(psi, t=1.0)
        e0 = h.ground_energy()
        assert np.allclose(out, e0 * psi.flat, atol=1e-13)
        # deliberately tiny basis; converged-eigenvalue accuracy is covered in
        # test_radial and in the acceptance suite
        assert abs(e0 + 0.5) < 5e-3

    def test_hermiticity_random_pairs(self, pulse, tiny_workspace):
        ch = build_channels(2, 2)
        gen = np.random.default_rng(42)
        for model in InteractionModel:
            h = assemble(model, pulse, ch, tiny_workspace)
            n = h.layout.size
            ts = gen.uniform(0.0, pulse.duration, 10)
            for t in ts:
                for _ in range(10):
                    phi = gen.standard_normal(n) + 1j * gen.standard_normal(n)
                    psi = gen.standard_normal(n) + 1j * gen.standard_normal(n)
                    hpsi, hphi = np.empty_like(psi), np.empty_like(phi)
                    h.apply_into(psi, t, hpsi)
                    h.apply_into(phi, t, hphi)
                    lhs = np.vdot(phi, hpsi)
                    rhs = np.conj(np.vdot(psi, hphi))
                    assert abs(lhs - rhs) < 1e-12 * max(1.0, abs(lhs))

    @pytest.mark.parametrize("model", list(InteractionModel))
    @pytest.mark.parametrize("symmetry", [Symmetry.FULL,
                                          Symmetry.REFLECTION_EVEN])
    def test_matvec_against_dense_oracle(self, pulse, tiny_workspace, model,
                                         symmetry):
        ch = build_channels(2, 2, symmetry)
        h = assemble(model, pulse, ch, tiny_workspace)
        H, offsets = dense_hamiltonian(h, t=1.7)
        assert np.max(np.abs(H - H.conj().T)) < 1e-12
        gen = np.random.default_rng(3)
        lay = h.layout
        n = sum(tiny_workspace.n_kept(l) for (l, m) in ch.channels)
        for _ in range(4):
            v = gen.standard_normal(n) + 1j * gen.standard_normal(n)
            flat = lay.from_channel_major(v)
            out = np.empty_like(flat)
            h.apply_into(flat, 1.7, out)
            got = lay.to_channel_major(out)
            assert np.max(np.abs(got - H @ v)) < 1e-13 * max(1.0, np.max(np.abs(H @ v)))

    def test_norm_continuous_in_time(self, pulse, tiny_workspace):
        ch = build_channels(2, 2)
        h = assemble(InteractionModel.FIRST_ORDER, pulse, ch, tiny_workspace)
        gen = np.random.default_rng(9)
        v = gen.standard_normal(h.layout.size) \
            + 1j * gen.standard_normal(h.layout.size)
        v /= np.linalg.norm(v)
        ts = np.linspace(0.0, pulse.duration, 400)
        out = np.empty_like(v)
        norms = []
        for t in ts:
            h.apply_into(v, t, out)
            norms.append(np.linalg.norm(out))
        norms = np.asarray(norms)
        assert np.all(np.isfinite(norms))
        jumps = np.abs(np.diff(norms)) / (np.max(norms) + 1e-30)
        assert np.max(jumps) < 0.05         # C^1 envelope: no discontinuities


class TestStateAndLayout:
    def test_ground_state_normalized(self, pulse, tiny_workspace):
        h = assemble(InteractionModel.DIPOLE, pulse, build_channels(2, 0),
                     tiny_workspace)
        psi = h.ground_state()
        assert abs(psi.norm_sq() - 1.0) < 1e-12

    def test_channel_major_round_trip(self, pulse, tiny_workspace):
        ch = build_channels(2, 2, Symmetry.REFLECTION_EVEN)
        lay = make_layout(ch, tiny_workspace)
        gen = np.random.default_rng(4)
        flat = gen.standard_normal(lay.size) + 1j * gen.standard_normal(lay.size)
        vec = lay.to_channel_major(flat)
        back = lay.from_channel_major(vec)
        assert np.array_equal(flat, back)

    def test_full_vs_reflection_even_dynamics(self, tiny_workspace):
        # both symmetries must produce identical observables from the ground state
        pulse = Pulse(shape=EnvelopeShape.SIN_SQUARED, e0=2.0, omega=1.5,
                      n_cycles=2)
        results = {}
        for sym in (Symmetry.FULL, Symmetry.REFLECTION_EVEN):
            ch = build_channels(2, 2, sym)
            h = assemble(InteractionModel.FIRST_ORDER, pulse, ch,
                         tiny_workspace)
            tr = propagate(h, h.ground_state(),
                           PropagatorConfig(steps_per_cycle=150))
            proj = project(tr.final_state, h)
            results[sym] = (ionization_probability(proj),
                            proj.m_nonzero_population())
        p_full, m_full = results[Symmetry.FULL]
        p_even, m_even = results[Symmetry.REFLECTION_EVEN]
        assert p_even == pytest.approx(p_full, rel=1e-9, abs=1e-12)
        assert m_even == pytest.approx(m_full, rel=1e-9, abs=1e-12)


class TestGaugeBoundary:
    def test_sin2_identity(self):
        p = Pulse(shape=EnvelopeShape.SIN_SQUARED, e0=5.0, omega=3.5,
                  n_cycles=15)
        rep = gauge_boundary_check(p)
        assert rep.a_end == 0.0
        assert rep.f_end < 1e-30
        assert rep.u_is_identity

    def test_truncated_gaussian_identity_within_tolerance(self):
        p = Pulse(shape=EnvelopeShape.GAUSSIAN, e0=1.0, omega=3.5, duration=8.0)
        rep = gauge_boundary_check(p)
        assert rep.f_end == pytest.approx(2.0 ** -36, rel=1e-9)
        assert rep.u_is_identity

    def test_fermi_dirac_reports_residual(self):
        p = Pulse(shape=EnvelopeShape.FERMI_DIRAC, e0=1.0, omega=3.5,
                  n_cycles=7.5, sigma=0.4)
        rep = gauge_boundary_check(p)
        assert rep.f_end == pytest.approx(envelope(p, p.t_end), rel=1e-12)
        assert rep.f_end > rep.tolerance       # flagged as not identity
        assert not rep.u_is_identity
