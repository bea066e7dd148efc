import math
import os

import numpy as np
import pytest

from nondipole_tdse.radial import (BasisError, BandedMatrix, KnotLaw,
                                   _spline_values, assemble_operators,
                                   assemble_weighted_overlap, build_basis,
                                   load_spectrum, radial_matrix_elements,
                                   save_spectrum, solve_channel,
                                   solve_channel_cached, spectrum_cache_path)
from oracles import adaptive_radial_entry


@pytest.fixture(scope="module")
def hydrogen_basis():
    return build_basis(200.0, order=7, n_breakpoints=300,
                       knot_law=KnotLaw.SQRT_RAMP)


@pytest.fixture(scope="module")
def hydrogen_ops(hydrogen_basis):
    return assemble_operators(hydrogen_basis)


@pytest.fixture(scope="module")
def spectra(hydrogen_basis, hydrogen_ops):
    return {l: solve_channel(hydrogen_basis, hydrogen_ops, l, 1.0)
            for l in (0, 1, 2)}


class TestBuildBasis:
    def test_linear_knot_spacing(self):
        basis = build_basis(100.0, order=7, n_breakpoints=200)
        dr = np.diff(basis.breakpoints)
        assert np.allclose(dr, 100.0 / 199, rtol=1e-13)
        # endpoint multiplicity = order
        assert np.sum(basis.knots == 0.0) == 7
        assert np.sum(basis.knots == 100.0) == 7
        assert basis.n_splines == 200 + 7 - 4

    def test_too_low_order_rejected(self):
        with pytest.raises(BasisError):
            build_basis(10.0, order=3, n_breakpoints=4)

    def test_too_few_breakpoints_rejected(self):
        with pytest.raises(BasisError):
            build_basis(10.0, order=7, n_breakpoints=8)

    def test_bad_match_radius_rejected(self):
        with pytest.raises(BasisError):
            build_basis(10.0, order=5, n_breakpoints=20,
                        knot_law=KnotLaw.SQRT_RAMP, match_radius=50.0)

    def test_sqrt_ramp_monotone_and_dense_near_origin(self):
        basis = build_basis(200.0, order=7, n_breakpoints=300,
                            knot_law=KnotLaw.SQRT_RAMP)
        dr = np.diff(basis.breakpoints)
        assert np.all(dr > 0)
        assert dr[0] < dr[-1] / 10

    def test_sqrt_ramp_beats_linear_ground_state(self):
        # equal spline counts, r_max = 200: denser knots near the nucleus win
        err = {}
        for law in (KnotLaw.LINEAR, KnotLaw.SQRT_RAMP):
            basis = build_basis(200.0, order=6, n_breakpoints=60, knot_law=law)
            ops = assemble_operators(basis)
            spec = solve_channel(basis, ops, 0, 1.0)
            err[law] = abs(spec.energies[0] + 0.5)
        assert err[KnotLaw.SQRT_RAMP] < err[KnotLaw.LINEAR]


class TestOperators:
    def test_partition_of_unity_row_sums(self, hydrogen_basis, hydrogen_ops):
        # sum_j B_j(r) = 1, so full-set row sums of S equal int B_i dr
        pts, wts, V, _ = _spline_values(hydrogen_basis)
        assert np.max(np.abs(V.sum(axis=1) - 1.0)) < 1e-12
        s_full = (V * wts[:, None]).T @ V
        row_sums = s_full.sum(axis=1)
        int_bi = (V * wts[:, None]).sum(axis=0)
        assert np.max(np.abs(row_sums - int_bi)) < 1e-12

    def test_ddr_antisymmetric(self, hydrogen_ops):
        d = hydrogen_ops.Ddr.to_dense()
        assert np.max(np.abs(d + d.T)) < 1e-12

    def test_overlap_spd(self, hydrogen_ops):
        s = hydrogen_ops.S.to_dense()
        assert np.max(np.abs(s - s.T)) == 0.0
        assert np.linalg.eigvalsh(s).min() > 0

    def test_banded_round_trip(self, hydrogen_ops):
        m = hydrogen_ops.R.to_dense()
        again = BandedMatrix.from_dense(m, hydrogen_ops.R.bandwidth).to_dense()
        assert np.array_equal(m, again)

    def test_r_entries_against_adaptive_quadrature(self, hydrogen_basis,
                                                   hydrogen_ops):
        gen = np.random.default_rng(5)
        r_dense = hydrogen_ops.R.to_dense()
        n = hydrogen_basis.n_splines
        rows = gen.integers(0, n, 5)
        for i in rows:
            for j in range(i, min(i + 5, n)):
                want = adaptive_radial_entry(hydrogen_basis, int(i), int(j),
                                             lambda r: r)
                scale = max(1.0, abs(want))
                assert abs(r_dense[i, j] - want) < 1e-10 * scale

    @pytest.mark.parametrize("name,weight,deriv", [
        ("S", lambda r: 1.0, False),
        ("InvR", lambda r: 1.0 / r, False),
        ("InvR2", lambda r: 1.0 / r ** 2, False),
        ("Ddr", lambda r: 1.0, True),
    ])
    def test_all_matrices_against_adaptive_quadrature(self, hydrogen_basis,
                                                      hydrogen_ops, name,
                                                      weight, deriv):
        gen = np.random.default_rng(hash(name) % 2 ** 31)
        dense = getattr(hydrogen_ops, name).to_dense()
        n = hydrogen_basis.n_splines
        for _ in range(6):
            i = int(gen.integers(0, n))
            j = int(gen.integers(max(0, i - 6), min(n, i + 7)))
            want = adaptive_radial_entry(hydrogen_basis, i, j, weight,
                                         derivative_right=deriv)
            assert abs(dense[i, j] - want) < 1e-10 * max(1.0, abs(want))

    def test_weighted_overlap_identity_weight(self, hydrogen_basis,
                                              hydrogen_ops):
        s2 = assemble_weighted_overlap(hydrogen_basis, lambda r: np.ones_like(r))
        assert np.allclose(s2.to_dense(), hydrogen_ops.S.to_dense(),
                           rtol=0, atol=1e-15)


class TestSolveChannel:
    def test_ground_state_energy(self, spectra):
        assert abs(spectra[0].energies[0] + 0.5) < 1e-8

    def test_2p_energy(self, spectra):
        assert abs(spectra[1].energies[0] + 0.125) < 1e-8

    def test_rydberg_series(self, spectra):
        errs = [abs(spectra[0].energies[n - 1] + 0.5 / n ** 2)
                for n in range(1, 6)]
        assert max(errs) < 1e-7

    def test_convergence_with_knot_refinement(self):
        # discretization error must drop as n_splines doubles, for every
        # low-lying level, until eigensolver precision takes over
        floor = 1e-12
        errs = []
        for nb in (25, 50, 100):
            basis = build_basis(200.0, order=5, n_breakpoints=nb)
            spec = solve_channel(basis, assemble_operators(basis), 0, 1.0)
            errs.append([max(abs(spec.energies[n - 1] + 0.5 / n ** 2), floor)
                         for n in range(1, 6)])
        for coarse, fine in zip(errs[:-1], errs[1:]):
            for c, f in zip(coarse, fine):
                assert f <= c

    def test_s_orthonormality(self, hydrogen_ops, spectra):
        s = hydrogen_ops.S.to_dense()
        for spec in spectra.values():
            gram = spec.coeffs.T @ s @ spec.coeffs
            assert np.max(np.abs(gram - np.eye(spec.n_states))) < 1e-10

    def test_continuum_spacing_strictly_positive(self, spectra):
        for spec in spectra.values():
            cont = spec.energies[spec.energies > 0]
            assert np.all(np.diff(cont) > 0)

    def test_negative_l_rejected(self, hydrogen_basis, hydrogen_ops):
        with pytest.raises(ValueError):
            solve_channel(hydrogen_basis, hydrogen_ops, -1, 1.0)

    def test_operator_basis_mismatch_rejected(self, hydrogen_ops):
        other = build_basis(50.0, order=7, n_breakpoints=40)
        with pytest.raises(BasisError):
            solve_channel(other, hydrogen_ops, 0, 1.0)


class TestRadialMatrixElements:
    def test_1s_2p_dipole_length(self, hydrogen_ops, spectra):
        em = radial_matrix_elements(spectra[0], spectra[1], hydrogen_ops)
        radial = em.r[0, 0]
        # <1s| z |2p0> = radial / sqrt(3) = 128 sqrt(2) / 243
        want = 128.0 * math.sqrt(2.0) / 243.0
        assert radial / math.sqrt(3.0) == pytest.approx(want, abs=1e-6)

    def test_1s_inv_r_expectation(self, hydrogen_ops, spectra):
        em = radial_matrix_elements(spectra[0], spectra[0], hydrogen_ops)
        assert em.invr[0, 0] == pytest.approx(1.0, abs=1e-8)

    def test_ddr_antisymmetry(self, hydrogen_ops, spectra):
        em = radial_matrix_elements(spectra[0], spectra[0], hydrogen_ops)
        assert np.max(np.abs(em.ddr + em.ddr.T)) < 1e-12 * max(
            1.0, np.max(np.abs(em.ddr)))

    def test_energy_window(self, hydrogen_ops, spectra):
        em = radial_matrix_elements(spectra[0], spectra[1], hydrogen_ops,
                                    e_window=(-1.0, 1.0))
        nb0 = np.sum((spectra[0].energies >= -1) & (spectra[0].energies <= 1))
        nb1 = np.sum((spectra[1].energies >= -1) & (spectra[1].energies <= 1))
        assert em.r.shape == (nb0, nb1)

    def test_basis_mismatch_rejected(self, hydrogen_basis, hydrogen_ops,
                                     spectra):
        other = build_basis(50.0, order=7, n_breakpoints=60)
        other_ops = assemble_operators(other)
        other_spec = solve_channel(other, other_ops, 0, 1.0)
        with pytest.raises(BasisError):
            radial_matrix_elements(spectra[0], other_spec, hydrogen_ops)


class TestSpectrumCache:
    def test_round_trip_bit_exact(self, tmp_path, hydrogen_basis, spectra):
        path = os.path.join(tmp_path, "spec.ndt1")
        save_spectrum(path, hydrogen_basis, spectra[1])
        back = load_spectrum(path, hydrogen_basis, 1, 1.0)
        assert back is not None
        assert np.array_equal(back.energies, spectra[1].energies)
        assert np.array_equal(back.coeffs, spectra[1].coeffs)

    def test_key_mismatch_returns_none(self, tmp_path, hydrogen_basis, spectra):
        path = os.path.join(tmp_path, "spec.ndt1")
        save_spectrum(path, hydrogen_basis, spectra[1])
        assert load_spectrum(path, hydrogen_basis, 2, 1.0) is None
        other = build_basis(50.0, order=7, n_breakpoints=60)
        assert load_spectrum(path, other, 1, 1.0) is None

    def test_cached_solve_uses_cache_dir(self, tmp_path, hydrogen_basis,
                                         hydrogen_ops, monkeypatch):
        monkeypatch.setenv("NDT_CACHE_DIR", str(tmp_path))
        first = solve_channel_cached(hydrogen_basis, hydrogen_ops, 0, 1.0)
        expected = spectrum_cache_path(str(tmp_path), hydrogen_basis, 0, 1.0)
        assert os.path.exists(expected)
        second = solve_channel_cached(hydrogen_basis, hydrogen_ops, 0, 1.0)
        assert np.array_equal(first.energies, second.energies)
        assert np.array_equal(first.coeffs, second.coeffs)
