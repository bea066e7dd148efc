"""Observables extracted from propagated states: spectral projections, total
ionization probability, energy-differential spectra dP/dE, angle-resolved
distributions dP/dOmega, and m != 0 populations.

The continuum is box-normalized: discrete eigenstates at E_n carry
density-of-states weights dE_n = (E_{n+1} - E_{n-1})/2 (one-sided at the
ends).  Angular distributions sum partial waves coherently at fixed energy
with Coulomb phases sigma_l = arg Gamma(l + 1 - iZ/k) and integrate the
resulting density incoherently over the continuum.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numpy.polynomial.legendre import leggauss
from scipy.special import loggamma, sph_harm_y

from .angular import Symmetry
from .hamiltonian import AssembledHamiltonian, WavefunctionState


@dataclass(frozen=True)
class SpectralProjection:
    """Amplitudes over field-free eigenstates, per complex-basis channel (l, m).

    Reflection-even propagation channels are expanded back onto the complex
    (l, m) basis, so consumers never see the symmetry-reduced form.  The
    projection time ``t`` is kept so that the trivial dynamical phase
    exp(-i E t) can be removed wherever amplitudes are interpolated in energy.
    """

    amplitudes: dict          # (l, m) -> complex array over kept states of l
    energies: tuple           # per l: kept eigenvalues (ascending)
    Z: float
    t: float = 0.0

    def norm_sq(self) -> float:
        return float(sum(np.vdot(a, a).real for a in self.amplitudes.values()))

    def bound_probability(self) -> float:
        total = 0.0
        for (l, _m), amp in self.amplitudes.items():
            nb = int(np.sum(self.energies[l] < 0.0))
            total += float(np.vdot(amp[:nb], amp[:nb]).real)
        return total

    def continuum_probability(self) -> float:
        return self.norm_sq() - self.bound_probability()

    def m_nonzero_population(self) -> float:
        return float(sum(np.vdot(a, a).real
                         for (l, m), a in self.amplitudes.items() if m != 0))


def project(psi: WavefunctionState, h: AssembledHamiltonian) -> SpectralProjection:
    """Read off spectral amplitudes (identity in the working basis)."""
    if psi.layout is not h.layout:
        if psi.layout.size != h.layout.size:
            raise ValueError("state and Hamiltonian use different bases")
    lay = psi.layout
    ch = lay.channels
    amps: dict = {}
    for l in range(ch.l_max + 1):
        block = psi.block(l)
        for col, m in enumerate(lay.m_cols[l]):
            c = block[:, col]
            if ch.symmetry is Symmetry.REFLECTION_EVEN and m != 0:
                # (l, m+) = (Y_{l,-m} + (-1)^m Y_{l,m})/sqrt(2)
                amps[(l, -m)] = amps.get((l, -m), 0) + c / math.sqrt(2.0)
                amps[(l, m)] = amps.get((l, m), 0) + (-1.0) ** m * c / math.sqrt(2.0)
            else:
                amps[(l, m)] = c.copy()
    return SpectralProjection(amplitudes=amps,
                              energies=tuple(h.energies),
                              Z=h.workspace.Z, t=psi.t)


def ionization_probability(proj: SpectralProjection) -> float:
    """1 minus the total bound-state projection.

    Norm removed by an absorbing mask never reaches the bound projection, so
    absorbed flux counts as ionized by construction.
    """
    return 1.0 - proj.bound_probability()


# ---------------------------------------------------------------------------
# Energy grid and dP/dE
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class EnergyGrid:
    """Common output grid plus per-l continuum nodes and DOS weights."""

    nodes: np.ndarray
    channel_energies: tuple     # per l: continuum eigenvalues
    channel_weights: tuple      # per l: centered-difference weights

    def __post_init__(self):
        if not np.all(np.diff(self.nodes) > 0):
            raise ValueError("energy grid must be strictly increasing")
        for w in self.channel_weights:
            if len(w) and not np.all(w > 0):
                raise ValueError("degenerate continuum spacing")


def make_energy_grid(energies_per_l, e_max: float | None = None,
                     n_points: int = 2000) -> EnergyGrid:
    ch_e, ch_w = [], []
    top = []
    bottom = []
    for E in energies_per_l:
        cont = np.asarray(E[E > 0.0])
        ch_e.append(cont)
        if len(cont) >= 2:
            w = np.empty_like(cont)
            w[1:-1] = 0.5 * (cont[2:] - cont[:-2])
            w[0] = cont[1] - cont[0]
            w[-1] = cont[-1] - cont[-2]
        else:
            w = np.ones_like(cont)
        ch_w.append(w)
        if len(cont):
            top.append(cont[-1])
            bottom.append(cont[0])
    if not top:
        raise ValueError("no continuum states available")
    hi = min(top) if e_max is None else e_max
    lo = 0.5 * min(bottom)
    nodes = np.linspace(lo, hi, n_points)
    return EnergyGrid(nodes=nodes, channel_energies=tuple(ch_e),
                      channel_weights=tuple(ch_w))


@dataclass(frozen=True)
class EnergySpectrum:
    energies: np.ndarray       # common grid
    total: np.ndarray          # dP/dE summed over channels
    per_l: np.ndarray          # (l_max+1, n_grid)

    def integral(self, e_lo: float | None = None,
                 e_hi: float | None = None) -> float:
        sel = np.ones_like(self.energies, dtype=bool)
        if e_lo is not None:
            sel &= self.energies >= e_lo
        if e_hi is not None:
            sel &= self.energies <= e_hi
        return float(np.trapezoid(self.total[sel], self.energies[sel]))


def energy_spectrum(proj: SpectralProjection, grid: EnergyGrid) -> EnergySpectrum:
    """Box-normalized dP/dE on the common grid, total and per l."""
    l_max = max(l for (l, _m) in proj.amplitudes)
    per_l = np.zeros((l_max + 1, len(grid.nodes)))
    for (l, _m), amp in proj.amplitudes.items():
        cont_e = grid.channel_energies[l]
        if len(cont_e) == 0:
            continue
        n_cont = len(cont_e)
        c = amp[-n_cont:]
        dens = np.abs(c) ** 2 / grid.channel_weights[l]
        per_l[l] += np.interp(grid.nodes, cont_e, dens, left=dens[0], right=0.0)
    return EnergySpectrum(energies=grid.nodes, total=per_l.sum(axis=0),
                          per_l=per_l)


# ---------------------------------------------------------------------------
# Angular distribution
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class AngularDistribution:
    """dP/dOmega on a Gauss-Legendre (theta) x uniform (phi) mesh."""

    theta: np.ndarray
    phi: np.ndarray
    values: np.ndarray          # (n_theta, n_phi)
    theta_weights: np.ndarray   # GL weights in cos(theta)
    phi_weight: float

    def integral(self) -> float:
        return float(np.sum(self.values * self.theta_weights[:, None])
                     * self.phi_weight)

    def hemisphere_probability(self, backward: bool) -> float:
        """Probability integrated over sin(theta)cos(phi) < 0 (backward along
        the propagation direction x) or > 0 (forward)."""
        sx = np.sin(self.theta)[:, None] * np.cos(self.phi)[None, :]
        sel = sx < 0 if backward else sx > 0
        return float(np.sum(self.values * self.theta_weights[:, None] * sel)
                     * self.phi_weight)


def coulomb_phase(l: int, energy, Z: float) -> np.ndarray:
    k = np.sqrt(2.0 * np.asarray(energy))
    return np.imag(loggamma(l + 1.0 - 1j * Z / k))


def _band_overlap(e_a, w_a, e_b, w_b) -> "scipy.sparse-like":
    """Sparse interval-overlap kernel between two box-continuum ladders.

    State n carries the energy interval [E_n - w_n/2, E_n + w_n/2]; the kernel
    entry is the length of the overlap of the two intervals.  Same-ladder
    diagonals give exactly w_n, so energy integrals of densities built from
    this kernel reproduce summed probabilities without interpolation.
    """
    lo_a, hi_a = e_a - 0.5 * w_a, e_a + 0.5 * w_a
    lo_b, hi_b = e_b - 0.5 * w_b, e_b + 0.5 * w_b
    rows, cols, vals = [], [], []
    j0 = np.searchsorted(hi_b, lo_a, side="left")
    for i in range(len(e_a)):
        j = max(0, j0[i])
        while j < len(e_b) and lo_b[j] < hi_a[i]:
            ov = min(hi_a[i], hi_b[j]) - max(lo_a[i], lo_b[j])
            if ov > 0:
                rows.append(i)
                cols.append(j)
                vals.append(ov)
            j += 1
    return np.asarray(rows), np.asarray(cols), np.asarray(vals)


def angular_distribution(proj: SpectralProjection, grid: EnergyGrid,
                         n_theta: int | None = None, n_phi: int | None = None
                         ) -> AngularDistribution:
    """Energy-integrated photoelectron angular distribution.

    Partial waves are summed coherently at fixed energy with phases
    i^l exp(-i sigma_l) and integrated incoherently over the continuum at the
    energy resolution of the box spectrum: amplitudes of different channel
    ladders interfere where their density-of-states intervals overlap.  The
    solid-angle integral then reproduces the continuum probability exactly up
    to ladder-nonuniformity corrections.
    """
    l_max = max(l for (l, _m) in proj.amplitudes)
    if n_theta is None:
        n_theta = max(2 * (l_max + 1), 32)
    if n_phi is None:
        n_phi = max(4 * l_max + 4, 64)
    xs, wx = leggauss(n_theta)
    theta = np.arccos(xs[::-1])
    wx = wx[::-1]
    phi = np.arange(n_phi) * 2.0 * np.pi / n_phi

    channels = sorted(proj.amplitudes.keys())
    amps = []
    for (l, m) in channels:
        cont_e = grid.channel_energies[l]
        c = proj.amplitudes[(l, m)][-len(cont_e):] if len(cont_e) else \
            np.zeros(0, dtype=complex)
        # remove the Coulomb phase and the trivial dynamical phase e^{-iEt};
        # DOS normalization 1/sqrt(w) makes |a|^2 an energy density
        a = (1j ** l) * np.exp(-1j * coulomb_phase(l, cont_e, proj.Z)) \
            * np.exp(1j * cont_e * proj.t) * c / np.sqrt(grid.channel_weights[l])
        amps.append(a)

    # coherence matrix M[A, B] = sum_{n,n'} a_A(n) conj(a_B(n')) O(n, n')
    n_ch = len(channels)
    M = np.zeros((n_ch, n_ch), dtype=np.complex128)
    kernel_cache: dict = {}
    for ia, (la, _ma) in enumerate(channels):
        for ib, (lb, _mb) in enumerate(channels):
            if ib > ia:
                continue
            key = (la, lb)
            if key not in kernel_cache:
                kernel_cache[key] = _band_overlap(
                    grid.channel_energies[la], grid.channel_weights[la],
                    grid.channel_energies[lb], grid.channel_weights[lb])
            rows, cols, vals = kernel_cache[key]
            if len(vals) == 0:
                continue
            M[ia, ib] = np.sum(amps[ia][rows] * np.conj(amps[ib][cols]) * vals)
            M[ib, ia] = np.conj(M[ia, ib])

    TH, PH = np.meshgrid(theta, phi, indexing="ij")
    Y = np.empty((n_ch, n_theta * n_phi), dtype=np.complex128)
    for row, (l, m) in enumerate(channels):
        Y[row] = sph_harm_y(l, m, TH, PH).ravel()
    values = np.einsum("ax,ab,bx->x", np.conj(Y), M, Y, optimize=True).real
    values = np.maximum(values, 0.0)
    return AngularDistribution(theta=theta, phi=phi,
                               values=values.reshape(n_theta, n_phi),
                               theta_weights=wx,
                               phi_weight=2.0 * np.pi / n_phi)


# ---------------------------------------------------------------------------
# m != 0 population and trace band power
# ---------------------------------------------------------------------------

def m_population(proj: SpectralProjection) -> float:
    """Total population outside m = 0 (time series come from propagate probes)."""
    return proj.m_nonzero_population()


def band_power(times: np.ndarray, values: np.ndarray,
               omega_lo: float, omega_hi: float) -> float:
    """Spectral power of a uniformly sampled trace inside an angular-frequency
    band, with the mean removed.  Used to quantify carrier-frequency
    oscillations of population traces."""
    times = np.asarray(times, dtype=float)
    values = np.asarray(values, dtype=float)
    dt = np.diff(times)
    if len(dt) < 8 or not np.allclose(dt, dt[0], rtol=1e-6, atol=1e-12):
        raise ValueError("band_power requires a uniform time grid")
    x = values - values.mean()
    X = np.fft.rfft(x)
    w = 2.0 * np.pi * np.fft.rfftfreq(len(x), dt[0])
    sel = (w >= omega_lo) & (w <= omega_hi)
    return float(np.sum(np.abs(X[sel]) ** 2) / len(x) ** 2)
