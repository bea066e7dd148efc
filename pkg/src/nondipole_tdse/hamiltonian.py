"""Time-dependent Hamiltonians over the (channel x radial-eigenstate) basis.

Working representation: the field-free spectral basis per channel, truncated
at E <= e_cut.  H0 is diagonal there; the interaction enters through three
operator structures assembled once,

    p_z : -i (d/dr terms)  x  cos(theta) coefficients   (Delta m = 0)
    x   : r                x  sin(theta)cos(phi)        (Delta m = +-1)
    p_x : -i (d/dr terms)  x  sin(theta)cos(phi)        (Delta m = +-1)

scaled at matvec time by the pulse's coupling scalars:

    dipole        H0 + A p_z
    first_order   dipole - (1/c) A A' x
    envelope_vg   dipole - (1/2c) (E0/w)^2 f f' x
    pg_full       dipole + (1/4c) (E0/w)^2 [f^2 - f^2 cos(2wt+2phi)] p_x
    pg_envelope   dipole + (1/4c) (E0/w)^2 f^2 p_x

The purely time-dependent A^2(t)/2 term is a global phase and is dropped.
States are stored per l as complex (n_l, M_l) blocks inside one flat vector;
radial blocks multiply from the left (one real GEMM per shell pair and
direction), angular coefficients act as small column-mixing matrices from the
right.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np

from .angular import (ChannelBasis, CouplingTables, Operator, RadialKind,
                      Symmetry, coupling_tables)
from .constants import C_AU
from .pulse import Pulse, coupling_scalars, envelope, vector_potential
from .radial import SpectralWorkspace


class InteractionModel(enum.Enum):
    DIPOLE = "dipole"
    FIRST_ORDER = "first_order"
    ENVELOPE_VG = "envelope_vg"
    PG_FULL = "pg_full"
    PG_ENVELOPE = "pg_envelope"

    @property
    def uses_x(self) -> bool:
        return self in (InteractionModel.FIRST_ORDER, InteractionModel.ENVELOPE_VG)

    @property
    def uses_px(self) -> bool:
        return self in (InteractionModel.PG_FULL, InteractionModel.PG_ENVELOPE)


@dataclass(frozen=True)
class StateLayout:
    """Flat-vector layout: per-l contiguous complex blocks of shape (n_l, M_l)."""

    channels: ChannelBasis
    n_radial: tuple          # kept radial dimension per l
    offsets: tuple           # flat offset per l
    m_cols: tuple            # tuple over l of the m value of each column
    size: int

    def block(self, flat: np.ndarray, l: int) -> np.ndarray:
        n, M = self.n_radial[l], len(self.m_cols[l])
        off = self.offsets[l]
        return flat[off:off + n * M].reshape(n, M)

    def column(self, flat: np.ndarray, l: int, m: int) -> np.ndarray:
        return self.block(flat, l)[:, self.m_cols[l].index(m)]

    def to_channel_major(self, flat: np.ndarray) -> np.ndarray:
        """Serialize in documented channel order (l-major, m ascending)."""
        parts = [self.column(flat, l, m) for (l, m) in self.channels.channels]
        return np.concatenate(parts)

    def from_channel_major(self, vec: np.ndarray) -> np.ndarray:
        flat = np.zeros(self.size, dtype=np.complex128)
        pos = 0
        for (l, m) in self.channels.channels:
            n = self.n_radial[l]
            self.column(flat, l, m)[:] = vec[pos:pos + n]
            pos += n
        if pos != len(vec):
            raise ValueError("vector length does not match layout")
        return flat


def make_layout(channels: ChannelBasis, workspace: SpectralWorkspace) -> StateLayout:
    if channels.l_max > workspace.l_max:
        raise ValueError("channel basis requires more l shells than workspace has")
    n_radial, offsets, m_cols = [], [], []
    off = 0
    for l in range(channels.l_max + 1):
        ms = tuple(channels.m_values(l))
        n = workspace.n_kept(l)
        n_radial.append(n)
        offsets.append(off)
        m_cols.append(ms)
        off += n * len(ms)
    return StateLayout(channels=channels, n_radial=tuple(n_radial),
                       offsets=tuple(offsets), m_cols=tuple(m_cols), size=off)


@dataclass
class WavefunctionState:
    """Propagated object: flat complex coefficients plus its timestamp."""

    flat: np.ndarray
    t: float
    layout: StateLayout

    def norm_sq(self) -> float:
        return float(np.vdot(self.flat, self.flat).real)

    def copy(self) -> "WavefunctionState":
        return WavefunctionState(self.flat.copy(), self.t, self.layout)

    def block(self, l: int) -> np.ndarray:
        return self.layout.block(self.flat, l)


@dataclass(frozen=True)
class _PairMix:
    """Column-mixing matrices (M_from x M_to) for one shell pair/direction."""

    pz: np.ndarray | None
    px: np.ndarray | None
    x: np.ndarray | None


@dataclass(frozen=True)
class GaugeBoundaryReport:
    a_end: float
    f_end: float
    u_is_identity: bool
    tolerance: float = 1e-8


def gauge_boundary_check(pulse: Pulse, tolerance: float = 1e-8) -> GaugeBoundaryReport:
    """Report residual |A| and |f| at the window end.

    When both vanish the propagation-gauge transformations reduce to the
    identity, licensing direct comparison of final-state observables between
    the velocity-gauge and propagation-gauge models.
    """
    a_end = abs(vector_potential(pulse, pulse.t_end))
    f_end = abs(envelope(pulse, pulse.t_end))
    return GaugeBoundaryReport(a_end=a_end, f_end=f_end,
                               u_is_identity=bool(a_end < tolerance
                                                  and f_end < tolerance),
                               tolerance=tolerance)


class AssembledHamiltonian:
    """H(t) over the spectral product basis; immutable and shareable."""

    def __init__(self, model: InteractionModel, pulse: Pulse,
                 channels: ChannelBasis, workspace: SpectralWorkspace,
                 tables: CouplingTables | None = None):
        if channels.l_max > workspace.l_max:
            raise ValueError("workspace does not cover the requested l_max")
        if model is not InteractionModel.DIPOLE and channels.m_max == 0:
            raise ValueError(f"{model.value} couples Delta m = +-1; m_max >= 1 required")
        self.model = model
        self.pulse = pulse
        self.channels = channels
        self.workspace = workspace
        self.layout = make_layout(channels, workspace)
        self.energies = [workspace.energies[l] for l in range(channels.l_max + 1)]
        self.tables = tables if tables is not None else coupling_tables(channels)
        self._xpref = (pulse.e0 / pulse.omega) ** 2
        self._build_mixes()

    # -- assembly ----------------------------------------------------------

    def _build_mixes(self):
        ch = self.channels
        lay = self.layout
        need = {Operator.PZ: True, Operator.X: self.model.uses_x,
                Operator.PX: self.model.uses_px}
        # mixes[l][0] = up (l -> l+1), mixes[l][1] = down (l+1 -> l)
        mixes = []
        for l in range(ch.l_max):
            per_dir = []
            for up in (True, False):
                l_from, l_to = (l, l + 1) if up else (l + 1, l)
                Mf, Mt = len(lay.m_cols[l_from]), len(lay.m_cols[l_to])
                mats = {}
                for op in (Operator.PZ, Operator.PX, Operator.X):
                    if not need[op]:
                        mats[op] = None
                        continue
                    kind = RadialKind.R if op is Operator.X else RadialKind.DDR
                    mat = np.zeros((Mf, Mt))
                    for e in self.tables.for_operator(op):
                        (lt, mt) = ch.channels[e.row]
                        (lf, mf) = ch.channels[e.col]
                        if lf != l_from or lt != l_to or e.kind is not kind:
                            continue
                        src = lay.m_cols[l_from].index(mf)
                        dst = lay.m_cols[l_to].index(mt)
                        mat[src, dst] = e.coeff
                    mats[op] = mat if np.any(mat) else None
                per_dir.append(_PairMix(pz=mats[Operator.PZ],
                                        px=mats[Operator.PX],
                                        x=mats[Operator.X]))
            mixes.append(tuple(per_dir))
        self._mixes = tuple(mixes)

    # -- time-dependent scalars --------------------------------------------

    def interaction_scalars(self, t: float) -> tuple[float, float, float]:
        """(s_pz, s_x, s_px) multiplying p_z, x, p_x at time t."""
        cs = coupling_scalars(self.pulse, t)
        s_pz = cs.a
        s_x = 0.0
        s_px = 0.0
        if self.model is InteractionModel.FIRST_ORDER:
            s_x = -cs.a_aprime / C_AU
        elif self.model is InteractionModel.ENVELOPE_VG:
            s_x = -0.5 * self._xpref * cs.f_fprime / C_AU
        elif self.model is InteractionModel.PG_FULL:
            s_px = 0.25 * self._xpref * (cs.f2 - cs.f2_cos2) / C_AU
        elif self.model is InteractionModel.PG_ENVELOPE:
            s_px = 0.25 * self._xpref * cs.f2 / C_AU
        return s_pz, s_x, s_px

    # -- matvec --------------------------------------------------------------

    def apply_into(self, flat_in: np.ndarray, t: float,
                   flat_out: np.ndarray) -> np.ndarray:
        """flat_out <- H(t) flat_in."""
        lay = self.layout
        s_pz, s_x, s_px = self.interaction_scalars(t)
        for l in range(self.channels.l_max + 1):
            np.multiply(self.energies[l][:, None], lay.block(flat_in, l),
                        out=lay.block(flat_out, l))
        for l in range(self.channels.l_max):
            blocks = self.workspace.pair_blocks[l]
            for up in (True, False):
                mix = self._mixes[l][0 if up else 1]
                l_from, l_to = (l, l + 1) if up else (l + 1, l)
                src = lay.block(flat_in, l_from)
                dst = lay.block(flat_out, l_to)
                deriv_mix = None
                if mix.pz is not None or (s_px != 0.0 and mix.px is not None):
                    deriv_mix = (s_pz * mix.pz) if mix.pz is not None else None
                    if s_px != 0.0 and mix.px is not None:
                        deriv_mix = (deriv_mix + s_px * mix.px
                                     if deriv_mix is not None else s_px * mix.px)
                if deriv_mix is not None and (s_pz != 0.0 or s_px != 0.0):
                    kt = blocks.kt if up else blocks.kt.T
                    u = _real_gemm(kt, src)
                    # derivative block is -kt^T in the down direction; p = -iG
                    factor = -1j if up else 1j
                    dst += factor * (u @ deriv_mix)
                if s_x != 0.0 and mix.x is not None:
                    rt = blocks.rt if up else blocks.rt.T
                    v = _real_gemm(rt, src)
                    dst += s_x * (v @ mix.x)
        return flat_out

    def apply(self, psi: WavefunctionState, t: float | None = None) -> np.ndarray:
        """Return H(t) psi as a new flat coefficient vector."""
        if psi.flat.shape != (self.layout.size,):
            raise ValueError("state does not match Hamiltonian dimensions")
        out = np.empty_like(psi.flat)
        return self.apply_into(psi.flat, psi.t if t is None else t, out)

    # -- states --------------------------------------------------------------

    def ground_state(self, t: float | None = None) -> WavefunctionState:
        lay = self.layout
        flat = np.zeros(lay.size, dtype=np.complex128)
        lay.column(flat, 0, 0)[0] = 1.0
        t0 = self.pulse.t_start if t is None else t
        return WavefunctionState(flat=flat, t=t0, layout=lay)

    def ground_energy(self) -> float:
        return float(self.energies[0][0])


def _real_gemm(mat_real: np.ndarray, block_complex: np.ndarray) -> np.ndarray:
    """mat @ block for a real matrix and complex block, via the float view."""
    if block_complex.flags.c_contiguous:
        out = np.empty((mat_real.shape[0], block_complex.shape[1]),
                       dtype=np.complex128)
        np.matmul(mat_real, block_complex.view(np.float64),
                  out=out.view(np.float64))
        return out
    return mat_real @ block_complex


def assemble(model: InteractionModel, pulse: Pulse, channels: ChannelBasis,
             workspace: SpectralWorkspace,
             tables: CouplingTables | None = None) -> AssembledHamiltonian:
    """Build the assembled Hamiltonian; all blocks are constructed once and
    the time dependence enters only through the coupling scalars."""
    return AssembledHamiltonian(model, pulse, channels, workspace, tables)
