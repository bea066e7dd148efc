"""Angular-momentum algebra: Wigner 3j symbols, (l, m) channel bases and the
coupling coefficients of the operators z, x, p_z and p_x between spherical
harmonic channels.

Conventions
-----------
Complex spherical harmonics with the Condon-Shortley phase. The geometry is a
z-polarized field propagating along x, so z and p_z couple (l, m) <-> (l+-1, m)
while x and p_x couple (l, m) <-> (l+-1, m+-1).

Momentum operators are stored as real coefficient tables for the antisymmetric
structure matrix G with p = -i G; the -i factor is applied at matvec time.
Acting on a reduced radial function u(r) in channel l, the derivative operator
along a Cartesian direction e with angular weight C (the same weight as the
multiplication operator e.r_hat) contributes

    <l+1| : C * (d/dr - (l+1)/r),      <l-1| : C * (d/dr + l/r),

which is the standard velocity-form multipole decomposition.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

__all__ = [
    "wigner3j", "Symmetry", "ChannelBasis", "build_channels",
    "Operator", "RadialKind", "CouplingEntry", "CouplingTables",
    "coupling_tables",
]


# ---------------------------------------------------------------------------
# Wigner 3j
# ---------------------------------------------------------------------------

def _as_two_j(x, name):
    two = round(2.0 * x)
    if abs(2.0 * x - two) > 1e-9:
        raise ValueError(f"{name} must be integer or half-integer, got {x}")
    return int(two)


@lru_cache(maxsize=65536)
def _threej_family(two_j1: int, two_j2: int, two_m1: int, two_m2: int):
    """All 3j(j1 j2 j; m1 m2 m3) for j in [jmin, jmax], m3 = -(m1+m2).

    Three-term recursion in j (Schulten-Gordon form), swept upward from jmin
    and downward from jmax.  Each sweep is accurate from its end through the
    classically allowed region, so the two are matched at the argmax of
    |f_up * g_down|, a point that always lies in the allowed region.  The
    family is then normalized with sum_j (2j+1) f(j)^2 = 1 and sign-fixed at
    jmax.  Returns (two_jmin, values array).
    """
    j1, j2 = 0.5 * two_j1, 0.5 * two_j2
    m1, m2 = 0.5 * two_m1, 0.5 * two_m2
    m3 = -(m1 + m2)
    two_jmin = max(abs(two_j1 - two_j2), abs(two_m1 + two_m2))
    two_jmax = two_j1 + two_j2
    n = (two_jmax - two_jmin) // 2 + 1
    js = 0.5 * (two_jmin + 2 * np.arange(n))

    def A(j):
        return math.sqrt((j * j - (j1 - j2) ** 2) * ((j1 + j2 + 1.0) ** 2 - j * j)
                         * (j * j - m3 * m3))

    def B(j):
        return (-(2.0 * j + 1.0)
                * (m3 * (j1 * (j1 + 1.0) - j2 * (j2 + 1.0)) + (m1 - m2) * j * (j + 1.0)))

    sign_max = -1.0 if (round(j1 - j2 - m3)) % 2 else 1.0
    if n == 1:
        return two_jmin, np.array([sign_max / math.sqrt(two_jmax + 1.0)])

    # upward sweep over the full range
    f = np.zeros(n)
    if two_jmin == 0:
        # j1 == j2, m2 == -m1: the closed-form pair seeds the sweep
        f[0] = ((-1.0) ** round(j1 - m1)) / math.sqrt(2.0 * j1 + 1.0)
        f[1] = ((-1.0) ** round(j1 - m1)) * m1 / math.sqrt(j1 * (j1 + 1.0) * (2.0 * j1 + 1.0))
    else:
        jmin = js[0]
        f[0] = 1.0
        f[1] = -B(jmin) / (jmin * A(jmin + 1.0))
    for i in range(1, n - 1):
        j = js[i]
        f[i + 1] = -(B(j) * f[i] + (j + 1.0) * A(j) * f[i - 1]) / (j * A(j + 1.0))
        if abs(f[i + 1]) > 1e250:
            f[: i + 2] /= 1e250
    # downward sweep over the full range
    g = np.zeros(n)
    jmax = js[-1]
    g[n - 1] = 1.0
    g[n - 2] = -B(jmax) / ((jmax + 1.0) * A(jmax))
    for i in range(n - 2, 0, -1):
        j = js[i]
        g[i - 1] = -(B(j) * g[i] + j * A(j + 1.0) * g[i + 1]) / ((j + 1.0) * A(j))
        if abs(g[i - 1]) > 1e250:
            g[i - 1:] /= 1e250
    match = int(np.argmax(np.abs(f) * np.abs(g)))
    scale = f[match] / g[match]
    f[match:] = g[match:] * scale
    norm = math.sqrt(np.sum((2.0 * js + 1.0) * f * f))
    f /= norm
    if f[-1] * sign_max < 0:
        f = -f
    return two_jmin, f


def wigner3j(j1, j2, j3, m1, m2, m3) -> float:
    """Wigner 3j symbol; returns 0 when triangle or m selection rules fail."""
    two = [_as_two_j(v, k) for v, k in zip((j1, j2, j3, m1, m2, m3),
                                           ("j1", "j2", "j3", "m1", "m2", "m3"))]
    tj1, tj2, tj3, tm1, tm2, tm3 = two
    if tj1 < 0 or tj2 < 0 or tj3 < 0:
        raise ValueError("angular momenta must be nonnegative")
    for tj, tm, name in ((tj1, tm1, "1"), (tj2, tm2, "2"), (tj3, tm3, "3")):
        if abs(tm) > tj or (tj - tm) % 2:
            if abs(tm) > tj:
                return 0.0
            raise ValueError(f"m{name} must differ from j{name} by an integer")
    if tm1 + tm2 + tm3 != 0:
        return 0.0
    if tj3 < abs(tj1 - tj2) or tj3 > tj1 + tj2 or (tj1 + tj2 + tj3) % 2:
        return 0.0
    two_jmin, fam = _threej_family(tj1, tj2, tm1, tm2)
    return float(fam[(tj3 - two_jmin) // 2])


# ---------------------------------------------------------------------------
# Channel basis
# ---------------------------------------------------------------------------

class Symmetry(enum.Enum):
    FULL = "full"
    REFLECTION_EVEN = "reflection_even"


@dataclass(frozen=True)
class ChannelBasis:
    """Ordered set of angular channels, l-major with m ascending.

    With REFLECTION_EVEN symmetry the channel (l, m) with m > 0 denotes the
    y-reflection-even combination (Y_{l,-m} + (-1)^m Y_{l,m})/sqrt(2); m = 0
    denotes Y_{l,0}.  These combinations are closed under z, x, p_z, p_x and
    contain everything reachable from the (0, 0) ground state.
    """

    l_max: int
    m_max: int
    symmetry: Symmetry
    channels: tuple[tuple[int, int], ...]

    def __len__(self):
        return len(self.channels)

    def index(self, l: int, m: int) -> int:
        return self._index_map()[(l, m)]

    def _index_map(self):
        cached = object.__getattribute__(self, "__dict__").get("_imap")
        if cached is None:
            cached = {lm: i for i, lm in enumerate(self.channels)}
            object.__getattribute__(self, "__dict__")["_imap"] = cached
        return cached

    def m_values(self, l: int) -> range:
        mmax = min(l, self.m_max)
        if self.symmetry is Symmetry.REFLECTION_EVEN:
            return range(0, mmax + 1)
        return range(-mmax, mmax + 1)


def build_channels(l_max: int, m_max: int,
                   symmetry: Symmetry = Symmetry.FULL) -> ChannelBasis:
    if not 0 <= m_max <= l_max:
        raise ValueError("require 0 <= m_max <= l_max")
    chans = []
    for l in range(l_max + 1):
        mmax = min(l, m_max)
        ms = range(0, mmax + 1) if symmetry is Symmetry.REFLECTION_EVEN \
            else range(-mmax, mmax + 1)
        chans.extend((l, m) for m in ms)
    return ChannelBasis(l_max=l_max, m_max=m_max, symmetry=symmetry,
                        channels=tuple(chans))


# ---------------------------------------------------------------------------
# Coupling tables
# ---------------------------------------------------------------------------

class Operator(enum.Enum):
    Z = "z"
    X = "x"
    PZ = "pz"
    PX = "px"


class RadialKind(enum.Enum):
    R = "r"          # multiply by r
    DDR = "ddr"      # d/dr
    INVR = "invr"    # multiply by 1/r


@dataclass(frozen=True)
class CouplingEntry:
    row: int          # destination channel ordinal
    col: int          # source channel ordinal
    kind: RadialKind
    coeff: float


@dataclass(frozen=True)
class CouplingTables:
    channels: ChannelBasis
    entries: dict  # Operator -> tuple[CouplingEntry, ...]

    def for_operator(self, op: Operator):
        return self.entries[op]


def _costheta_coeff(lp, mp, l, m):
    """<Y_lp,mp | cos(theta) | Y_l,m> for complex spherical harmonics."""
    if mp != m or abs(lp - l) != 1:
        return 0.0
    pref = math.sqrt((2 * l + 1) * (2 * lp + 1)) * (-1.0) ** mp
    return pref * wigner3j(lp, 1, l, 0, 0, 0) * wigner3j(lp, 1, l, -mp, 0, m)


def _sintheta_cosphi_coeff(lp, mp, l, m):
    """<Y_lp,mp | sin(theta) cos(phi) | Y_l,m>, via sqrt(2pi/3)(Y_1,-1 - Y_1,1)."""
    if abs(mp - m) != 1 or abs(lp - l) != 1:
        return 0.0
    pref = math.sqrt((2 * l + 1) * (2 * lp + 1) / 2.0) * (-1.0) ** mp
    val = (wigner3j(lp, 1, l, -mp, -1, m) - wigner3j(lp, 1, l, -mp, 1, m))
    return pref * wigner3j(lp, 1, l, 0, 0, 0) * val


def _even_transform(l: int, m_max: int) -> np.ndarray:
    """Rows: even channels m_e = 0..min(l, m_max); columns: m = -l..l."""
    mmax = min(l, m_max)
    T = np.zeros((mmax + 1, 2 * l + 1))
    for me in range(mmax + 1):
        if me == 0:
            T[0, l] = 1.0
        else:
            T[me, l - me] = 1.0 / math.sqrt(2.0)
            T[me, l + me] = (-1.0) ** me / math.sqrt(2.0)
    return T


def _angular_block(coeff_fn, l_to, l_from, basis: ChannelBasis) -> np.ndarray:
    """Angular coefficient matrix between the m-lists of two l shells."""
    full = np.array([[coeff_fn(l_to, mp, l_from, m)
                      for m in range(-l_from, l_from + 1)]
                     for mp in range(-l_to, l_to + 1)])
    if basis.symmetry is Symmetry.REFLECTION_EVEN:
        Tt = _even_transform(l_to, basis.m_max)
        Tf = _even_transform(l_from, basis.m_max)
        return Tt @ full @ Tf.T
    mt, mf = min(l_to, basis.m_max), min(l_from, basis.m_max)
    return full[l_to - mt: l_to + mt + 1, l_from - mf: l_from + mf + 1]


def coupling_tables(channels: ChannelBasis) -> CouplingTables:
    """Every nonzero angular factor of z, x, p_z, p_x over the channel basis."""
    ent = {op: [] for op in Operator}
    for l_from in range(channels.l_max + 1):
        for l_to in (l_from - 1, l_from + 1):
            if not 0 <= l_to <= channels.l_max:
                continue
            # velocity-form radial weight of the 1/r term
            w_invr = -(l_from + 1.0) if l_to == l_from + 1 else float(l_from)
            for coeff_fn, mult_op, deriv_op in (
                    (_costheta_coeff, Operator.Z, Operator.PZ),
                    (_sintheta_cosphi_coeff, Operator.X, Operator.PX)):
                block = _angular_block(coeff_fn, l_to, l_from, channels)
                ms_to = list(channels.m_values(l_to))
                ms_from = list(channels.m_values(l_from))
                for i, m_to in enumerate(ms_to):
                    for j, m_from in enumerate(ms_from):
                        c = block[i, j]
                        if abs(c) < 1e-15:
                            continue
                        row = channels.index(l_to, m_to)
                        col = channels.index(l_from, m_from)
                        ent[mult_op].append(CouplingEntry(row, col, RadialKind.R, c))
                        ent[deriv_op].append(CouplingEntry(row, col, RadialKind.DDR, c))
                        ent[deriv_op].append(
                            CouplingEntry(row, col, RadialKind.INVR, w_invr * c))
    return CouplingTables(channels=channels,
                          entries={op: tuple(v) for op, v in ent.items()})
