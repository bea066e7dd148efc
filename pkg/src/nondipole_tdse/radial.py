"""B-spline radial discretization of the hydrogen problem.

The reduced radial equation u(r) = r R(r) is discretized on [0, r_max] with
B-splines of order k (polynomial degree k-1) and Dirichlet conditions imposed
by dropping the first and last spline.  All field-free matrices are banded
with bandwidth k-1 and assembled by per-interval Gauss-Legendre quadrature;
with the boundary splines removed every integrand involving 1/r or 1/r^2 is
regular at the origin.

Field-free eigenpairs per angular momentum solve the generalized problem
H0(l) c = E S c with H0(l) = -D2/2 + l(l+1)/(2 r^2) - Z/r.  Eigenvectors are
S-orthonormal and sign-fixed so the leading spline coefficient is positive,
which makes the continuum phase convention smooth in energy.
"""

from __future__ import annotations

import enum
import math
import os
import struct
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg
from numpy.polynomial.legendre import leggauss
from scipy.interpolate import BSpline


class KnotLaw(enum.Enum):
    LINEAR = "linear"
    SQRT_RAMP = "sqrt_ramp"


class BasisError(ValueError):
    pass


class ChannelSolveError(RuntimeError):
    """Eigensolver failure, tagged with the angular momentum channel."""

    def __init__(self, l, message):
        super().__init__(f"channel l={l}: {message}")
        self.l = l


@dataclass(frozen=True)
class RadialBasis:
    r_max: float
    order: int
    breakpoints: np.ndarray          # distinct, includes 0 and r_max
    knots: np.ndarray                # full knot vector, endpoint multiplicity k
    knot_law: KnotLaw
    quad_nodes: np.ndarray           # (n_intervals, q)
    quad_weights: np.ndarray         # (n_intervals, q)

    @property
    def n_splines(self) -> int:
        """Number of retained splines (boundary splines removed)."""
        return len(self.breakpoints) + self.order - 4

    @property
    def degree(self) -> int:
        return self.order - 1

    def key(self) -> tuple:
        return (round(self.r_max, 12), self.order, self.knot_law.value,
                len(self.breakpoints), self.n_splines)


def build_basis(r_max: float, order: int = 7, n_breakpoints: int = 201,
                knot_law: KnotLaw = KnotLaw.LINEAR, match_radius: float = 20.0,
                quad_points: int | None = None) -> RadialBasis:
    """Construct the radial B-spline basis.

    SQRT_RAMP places breakpoints quadratically in index up to ``match_radius``
    (dense near the nucleus) and linearly beyond, with matched spacing at the
    junction.
    """
    if r_max <= 0:
        raise BasisError("r_max must be positive")
    if order < 4:
        raise BasisError("order must be at least 4")
    if n_breakpoints < order + 2:
        raise BasisError("need at least order + 2 breakpoints")
    if knot_law is KnotLaw.LINEAR:
        brk = np.linspace(0.0, r_max, n_breakpoints)
    else:
        if not 0 < match_radius < r_max:
            raise BasisError("match_radius must lie inside (0, r_max)")
        n_int = n_breakpoints - 1
        # quadratic region gets J intervals, junction spacing 2*rm/J continues
        J = max(2, round(2.0 * n_int * match_radius / (r_max + match_radius)))
        J = min(J, n_int - 1)
        quad_part = match_radius * (np.arange(J + 1) / J) ** 2
        lin_part = np.linspace(match_radius, r_max, n_int - J + 1)
        brk = np.concatenate([quad_part, lin_part[1:]])
    if not np.all(np.diff(brk) > 0):
        raise BasisError("degenerate breakpoint sequence")
    k = order
    knots = np.concatenate([np.full(k - 1, brk[0]), brk, np.full(k - 1, brk[-1])])
    q = quad_points if quad_points is not None else k + 4
    if q < k:
        raise BasisError("quadrature order must be >= spline order")
    x, w = leggauss(q)
    a, b = brk[:-1, None], brk[1:, None]
    nodes = 0.5 * (b - a) * x[None, :] + 0.5 * (a + b)
    weights = 0.5 * (b - a) * np.tile(w, (len(brk) - 1, 1))
    return RadialBasis(r_max=float(r_max), order=k, breakpoints=brk, knots=knots,
                       knot_law=knot_law, quad_nodes=nodes, quad_weights=weights)


@dataclass(frozen=True)
class BandedMatrix:
    """Symmetric-or-not banded matrix with offsets -(bw) .. +(bw)."""

    data: np.ndarray      # (2*bw+1, n); row i holds diagonal offset i-bw
    bandwidth: int

    @property
    def n(self) -> int:
        return self.data.shape[1]

    def to_dense(self) -> np.ndarray:
        n, bw = self.n, self.bandwidth
        out = np.zeros((n, n))
        for i, off in enumerate(range(-bw, bw + 1)):
            if off >= 0:
                rows = np.arange(n - off)
                out[rows, rows + off] = self.data[i, off:n]
            else:
                cols = np.arange(n + off)
                out[cols - off, cols] = self.data[i, :n + off]
        return out

    @staticmethod
    def from_dense(m: np.ndarray, bandwidth: int) -> "BandedMatrix":
        n = m.shape[0]
        data = np.zeros((2 * bandwidth + 1, n))
        for i, off in enumerate(range(-bandwidth, bandwidth + 1)):
            diag = np.diagonal(m, off)
            if off >= 0:
                data[i, off:off + len(diag)] = diag
            else:
                data[i, :len(diag)] = diag
        return BandedMatrix(data=data, bandwidth=bandwidth)


@dataclass(frozen=True)
class RadialOperators:
    """Banded field-free matrices over the retained splines."""

    S: BandedMatrix       # overlap
    D2: BandedMatrix      # second derivative (via -int B' B', Dirichlet ends)
    InvR: BandedMatrix    # 1/r
    InvR2: BandedMatrix   # 1/r^2
    R: BandedMatrix       # r
    Ddr: BandedMatrix     # d/dr (antisymmetric)
    basis_key: tuple


def _spline_values(basis: RadialBasis):
    """Values and first derivatives of all splines at the quadrature nodes."""
    deg = basis.degree
    n_full = len(basis.breakpoints) + basis.order - 2
    pts = basis.quad_nodes.ravel()
    wts = basis.quad_weights.ravel()
    spl = BSpline(basis.knots, np.eye(n_full), deg, extrapolate=False)
    V = np.nan_to_num(spl(pts))                    # (npts, n_full)
    Vp = np.nan_to_num(spl.derivative()(pts))
    return pts, wts, V, Vp


def assemble_weighted_overlap(basis: RadialBasis, weight) -> BandedMatrix:
    """Banded matrix of int B_i(r) w(r) B_j(r) dr over the retained splines."""
    pts, wts, V, _ = _spline_values(basis)
    w = np.asarray(weight(pts), dtype=float)
    m = (V * (wts * w)[:, None]).T @ V
    return BandedMatrix.from_dense(m[1:-1, 1:-1], basis.order - 1)


def assemble_operators(basis: RadialBasis) -> RadialOperators:
    """Assemble all six banded matrices by Gauss-Legendre quadrature."""
    pts, wts, V, Vp = _spline_values(basis)
    n_full = V.shape[1]
    inv_r = 1.0 / pts

    def gram(left, weight, right):
        return (left * (wts * weight)[:, None]).T @ right

    bw = basis.order - 1
    sl = slice(1, n_full - 1)

    def banded(m, symmetric=True):
        m = m[sl, sl]
        if symmetric:           # enforce exact symmetry against roundoff
            m = 0.5 * (m + m.T)
        return BandedMatrix.from_dense(m, bw)

    S = gram(V, np.ones_like(pts), V)
    R = gram(V, pts, V)
    InvR = gram(V, inv_r, V)
    InvR2 = gram(V, inv_r * inv_r, V)
    Ddr = gram(V, np.ones_like(pts), Vp)
    D2 = -gram(Vp, np.ones_like(pts), Vp)
    return RadialOperators(S=banded(S), D2=banded(D2), InvR=banded(InvR),
                           InvR2=banded(InvR2), R=banded(R),
                           Ddr=banded(Ddr, symmetric=False),
                           basis_key=basis.key())


@dataclass(frozen=True)
class ChannelSpectrum:
    """Field-free eigenpairs of one angular momentum channel."""

    l: int
    Z: float
    energies: np.ndarray          # ascending
    coeffs: np.ndarray            # (n_splines, n_states), S-orthonormal columns
    basis_key: tuple

    @property
    def n_states(self) -> int:
        return len(self.energies)

    @property
    def n_bound(self) -> int:
        return int(np.sum(self.energies < 0.0))

    def truncated(self, e_cut: float) -> "ChannelSpectrum":
        keep = self.energies <= e_cut
        return ChannelSpectrum(l=self.l, Z=self.Z, energies=self.energies[keep],
                               coeffs=np.ascontiguousarray(self.coeffs[:, keep]),
                               basis_key=self.basis_key)


def hamiltonian_banded(ops: RadialOperators, l: int, Z: float) -> BandedMatrix:
    """H0(l) = -D2/2 + l(l+1) InvR2 / 2 - Z InvR, banded."""
    data = (-0.5 * ops.D2.data + 0.5 * l * (l + 1) * ops.InvR2.data
            - Z * ops.InvR.data)
    return BandedMatrix(data=data, bandwidth=ops.D2.bandwidth)


def solve_channel(basis: RadialBasis, ops: RadialOperators, l: int,
                  Z: float = 1.0) -> ChannelSpectrum:
    """Generalized symmetric-definite eigensolution of one l channel."""
    if l < 0:
        raise ValueError("l must be nonnegative")
    if ops.basis_key != basis.key():
        raise BasisError("operators were assembled for a different basis")
    H = hamiltonian_banded(ops, l, Z).to_dense()
    S = ops.S.to_dense()
    try:
        energies, vecs = scipy.linalg.eigh(H, S)
    except scipy.linalg.LinAlgError as exc:  # pragma: no cover - rare
        raise ChannelSolveError(l, str(exc)) from exc
    # deterministic sign: leading significant spline coefficient positive,
    # matching the positivity of the regular solution near r = 0
    for j in range(vecs.shape[1]):
        col = vecs[:, j]
        idx = np.argmax(np.abs(col) > 1e-3 * np.max(np.abs(col)))
        if col[idx] < 0:
            vecs[:, j] = -col
    return ChannelSpectrum(l=l, Z=Z, energies=energies,
                           coeffs=np.ascontiguousarray(vecs),
                           basis_key=basis.key())


@dataclass(frozen=True)
class RadialMatrixElements:
    """Dense tables <a| op |b> over eigenpairs of two channel spectra."""

    r: np.ndarray
    ddr: np.ndarray
    invr: np.ndarray


def radial_matrix_elements(spec_a: ChannelSpectrum, spec_b: ChannelSpectrum,
                           ops: RadialOperators,
                           e_window: tuple[float, float] | None = None
                           ) -> RadialMatrixElements:
    """Tables c_a^T M c_b for M in {R, Ddr, InvR}.

    ``e_window`` restricts both spectra to eigenvalues inside [lo, hi].
    """
    if spec_a.basis_key != spec_b.basis_key or spec_a.basis_key != ops.basis_key:
        raise BasisError("spectra/operators built from different bases")
    ca, cb = spec_a.coeffs, spec_b.coeffs
    if e_window is not None:
        lo, hi = e_window
        ca = ca[:, (spec_a.energies >= lo) & (spec_a.energies <= hi)]
        cb = cb[:, (spec_b.energies >= lo) & (spec_b.energies <= hi)]
    return RadialMatrixElements(
        r=ca.T @ ops.R.to_dense() @ cb,
        ddr=ca.T @ ops.Ddr.to_dense() @ cb,
        invr=ca.T @ ops.InvR.to_dense() @ cb,
    )


# ---------------------------------------------------------------------------
# Spectrum cache ("NDT1")
# ---------------------------------------------------------------------------

_NDT1_MAGIC = b"NDT1"
_NDT1_VERSION = 1
_KNOT_LAW_CODE = {KnotLaw.LINEAR: 0, KnotLaw.SQRT_RAMP: 1}
_KNOT_LAW_FROM_CODE = {v: k for k, v in _KNOT_LAW_CODE.items()}
_HEADER = struct.Struct("<4sIdIBxxxIIdII")  # magic, ver, r_max, order, law,
                                            # n_breakpoints, l, Z, n_rows, n_states


def spectrum_cache_path(cache_dir: str, basis: RadialBasis, l: int, Z: float) -> str:
    r_max, order, law, n_brk, _ = basis.key()
    name = f"spec_r{r_max:g}_k{order}_{law}_b{n_brk}_l{l}_Z{Z:g}.ndt1"
    return os.path.join(cache_dir, name)


def save_spectrum(path: str, basis: RadialBasis, spec: ChannelSpectrum) -> None:
    r_max, order, law, n_brk, _ = basis.key()
    header = _HEADER.pack(_NDT1_MAGIC, _NDT1_VERSION, r_max, order,
                          _KNOT_LAW_CODE[KnotLaw(law)], n_brk, spec.l, spec.Z,
                          spec.coeffs.shape[0], spec.n_states)
    tmp = path + ".tmp"
    with open(tmp, "wb") as fh:
        fh.write(header)
        fh.write(np.ascontiguousarray(spec.energies, dtype="<f8").tobytes())
        fh.write(np.asfortranarray(spec.coeffs.astype("<f8")).tobytes(order="F"))
    os.replace(tmp, path)


def load_spectrum(path: str, basis: RadialBasis, l: int, Z: float
                  ) -> ChannelSpectrum | None:
    """Load a cached spectrum; returns None on any key mismatch."""
    try:
        with open(path, "rb") as fh:
            raw = fh.read()
    except OSError:
        return None
    if len(raw) < _HEADER.size:
        return None
    (magic, ver, r_max, order, law_code, n_brk, l_file, z_file,
     n_rows, n_states) = _HEADER.unpack_from(raw)
    key = basis.key()
    if (magic != _NDT1_MAGIC or ver != _NDT1_VERSION
            or (r_max, order, _KNOT_LAW_FROM_CODE.get(law_code, None), n_brk)
            != (key[0], key[1], KnotLaw(key[2]), key[3])
            or l_file != l or z_file != Z or n_rows != basis.n_splines):
        return None
    off = _HEADER.size
    energies = np.frombuffer(raw, dtype="<f8", count=n_states, offset=off).copy()
    off += 8 * n_states
    coeffs = np.frombuffer(raw, dtype="<f8", count=n_rows * n_states,
                           offset=off).reshape((n_rows, n_states), order="F").copy()
    return ChannelSpectrum(l=l, Z=z_file, energies=energies,
                           coeffs=np.ascontiguousarray(coeffs), basis_key=key)


def solve_channel_cached(basis: RadialBasis, ops: RadialOperators, l: int,
                         Z: float = 1.0, cache_dir: str | None = None
                         ) -> ChannelSpectrum:
    if cache_dir is None:
        cache_dir = os.environ.get("NDT_CACHE_DIR") or None
    if cache_dir:
        os.makedirs(cache_dir, exist_ok=True)
        path = spectrum_cache_path(cache_dir, basis, l, Z)
        spec = load_spectrum(path, basis, l, Z)
        if spec is not None:
            return spec
    spec = solve_channel(basis, ops, l, Z)
    if cache_dir:
        save_spectrum(spectrum_cache_path(cache_dir, basis, l, Z), basis, spec)
    return spec


# ---------------------------------------------------------------------------
# Spectral workspace for propagation
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class PairBlocks:
    """Radial blocks between eigenbases of adjacent l, from l to l+1.

    rt : <n',l+1| r |n,l>
    kt : <n',l+1| d/dr - (l+1)/r |n,l>; the reverse derivative block is -kt^T.
    """

    rt: np.ndarray
    kt: np.ndarray


@dataclass(frozen=True)
class SpectralWorkspace:
    """Truncated field-free spectral bases for l = 0..l_max plus the radial
    coupling blocks between adjacent shells."""

    basis: RadialBasis
    Z: float
    e_cut: float
    l_max: int
    spectra: tuple            # full ChannelSpectrum per l (untruncated)
    energies: tuple           # kept eigenvalues per l
    coeffs: tuple             # kept eigenvector matrices per l
    pair_blocks: tuple        # PairBlocks for (l, l+1), l = 0..l_max-1

    def n_kept(self, l: int) -> int:
        return len(self.energies[l])


def build_workspace(basis: RadialBasis, ops: RadialOperators, l_max: int,
                    Z: float = 1.0, e_cut: float = 30.0,
                    cache_dir: str | None = None) -> SpectralWorkspace:
    spectra = [solve_channel_cached(basis, ops, l, Z, cache_dir)
               for l in range(l_max + 1)]
    kept = [s.truncated(e_cut) for s in spectra]
    energies = tuple(s.energies for s in kept)
    coeffs = tuple(s.coeffs for s in kept)
    R_d = ops.R.to_dense()
    D_d = ops.Ddr.to_dense()
    W_d = ops.InvR.to_dense()
    blocks = []
    for l in range(l_max):
        cu, cl = coeffs[l + 1], coeffs[l]
        rt = cu.T @ R_d @ cl
        kt = cu.T @ (D_d - (l + 1.0) * W_d) @ cl
        blocks.append(PairBlocks(rt=np.ascontiguousarray(rt),
                                 kt=np.ascontiguousarray(kt)))
    return SpectralWorkspace(basis=basis, Z=Z, e_cut=e_cut, l_max=l_max,
                             spectra=tuple(spectra), energies=energies,
                             coeffs=coeffs, pair_blocks=tuple(blocks))


def default_r_max(e0: float, omega: float) -> float:
    """Box-size rule: max(150, 4 * quiver amplitude + 50)."""
    alpha = e0 / omega ** 2
    return max(150.0, 4.0 * alpha + 50.0)
