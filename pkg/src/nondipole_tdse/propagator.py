"""Time propagation: midpoint-Magnus exponential steps in an adaptively sized
Krylov subspace (Arnoldi with full reorthogonalization), an optional radial
absorber, probe recording and binary checkpoints.

One step advances psi(t) -> exp(-i H(t + dt/2) dt) psi(t); the subspace is
grown until the residual estimate |dt| * h_{m+1,m} * |u_m| drops below the
configured tolerance.  The small projected matrix is Hermitianized before
exponentiation, so each step is unitary up to orthogonalization roundoff.
"""

from __future__ import annotations

import math
import os
import struct
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from .hamiltonian import AssembledHamiltonian, WavefunctionState
from .radial import assemble_weighted_overlap


class KrylovConvergenceError(RuntimeError):
    def __init__(self, t, residual, dim):
        super().__init__(f"Krylov step at t={t:.6g} stalled at dim {dim} "
                         f"with residual estimate {residual:.3e}")
        self.t = t
        self.residual = residual
        self.dim = dim


@dataclass(frozen=True)
class MaskConfig:
    """cos^exponent radial absorber ramping from r_on to the box edge."""

    r_on: float
    exponent: float = 4.0


@dataclass(frozen=True)
class PropagatorConfig:
    dt: float | None = None            # default: cycle time / 200
    steps_per_cycle: int | None = None  # alternative way to set dt
    krylov_dim_max: int = 40
    krylov_tol: float = 1e-12
    renormalize: bool = False
    mask: MaskConfig | None = None

    def __post_init__(self):
        if self.dt is not None and self.dt <= 0:
            raise ValueError("dt must be positive")
        if self.steps_per_cycle is not None and self.steps_per_cycle < 1:
            raise ValueError("steps_per_cycle must be >= 1")
        if not 2 <= self.krylov_dim_max <= 200:
            raise ValueError("krylov_dim_max must be in [2, 200]")

    def resolve_dt(self, cycle_time: float) -> float:
        if self.dt is not None:
            return self.dt
        n = self.steps_per_cycle if self.steps_per_cycle is not None else 200
        return cycle_time / n


def krylov_propagate_vector(apply_into, v: np.ndarray, dt: float,
                            dim_max: int, tol: float):
    """Approximate exp(-i dt H) v; returns (result, dim_used, residual)."""
    beta = math.sqrt(np.vdot(v, v).real)
    if beta == 0.0 or dt == 0.0:
        return v.copy(), 0, 0.0
    n = len(v)
    V = np.empty((dim_max + 1, n), dtype=np.complex128)
    H = np.zeros((dim_max + 1, dim_max), dtype=np.complex128)
    V[0] = v / beta
    w = np.empty(n, dtype=np.complex128)
    u_small = None
    for j in range(dim_max):
        apply_into(V[j], w)
        for i in range(j + 1):           # modified Gram-Schmidt
            c = np.vdot(V[i], w)
            H[i, j] += c
            w -= c * V[i]
        for i in range(j + 1):           # one reorthogonalization pass
            c = np.vdot(V[i], w)
            H[i, j] += c
            w -= c * V[i]
        hnext = math.sqrt(np.vdot(w, w).real)
        H[j + 1, j] = hnext
        m = j + 1
        Hm = H[:m, :m]
        Hm = 0.5 * (Hm + Hm.conj().T)
        lam, Q = np.linalg.eigh(Hm)
        u_small = Q @ (np.exp(-1j * dt * lam) * Q[0].conj())
        residual = abs(dt) * hnext * abs(u_small[m - 1])
        if residual < tol or hnext < 1e-14:
            return beta * (u_small @ V[:m]), m, residual
        V[j + 1] = w / hnext
    raise KrylovConvergenceError(float("nan"), residual, dim_max)


def step(h: AssembledHamiltonian, psi: WavefunctionState, dt: float,
         cfg: PropagatorConfig) -> tuple[WavefunctionState, int, float]:
    """One midpoint-Magnus step; returns (state, krylov_dim, residual)."""
    t_mid = psi.t + 0.5 * dt

    def apply_into(vec, out):
        h.apply_into(vec, t_mid, out)

    try:
        flat, dim, residual = krylov_propagate_vector(
            apply_into, psi.flat, dt, cfg.krylov_dim_max, cfg.krylov_tol)
    except KrylovConvergenceError as exc:
        raise KrylovConvergenceError(psi.t, exc.residual, exc.dim) from None
    out = WavefunctionState(flat=flat, t=psi.t + dt, layout=psi.layout)
    if cfg.renormalize:
        out.flat /= math.sqrt(out.norm_sq())
    return out, dim, residual


# ---------------------------------------------------------------------------
# Radial absorber
# ---------------------------------------------------------------------------

class MaskOperator:
    """Projection of multiplication by a cos^p ramp onto the spectral basis.

    The masked function m(r) u(r) is re-expanded in splines and projected back
    onto the retained eigenvectors, which amounts to one dense matrix
    Q_l = C_l^T S_mask C_l per shell; all Q_l eigenvalues lie in [0, 1] so the
    norm never increases.
    """

    def __init__(self, h: AssembledHamiltonian, mask: MaskConfig):
        basis = h.workspace.basis
        if not 0.0 < mask.r_on <= basis.r_max:
            raise ValueError("mask r_on must lie in (0, r_max]")
        r_on, r_max, p = mask.r_on, basis.r_max, mask.exponent

        def weight(r):
            ramp = np.clip((r - r_on) / max(r_max - r_on, 1e-300), 0.0, 1.0)
            return np.cos(0.5 * np.pi * ramp) ** p

        s_mask = assemble_weighted_overlap(basis, weight).to_dense()
        self.blocks = [np.ascontiguousarray(c.T @ s_mask @ c)
                       for c in h.workspace.coeffs[:h.channels.l_max + 1]]
        self.layout = h.layout

    def apply(self, psi: WavefunctionState) -> None:
        """In-place mask application; returns None (norm loss is absorbed)."""
        for l, q in enumerate(self.blocks):
            block = psi.block(l)
            block[:] = q @ block


def apply_mask(psi: WavefunctionState, mask_op: MaskOperator) -> WavefunctionState:
    out = psi.copy()
    mask_op.apply(out)
    return out


# ---------------------------------------------------------------------------
# Full propagation with probes
# ---------------------------------------------------------------------------

def _probe_value(name: str, psi: WavefunctionState) -> float:
    lay = psi.layout
    if name == "norm":
        return math.sqrt(psi.norm_sq())
    if name == "m_nonzero":
        total = 0.0
        for l in range(lay.channels.l_max + 1):
            block = psi.block(l)
            for col, m in enumerate(lay.m_cols[l]):
                if m != 0:
                    total += float(np.vdot(block[:, col], block[:, col]).real)
        return total
    if name == "ground":
        c = lay.column(psi.flat, 0, 0)[0]
        return float(abs(c) ** 2)
    raise ValueError(f"unknown probe '{name}'")


@dataclass
class RunTrace:
    """Propagation output: final state, probe series and diagnostics."""

    final_state: WavefunctionState
    probe_times: np.ndarray
    probes: dict
    n_steps: int
    dt: float
    mean_krylov_dim: float
    max_krylov_dim: int
    max_residual: float
    norm_end: float
    absorbed_fraction: float
    mask_norm_loss: float = 0.0


def propagate(h: AssembledHamiltonian, psi0: WavefunctionState,
              cfg: PropagatorConfig, t_start: float | None = None,
              t_end: float | None = None, probes: tuple = (),
              probe_stride: int = 1) -> RunTrace:
    """Propagate from t_start to t_end, recording probes every
    ``probe_stride`` steps (plus both endpoints)."""
    t0 = h.pulse.t_start if t_start is None else t_start
    t1 = h.pulse.t_end if t_end is None else t_end
    psi = psi0.copy()
    psi.t = t0
    dt_target = cfg.resolve_dt(h.pulse.cycle_time)
    span = t1 - t0
    if span < 0:
        raise ValueError("t_end must be >= t_start")
    # anchor the step grid at the pulse window so a resumed run reproduces the
    # uninterrupted run's step times bitwise
    anchor = h.pulse.t_start
    full_span = h.pulse.t_end - anchor
    n_full = max(1, math.ceil(full_span / dt_target - 1e-12))
    dt_grid = full_span / n_full
    k0f = (t0 - anchor) / dt_grid
    k1f = (t1 - anchor) / dt_grid
    on_grid = (abs(k0f - round(k0f)) < 1e-9 and abs(k1f - round(k1f)) < 1e-9
               and 0 <= round(k0f) <= round(k1f) <= n_full)
    if on_grid:
        k_start, k_end = round(k0f), round(k1f)
        n_steps, dt = k_end - k_start, dt_grid
    else:
        k_start = 0
        n_steps = max(1, math.ceil(span / dt_target - 1e-12)) if span > 0 else 0
        dt = span / n_steps if n_steps else 0.0
    mask_op = MaskOperator(h, cfg.mask) if cfg.mask is not None else None

    times = [psi.t]
    series = {p: [_probe_value(p, psi)] for p in probes}
    dims, max_res, mask_loss = [], 0.0, 0.0
    for k in range(n_steps):
        psi, dim, res = step(h, psi, dt, cfg)
        psi.t = (anchor + (k_start + k + 1) * dt if on_grid
                 else t0 + (k + 1) * dt)
        dims.append(dim)
        max_res = max(max_res, res)
        if mask_op is not None:
            before = psi.norm_sq()
            mask_op.apply(psi)
            mask_loss += before - psi.norm_sq()
        if probes and ((k + 1) % probe_stride == 0 or k + 1 == n_steps):
            if times[-1] != psi.t:
                times.append(psi.t)
                for p in probes:
                    series[p].append(_probe_value(p, psi))
    norm_end_sq = psi.norm_sq()
    return RunTrace(final_state=psi,
                    probe_times=np.asarray(times),
                    probes={p: np.asarray(v) for p, v in series.items()},
                    n_steps=n_steps, dt=dt,
                    mean_krylov_dim=float(np.mean(dims)) if dims else 0.0,
                    max_krylov_dim=int(np.max(dims)) if dims else 0,
                    max_residual=max_res,
                    norm_end=math.sqrt(norm_end_sq),
                    absorbed_fraction=1.0 - norm_end_sq,
                    mask_norm_loss=mask_loss)


# ---------------------------------------------------------------------------
# Checkpoints ("NDTS")
# ---------------------------------------------------------------------------

_NDTS_MAGIC = b"NDTS"
_NDTS_VERSION = 1
_NDTS_HEADER = struct.Struct("<4sIIId32s32s")
# magic, version, n_channels, n_radial_retained (total), t, pulse hash, config hash


def write_checkpoint(path: str, psi: WavefunctionState, pulse_hash: bytes,
                     config_hash: bytes) -> None:
    lay = psi.layout
    vec = lay.to_channel_major(psi.flat)
    header = _NDTS_HEADER.pack(_NDTS_MAGIC, _NDTS_VERSION,
                               len(lay.channels.channels), len(vec), psi.t,
                               pulse_hash, config_hash)
    interleaved = np.empty(2 * len(vec))
    interleaved[0::2] = vec.real
    interleaved[1::2] = vec.imag
    tmp = path + ".tmp"
    with open(tmp, "wb") as fh:
        fh.write(header)
        fh.write(interleaved.astype("<f8").tobytes())
    os.replace(tmp, path)


@dataclass(frozen=True)
class Checkpoint:
    t: float
    n_channels: int
    coefficients: np.ndarray      # channel-major complex vector
    pulse_hash: bytes
    config_hash: bytes


def read_checkpoint(path: str) -> Checkpoint:
    with open(path, "rb") as fh:
        raw = fh.read()
    if len(raw) < _NDTS_HEADER.size:
        raise ValueError(f"{path}: truncated checkpoint")
    magic, ver, n_ch, n_tot, t, ph, ch = _NDTS_HEADER.unpack_from(raw)
    if magic != _NDTS_MAGIC or ver != _NDTS_VERSION:
        raise ValueError(f"{path}: not an NDTS v{_NDTS_VERSION} checkpoint")
    data = np.frombuffer(raw, dtype="<f8", count=2 * n_tot,
                         offset=_NDTS_HEADER.size)
    vec = data[0::2] + 1j * data[1::2]
    return Checkpoint(t=t, n_channels=n_ch, coefficients=vec,
                      pulse_hash=ph, config_hash=ch)
