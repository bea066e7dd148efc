"""Run orchestration: shared basis construction, sweep dispatch over worker
threads, observable table emission and result manifests.

Sweep jobs are independent; bases are built once per distinct basis parameter
set and shared read-only.  Every emitted file is listed in the result manifest
with a SHA-256 checksum (for tables, over the non-comment payload, so the
checksum is independent of timestamps in the metadata header).
"""

from __future__ import annotations

import hashlib
import json
import math
import os
import time
import traceback
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from threading import Lock

import numpy as np

from . import __version__
from .angular import build_channels, coupling_tables
from .config import RunConfig, expand_sweep, parse_text, resolve
from .hamiltonian import (AssembledHamiltonian, InteractionModel,
                          WavefunctionState, assemble, gauge_boundary_check)
from .observables import (angular_distribution, energy_spectrum,
                          ionization_probability, make_energy_grid, project)
from .propagator import (KrylovConvergenceError, propagate, read_checkpoint,
                         write_checkpoint)
from .radial import (ChannelSolveError, KnotLaw, assemble_operators,
                     build_basis, build_workspace)


class NumericalFailure(RuntimeError):
    pass


# ---------------------------------------------------------------------------
# Table writer
# ---------------------------------------------------------------------------

def write_table(kind: str, columns: dict, path: str, metadata: dict) -> str:
    """Write a CSV table and return the SHA-256 of its payload.

    '#'-prefixed metadata lines precede a header row naming columns (units in
    the names); floats are written with shortest round-trip formatting; the
    checksum covers header and data lines only.
    """
    names = list(columns)
    arrays = [np.asarray(columns[n]) for n in names]
    length = len(arrays[0])
    for name, arr in zip(names, arrays):
        if len(arr) != length:
            raise ValueError(f"column '{name}' length mismatch")
        if not np.all(np.isfinite(arr)):
            raise ValueError(f"column '{name}' contains non-finite values")
    meta_lines = [f"# {k} = {v}" for k, v in metadata.items()]
    meta_lines.insert(0, f"# kind = {kind}")
    body = [",".join(names)]
    for i in range(length):
        body.append(",".join(repr(float(a[i])) for a in arrays))
    payload = ("\n".join(body) + "\n").encode()
    tmp = path + ".tmp"
    with open(tmp, "wb") as fh:
        fh.write(("\n".join(meta_lines) + "\n").encode())
        fh.write(payload)
    os.replace(tmp, path)
    return hashlib.sha256(payload).hexdigest()


def read_table(path: str):
    """Parse a table written by write_table -> (metadata, columns dict)."""
    meta, header, rows = {}, None, []
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.rstrip("\n")
            if line.startswith("#"):
                if "=" in line:
                    k, v = line[1:].split("=", 1)
                    meta[k.strip()] = v.strip()
                continue
            if header is None:
                header = line.split(",")
                continue
            if line:
                rows.append([float(x) for x in line.split(",")])
    data = np.asarray(rows) if rows else np.zeros((0, len(header or [])))
    cols = {name: data[:, i] if len(rows) else np.array([])
            for i, name in enumerate(header or [])}
    return meta, cols


# ---------------------------------------------------------------------------
# Shared bases
# ---------------------------------------------------------------------------

class BasisCache:
    """Builds spectral workspaces once per distinct basis parameter set."""

    def __init__(self, cache_dir: str | None = None):
        self._lock = Lock()
        self._store = {}
        self.cache_dir = cache_dir

    def workspace(self, cfg: RunConfig):
        b = cfg.basis
        key = (round(b.r_max, 9), b.order, b.n_breakpoints, b.knot_law.value,
               round(b.match_radius, 9), b.l_max, round(b.e_cut, 9))
        with self._lock:
            hit = self._store.get(key)
        if hit is not None:
            return hit
        basis = build_basis(b.r_max, b.order, b.n_breakpoints, b.knot_law,
                            b.match_radius)
        ops = assemble_operators(basis)
        ws = build_workspace(basis, ops, b.l_max, Z=1.0, e_cut=b.e_cut,
                             cache_dir=self.cache_dir)
        with self._lock:
            self._store.setdefault(key, ws)
            return self._store[key]


# ---------------------------------------------------------------------------
# Single job
# ---------------------------------------------------------------------------

@dataclass
class RunResult:
    name: str
    config_hash: str
    ionization: float | None = None
    final_norm: float | None = None
    absorbed_fraction: float | None = None
    gauge_boundary: dict | None = None
    m_population_final: float | None = None
    files: dict = field(default_factory=dict)       # path -> sha256
    mean_krylov_dim: float = 0.0
    max_krylov_dim: int = 0
    max_residual: float = 0.0
    n_steps: int = 0
    dt: float = 0.0
    wall_time_s: float = 0.0
    gaussian_edge_envelope: float | None = None
    error: str | None = None
    complete: bool = False

    def to_json(self) -> dict:
        out = dict(self.__dict__)
        return out


def _common_metadata(cfg: RunConfig) -> dict:
    return {
        "config_hash": cfg.config_hash(),
        "code_version": __version__,
        "timestamp_utc": time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime()),
    }


def run_single(name: str, cfg: RunConfig, out_dir: str, basis_cache: BasisCache,
               resume_path: str | None = None) -> RunResult:
    """Execute one build -> propagate -> observables pipeline."""
    t_wall = time.perf_counter()
    os.makedirs(out_dir, exist_ok=True)
    result = RunResult(name=name, config_hash=cfg.config_hash())
    echo_path = os.path.join(out_dir, "resolved.cfg")
    with open(echo_path, "w", encoding="utf-8") as fh:
        fh.write(cfg.echo())
    result.files[echo_path] = hashlib.sha256(cfg.echo().encode()).hexdigest()

    ws = basis_cache.workspace(cfg)
    channels = build_channels(cfg.basis.l_max, cfg.basis.m_max,
                              cfg.basis.symmetry)
    h = assemble(cfg.model, cfg.pulse, channels, ws)

    psi0 = h.ground_state()
    t_start = None
    if resume_path is not None:
        chk = read_checkpoint(resume_path)
        if chk.pulse_hash != cfg.pulse.content_hash():
            raise NumericalFailure("checkpoint pulse hash does not match config")
        if chk.config_hash != bytes.fromhex(cfg.config_hash()):
            raise NumericalFailure("checkpoint config hash does not match config")
        psi0 = WavefunctionState(h.layout.from_channel_major(chk.coefficients),
                                 chk.t, h.layout)
        t_start = chk.t

    probes = ["norm"]
    if "m_population" in cfg.outputs.observables:
        probes.append("m_nonzero")
        probes.append("ground")
    trace = propagate(h, psi0, cfg.prop, t_start=t_start,
                      probes=tuple(probes),
                      probe_stride=cfg.outputs.probe_stride)
    psi_end = trace.final_state

    gauge = gauge_boundary_check(cfg.pulse)
    result.gauge_boundary = {
        "a_end": gauge.a_end, "f_end": gauge.f_end,
        "u_is_identity": gauge.u_is_identity, "tolerance": gauge.tolerance,
    }
    if cfg.pulse.shape.value == "gaussian":
        from .pulse import envelope
        result.gaussian_edge_envelope = float(envelope(cfg.pulse,
                                                       cfg.pulse.t_end))
    result.final_norm = trace.norm_end
    result.absorbed_fraction = trace.absorbed_fraction
    result.mean_krylov_dim = trace.mean_krylov_dim
    result.max_krylov_dim = trace.max_krylov_dim
    result.max_residual = trace.max_residual
    result.n_steps = trace.n_steps
    result.dt = trace.dt

    meta = _common_metadata(cfg)
    proj = project(psi_end, h)
    result.ionization = ionization_probability(proj)

    if "ionization" in cfg.outputs.observables:
        path = os.path.join(out_dir, "ionization.csv")
        result.files[path] = write_table(
            "ionization", {"e0_au": [cfg.pulse.e0],
                           "omega_au": [cfg.pulse.omega],
                           "p_ion": [result.ionization]}, path, meta)
    grid = None
    if "energy_spectrum" in cfg.outputs.observables:
        grid = make_energy_grid(h.energies, e_max=cfg.outputs.e_max,
                                n_points=cfg.outputs.n_energy)
        spec = energy_spectrum(proj, grid)
        cols = {"energy_au": spec.energies, "dpde_total": spec.total}
        for l in range(spec.per_l.shape[0]):
            cols[f"dpde_l{l}"] = spec.per_l[l]
        path = os.path.join(out_dir, "energy_spectrum.csv")
        result.files[path] = write_table("energy_spectrum", cols, path, meta)
    if "angular_distribution" in cfg.outputs.observables:
        if grid is None:
            grid = make_energy_grid(h.energies, e_max=cfg.outputs.e_max,
                                    n_points=cfg.outputs.n_energy)
        ang = angular_distribution(proj, grid, n_theta=cfg.outputs.n_theta,
                                   n_phi=cfg.outputs.n_phi)
        TH, PH = np.meshgrid(ang.theta, ang.phi, indexing="ij")
        path = os.path.join(out_dir, "angular_distribution.csv")
        ang_meta = dict(meta)
        ang_meta["energy_integration"] = ("coherent over (l, m) at fixed "
                                          "energy, incoherent over the "
                                          "continuum")
        result.files[path] = write_table(
            "angular_distribution",
            {"theta_rad": TH.ravel(), "phi_rad": PH.ravel(),
             "dpdomega": ang.values.ravel()}, path, ang_meta)
    if "m_population" in cfg.outputs.observables:
        result.m_population_final = float(trace.probes["m_nonzero"][-1])
        path = os.path.join(out_dir, "m_population.csv")
        result.files[path] = write_table(
            "m_population",
            {"time_au": trace.probe_times,
             "p_m_nonzero": trace.probes["m_nonzero"],
             "p_ground": trace.probes["ground"],
             "norm": trace.probes["norm"]}, path, meta)

    if cfg.outputs.save_checkpoint:
        path = os.path.join(out_dir, "final_state.ndts")
        write_checkpoint(path, psi_end, cfg.pulse.content_hash(),
                         bytes.fromhex(cfg.config_hash()))
        with open(path, "rb") as fh:
            result.files[path] = hashlib.sha256(fh.read()).hexdigest()

    if cfg.outputs.plot:
        from . import report
        for path in list(result.files):
            if path.endswith(".csv"):
                png = report.render_table(path)
                if png is not None:
                    with open(png, "rb") as fh:
                        result.files[png] = hashlib.sha256(fh.read()).hexdigest()

    result.wall_time_s = time.perf_counter() - t_wall
    result.complete = True
    return result


# ---------------------------------------------------------------------------
# Sweeps
# ---------------------------------------------------------------------------

@dataclass
class SweepResult:
    results: list
    out_dir: str

    @property
    def all_complete(self) -> bool:
        return all(r.complete for r in self.results)


def run(config_text: str, out_dir: str, threads: int = 1,
        resume_path: str | None = None, plot: bool | None = None,
        cache_dir: str | None = None) -> SweepResult:
    """Parse, expand the sweep, and execute all jobs.

    A failing job records its error and leaves sibling jobs untouched.
    """
    raw = parse_text(config_text)
    base_sweep = resolve(raw).sweep
    jobs = expand_sweep(raw)
    if cache_dir is None:
        cache_dir = os.environ.get("NDT_CACHE_DIR") or None
    basis_cache = BasisCache(cache_dir=cache_dir)
    multi = len(jobs) > 1
    os.makedirs(out_dir, exist_ok=True)

    def _dispatch(item):
        name, cfg = item
        if plot is not None:
            from dataclasses import replace as _replace
            cfg = _replace(cfg, outputs=_replace(cfg.outputs, plot=plot))
        job_dir = os.path.join(out_dir, name) if multi else out_dir
        try:
            return run_single(name, cfg, job_dir, basis_cache,
                              resume_path if not multi else None)
        except (KrylovConvergenceError, ChannelSolveError,
                NumericalFailure) as exc:
            res = RunResult(name=name, config_hash=cfg.config_hash())
            res.error = str(exc)
            return res
        except Exception as exc:
            res = RunResult(name=name, config_hash=cfg.config_hash())
            res.error = f"{exc}\n{traceback.format_exc()}"
            return res

    if threads > 1 and multi:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(_dispatch, jobs))
    else:
        results = [_dispatch(j) for j in jobs]

    # aggregate sweep tables: one ionization-vs-parameter table per model
    sweep = base_sweep
    if multi and sweep is not None and sweep.parameter in ("e0", "omega",
                                                           "intensity"):
        by_model = {}
        for (name, cfg), res in zip(jobs, results):
            if not res.complete:
                continue
            by_model.setdefault(cfg.model.value, []).append(
                (getattr(cfg.pulse, "e0" if sweep.parameter != "omega"
                         else "omega"), res.ionization))
        for model_name, pairs in by_model.items():
            pairs.sort()
            xcol = ("e0_au" if sweep.parameter in ("e0", "intensity")
                    else "omega_au")
            path = os.path.join(out_dir, f"ionization_scan_{model_name}.csv")
            checksum = write_table(
                "ionization_scan",
                {xcol: [p[0] for p in pairs], "p_ion": [p[1] for p in pairs]},
                path, {"model": model_name, "code_version": __version__})
            for res in results:
                if res.complete:
                    res.files[path] = checksum

    manifest = {
        "out_dir": out_dir,
        "jobs": [r.to_json() for r in results],
    }
    with open(os.path.join(out_dir, "result.json"), "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
    return SweepResult(results=results, out_dir=out_dir)


def postprocess_spectrum(checkpoint_path: str, config_text: str,
                         out_dir: str, cache_dir: str | None = None) -> RunResult:
    """Recompute observables from a stored state without propagation."""
    cfg = resolve(parse_text(config_text))
    chk = read_checkpoint(checkpoint_path)
    if chk.pulse_hash != cfg.pulse.content_hash():
        raise NumericalFailure("checkpoint pulse hash does not match config")
    basis_cache = BasisCache(cache_dir=cache_dir
                             or os.environ.get("NDT_CACHE_DIR") or None)
    ws = basis_cache.workspace(cfg)
    channels = build_channels(cfg.basis.l_max, cfg.basis.m_max,
                              cfg.basis.symmetry)
    h = assemble(cfg.model, cfg.pulse, channels, ws)
    psi = WavefunctionState(h.layout.from_channel_major(chk.coefficients),
                            chk.t, h.layout)
    os.makedirs(out_dir, exist_ok=True)
    result = RunResult(name="spectrum", config_hash=cfg.config_hash())
    proj = project(psi, h)
    result.ionization = ionization_probability(proj)
    result.final_norm = math.sqrt(psi.norm_sq())
    meta = _common_metadata(cfg)
    grid = make_energy_grid(h.energies, e_max=cfg.outputs.e_max,
                            n_points=cfg.outputs.n_energy)
    spec = energy_spectrum(proj, grid)
    cols = {"energy_au": spec.energies, "dpde_total": spec.total}
    for l in range(spec.per_l.shape[0]):
        cols[f"dpde_l{l}"] = spec.per_l[l]
    path = os.path.join(out_dir, "energy_spectrum.csv")
    result.files[path] = write_table("energy_spectrum", cols, path, meta)
    with open(os.path.join(out_dir, "result.json"), "w", encoding="utf-8") as fh:
        json.dump({"jobs": [result.to_json()]}, fh, indent=2, sort_keys=True)
    result.complete = True
    return result
