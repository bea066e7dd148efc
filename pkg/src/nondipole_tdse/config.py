"""Declarative run configuration: parsing, validation, defaulting and echo.

Grammar (UTF-8 text):

    # comment                 ; comment
    [section]                 sections: pulse, basis, run, propagator,
    key = value                         outputs, sweep
    values = 1.0, 2.0, 3.0    arrays: comma separated, optional [ ] brackets

Keys given before any section header are routed to their section by name
(every key name is unique across sections).  ``parse_config`` resolves all
defaults; the resolved configuration can be echoed back to text that parses
to an identical configuration, and its SHA-256 is the run's config hash.
"""

from __future__ import annotations

import hashlib
import math
import re
from dataclasses import dataclass, field, replace

from .angular import Symmetry
from .constants import C_AU, field_strength_from_intensity
from .hamiltonian import InteractionModel
from .propagator import MaskConfig, PropagatorConfig
from .pulse import EnvelopeShape, Pulse
from .radial import KnotLaw, default_r_max


class ConfigError(ValueError):
    def __init__(self, message, line=None, col=None):
        loc = f" (line {line}, col {col})" if line is not None else ""
        super().__init__(message + loc)
        self.line = line
        self.col = col


_SHAPES = {"sin2": EnvelopeShape.SIN_SQUARED,
           "gaussian": EnvelopeShape.GAUSSIAN,
           "fermi_dirac": EnvelopeShape.FERMI_DIRAC}
_MODELS = {m.value: m for m in InteractionModel}
_KNOT_LAWS = {k.value: k for k in KnotLaw}
_SYMMETRIES = {s.value: s for s in Symmetry}

OBSERVABLE_KINDS = ("ionization", "energy_spectrum", "angular_distribution",
                    "m_population")

# (section, key) -> kind; kinds: float, int, bool, str, floats, strs
_SCHEMA = {
    ("pulse", "shape"): "str",
    ("pulse", "e0"): "float",
    ("pulse", "intensity"): "float",
    ("pulse", "quiver_fraction"): "float",
    ("pulse", "omega"): "float",
    ("pulse", "cep"): "float",
    ("pulse", "n_cycles"): "float",
    ("pulse", "duration"): "float",
    ("pulse", "sigma"): "float",
    ("pulse", "t_start"): "float",
    ("pulse", "t_end"): "float",
    ("basis", "r_max"): "str",          # number or "auto"
    ("basis", "order"): "int",
    ("basis", "n_breakpoints"): "int",
    ("basis", "knot_law"): "str",
    ("basis", "match_radius"): "float",
    ("basis", "l_max"): "int",
    ("basis", "m_max"): "int",
    ("basis", "e_cut"): "float",
    ("basis", "symmetry"): "str",
    ("run", "model"): "str",
    ("propagator", "dt"): "float",
    ("propagator", "steps_per_cycle"): "int",
    ("propagator", "krylov_dim_max"): "int",
    ("propagator", "krylov_tol"): "float",
    ("propagator", "renormalize"): "bool",
    ("propagator", "mask_r_on"): "float",
    ("propagator", "mask_exponent"): "float",
    ("outputs", "observables"): "strs",
    ("outputs", "probe_stride"): "int",
    ("outputs", "out_dir"): "str",
    ("outputs", "plot"): "bool",
    ("outputs", "e_max"): "float",
    ("outputs", "n_energy"): "int",
    ("outputs", "n_theta"): "int",
    ("outputs", "n_phi"): "int",
    ("outputs", "save_checkpoint"): "bool",
    ("outputs", "checkpoint_stride"): "int",
    ("sweep", "parameter"): "str",
    ("sweep", "values"): "floats",
    ("sweep", "models"): "strs",
}
_KEY_TO_SECTION = {}
for (_sec, _key) in _SCHEMA:
    _KEY_TO_SECTION.setdefault(_key, _sec)

SWEEPABLE = {"e0": ("pulse", "e0"), "intensity": ("pulse", "intensity"),
             "omega": ("pulse", "omega"), "n_cycles": ("pulse", "n_cycles"),
             "duration": ("pulse", "duration"), "sigma": ("pulse", "sigma"),
             "l_max": ("basis", "l_max")}


@dataclass(frozen=True)
class BasisSettings:
    r_max: float
    order: int
    n_breakpoints: int
    knot_law: KnotLaw
    match_radius: float
    l_max: int
    m_max: int
    e_cut: float
    symmetry: Symmetry


@dataclass(frozen=True)
class OutputSettings:
    observables: tuple
    probe_stride: int
    out_dir: str
    plot: bool
    e_max: float | None
    n_energy: int
    n_theta: int | None
    n_phi: int | None
    save_checkpoint: bool
    checkpoint_stride: int


@dataclass(frozen=True)
class SweepSettings:
    parameter: str | None
    values: tuple
    models: tuple


@dataclass(frozen=True)
class RunConfig:
    pulse: Pulse
    model: InteractionModel
    basis: BasisSettings
    prop: PropagatorConfig
    outputs: OutputSettings
    sweep: SweepSettings | None = None

    def echo(self) -> str:
        return echo_config(self)

    def config_hash(self) -> str:
        return hashlib.sha256(self.echo().encode()).hexdigest()


# ---------------------------------------------------------------------------
# Raw parsing
# ---------------------------------------------------------------------------

_SECTION_RE = re.compile(r"^\s*\[([A-Za-z_][A-Za-z0-9_]*)\]\s*$")
_KEY_RE = re.compile(r"^(\s*)([A-Za-z_][A-Za-z0-9_]*)\s*=\s*(.*?)\s*$")


def parse_text(text: str) -> dict:
    """Parse to {(section, key): (raw_value, line, col)}; grammar errors carry
    line/column positions."""
    out: dict = {}
    section = None
    for ln, line in enumerate(text.splitlines(), start=1):
        stripped = line.split("#", 1)[0].split(";", 1)[0].rstrip()
        if not stripped.strip():
            continue
        msec = _SECTION_RE.match(stripped)
        if msec:
            section = msec.group(1)
            if section not in ("pulse", "basis", "run", "propagator",
                               "outputs", "sweep"):
                raise ConfigError(f"unknown section [{section}]", ln, 1)
            continue
        mkey = _KEY_RE.match(stripped)
        if not mkey:
            raise ConfigError("expected 'key = value' or '[section]'", ln, 1)
        indent, key, value = mkey.groups()
        col = len(indent) + 1
        sec = section
        if sec is None:
            sec = _KEY_TO_SECTION.get(key)
            if sec is None:
                raise ConfigError(f"unknown key '{key}'", ln, col)
        if (sec, key) not in _SCHEMA:
            raise ConfigError(f"unknown key '{key}' in section [{sec}]", ln, col)
        if (sec, key) in out:
            raise ConfigError(f"duplicate key '{key}'", ln, col)
        out[(sec, key)] = (value, ln, col)
    return out


def _convert(kind, raw, ln, col):
    def fail(msg):
        raise ConfigError(msg, ln, col)

    raw = raw.strip()
    if kind in ("floats", "strs"):
        body = raw[1:-1] if raw.startswith("[") and raw.endswith("]") else raw
        items = [s.strip() for s in body.split(",") if s.strip()]
        if not items:
            fail("empty list")
        if kind == "strs":
            return tuple(items)
        try:
            return tuple(float(s) for s in items)
        except ValueError:
            fail(f"expected a list of numbers, got '{raw}'")
    if kind == "float":
        try:
            return float(raw)
        except ValueError:
            fail(f"expected a number, got '{raw}'")
    if kind == "int":
        try:
            return int(raw)
        except ValueError:
            fail(f"expected an integer, got '{raw}'")
    if kind == "bool":
        low = raw.lower()
        if low in ("true", "yes", "1", "on"):
            return True
        if low in ("false", "no", "0", "off"):
            return False
        fail(f"expected a boolean, got '{raw}'")
    return raw


class _Resolver:
    def __init__(self, raw: dict, overrides: dict | None = None):
        self.raw = dict(raw)
        if overrides:
            for (sec, key), value in overrides.items():
                self.raw[(sec, key)] = (str(value), None, None)

    def get(self, sec, key, default=None, required=False):
        kind = _SCHEMA[(sec, key)]
        if (sec, key) in self.raw:
            raw, ln, col = self.raw[(sec, key)]
            return _convert(kind, raw, ln, col)
        if required:
            raise ConfigError(f"missing required key '{key}' in section [{sec}]")
        return default

    def has(self, sec, key):
        return (sec, key) in self.raw

    def pos(self, sec, key):
        if (sec, key) in self.raw:
            _, ln, col = self.raw[(sec, key)]
            return ln, col
        return None, None

    def enum(self, sec, key, mapping, default=None, required=False):
        val = self.get(sec, key, required=required)
        if val is None:
            return default
        if val not in mapping:
            ln, col = self.pos(sec, key)
            raise ConfigError(
                f"'{key}' must be one of {sorted(mapping)}, got '{val}'", ln, col)
        return mapping[val]


def resolve(raw: dict, overrides: dict | None = None) -> RunConfig:
    """Validate and fill defaults, producing a fully resolved RunConfig."""
    r = _Resolver(raw, overrides)

    model = r.enum("run", "model", _MODELS, required=True)
    shape = r.enum("pulse", "shape", _SHAPES, required=True)

    strength_keys = [k for k in ("e0", "intensity", "quiver_fraction")
                     if r.has("pulse", k)]
    if len(strength_keys) != 1:
        ln, col = r.pos("pulse", strength_keys[1]) if len(strength_keys) > 1 \
            else (None, None)
        raise ConfigError("exactly one of e0 / intensity / quiver_fraction "
                          "must be given", ln, col)
    omega = r.get("pulse", "omega", required=True)
    if omega <= 0:
        ln, col = r.pos("pulse", "omega")
        raise ConfigError("omega must be positive", ln, col)
    if strength_keys[0] == "e0":
        e0 = r.get("pulse", "e0")
    elif strength_keys[0] == "intensity":
        e0 = field_strength_from_intensity(r.get("pulse", "intensity"))
    else:
        e0 = r.get("pulse", "quiver_fraction") * C_AU * omega
    if e0 < 0:
        ln, col = r.pos("pulse", strength_keys[0])
        raise ConfigError("field strength must be nonnegative", ln, col)

    dur_keys = [k for k in ("n_cycles", "duration") if r.has("pulse", k)]
    if len(dur_keys) != 1:
        raise ConfigError("exactly one of n_cycles / duration must be given")
    sigma = r.get("pulse", "sigma", default=0.0)
    if shape is EnvelopeShape.FERMI_DIRAC and sigma <= 0:
        raise ConfigError("fermi_dirac pulses require sigma > 0")
    try:
        pulse = Pulse(shape=shape, e0=e0, omega=omega,
                      cep=r.get("pulse", "cep", default=0.0),
                      n_cycles=r.get("pulse", "n_cycles"),
                      duration=r.get("pulse", "duration", default=0.0),
                      sigma=sigma,
                      t_start=r.get("pulse", "t_start", default=math.nan),
                      t_end=r.get("pulse", "t_end", default=math.nan))
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc

    r_max_raw = r.get("basis", "r_max", default="auto")
    if isinstance(r_max_raw, str) and r_max_raw.strip().lower() == "auto":
        r_max = default_r_max(pulse.e0, pulse.omega)
    else:
        try:
            r_max = float(r_max_raw)
        except ValueError:
            ln, col = r.pos("basis", "r_max")
            raise ConfigError("r_max must be a number or 'auto'", ln, col) from None
    l_max = r.get("basis", "l_max", required=True)
    if l_max < 0:
        ln, col = r.pos("basis", "l_max")
        raise ConfigError("l_max must be nonnegative", ln, col)
    m_default = 0 if model is InteractionModel.DIPOLE else l_max
    m_max = r.get("basis", "m_max", default=m_default)
    if not 0 <= m_max <= l_max:
        ln, col = r.pos("basis", "m_max")
        raise ConfigError("require 0 <= m_max <= l_max", ln, col)
    if model is not InteractionModel.DIPOLE and m_max == 0:
        ln, col = r.pos("basis", "m_max")
        raise ConfigError(f"model '{model.value}' requires m_max >= 1", ln, col)
    n_brk_default = max(151, int(round(2.0 * r_max)) + 1)
    basis = BasisSettings(
        r_max=r_max,
        order=r.get("basis", "order", default=7),
        n_breakpoints=r.get("basis", "n_breakpoints", default=n_brk_default),
        knot_law=r.enum("basis", "knot_law", _KNOT_LAWS,
                        default=KnotLaw.SQRT_RAMP),
        match_radius=r.get("basis", "match_radius", default=20.0),
        l_max=l_max,
        m_max=m_max,
        e_cut=r.get("basis", "e_cut", default=30.0),
        symmetry=r.enum("basis", "symmetry", _SYMMETRIES, default=Symmetry.FULL),
    )
    if basis.order < 4:
        ln, col = r.pos("basis", "order")
        raise ConfigError("order must be >= 4", ln, col)
    if basis.n_breakpoints < basis.order + 2:
        ln, col = r.pos("basis", "n_breakpoints")
        raise ConfigError("need at least order + 2 breakpoints", ln, col)

    if r.has("propagator", "dt") and r.has("propagator", "steps_per_cycle"):
        ln, col = r.pos("propagator", "dt")
        raise ConfigError("give either dt or steps_per_cycle, not both", ln, col)
    mask = None
    if r.has("propagator", "mask_r_on"):
        mask = MaskConfig(r_on=r.get("propagator", "mask_r_on"),
                          exponent=r.get("propagator", "mask_exponent",
                                         default=4.0))
    try:
        prop = PropagatorConfig(
            dt=r.get("propagator", "dt"),
            steps_per_cycle=r.get("propagator", "steps_per_cycle",
                                  default=None if r.has("propagator", "dt")
                                  else 200),
            krylov_dim_max=r.get("propagator", "krylov_dim_max", default=40),
            krylov_tol=r.get("propagator", "krylov_tol", default=1e-12),
            renormalize=r.get("propagator", "renormalize", default=False),
            mask=mask)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc

    observables = r.get("outputs", "observables", default=("ionization",))
    for obs in observables:
        if obs not in OBSERVABLE_KINDS:
            ln, col = r.pos("outputs", "observables")
            raise ConfigError(f"unknown observable '{obs}' "
                              f"(choose from {OBSERVABLE_KINDS})", ln, col)
    outputs = OutputSettings(
        observables=tuple(observables),
        probe_stride=r.get("outputs", "probe_stride", default=10),
        out_dir=r.get("outputs", "out_dir", default="."),
        plot=r.get("outputs", "plot", default=False),
        e_max=r.get("outputs", "e_max", default=None),
        n_energy=r.get("outputs", "n_energy", default=2000),
        n_theta=r.get("outputs", "n_theta", default=None),
        n_phi=r.get("outputs", "n_phi", default=None),
        save_checkpoint=r.get("outputs", "save_checkpoint", default=False),
        checkpoint_stride=r.get("outputs", "checkpoint_stride", default=0),
    )

    sweep = None
    if r.has("sweep", "parameter") or r.has("sweep", "values") \
            or r.has("sweep", "models"):
        parameter = r.get("sweep", "parameter", default=None)
        values = r.get("sweep", "values", default=())
        models = r.get("sweep", "models", default=())
        if parameter is not None:
            if parameter not in SWEEPABLE:
                ln, col = r.pos("sweep", "parameter")
                raise ConfigError(f"cannot sweep '{parameter}' "
                                  f"(choose from {sorted(SWEEPABLE)})", ln, col)
            if not values:
                raise ConfigError("sweep values missing")
        for name in models:
            if name not in _MODELS:
                ln, col = r.pos("sweep", "models")
                raise ConfigError(f"unknown model '{name}' in sweep", ln, col)
        sweep = SweepSettings(parameter=parameter, values=tuple(values),
                              models=tuple(models))

    return RunConfig(pulse=pulse, model=model, basis=basis, prop=prop,
                     outputs=outputs, sweep=sweep)


def parse_config(text: str) -> RunConfig:
    return resolve(parse_text(text))


def expand_sweep(raw: dict) -> list:
    """Expand sweep axes into (job_name, RunConfig) pairs.

    The cartesian product of the swept parameter values and the model list is
    taken; each job is resolved independently so per-job automatic choices
    (e.g. r_max = auto) see that job's parameters.
    """
    base = resolve(raw)
    sweep = base.sweep
    if sweep is None or (sweep.parameter is None and not sweep.models):
        return [("run", base)]
    values = list(sweep.values) if sweep.parameter else [None]
    models = list(sweep.models) if sweep.models else [None]
    jobs = []
    for model_name in models:
        for value in values:
            overrides = {}
            name_bits = []
            if model_name is not None:
                overrides[("run", "model")] = model_name
                name_bits.append(model_name)
            cfg_raw = dict(raw)
            if value is not None:
                overrides[SWEEPABLE[sweep.parameter]] = repr(value)
                name_bits.append(f"{sweep.parameter}_{value:g}")
                if sweep.parameter in ("e0", "intensity"):
                    # the swept strength key replaces whichever one was given
                    for k in ("e0", "intensity", "quiver_fraction"):
                        if k != sweep.parameter:
                            cfg_raw.pop(("pulse", k), None)
            for k in (("sweep", "parameter"), ("sweep", "values"),
                      ("sweep", "models")):
                cfg_raw.pop(k, None)
            jobs.append(("_".join(name_bits) or "run",
                         resolve(cfg_raw, overrides)))
    return jobs


# ---------------------------------------------------------------------------
# Echo
# ---------------------------------------------------------------------------

def _fmt(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    return str(value)


def echo_config(cfg: RunConfig) -> str:
    """Render the resolved configuration; parsing the result reproduces it."""
    p, b, pr, o = cfg.pulse, cfg.basis, cfg.prop, cfg.outputs
    lines = [
        "# resolved configuration (all defaults explicit)",
        "[run]",
        f"model = {cfg.model.value}",
        "",
        "[pulse]",
        f"shape = {p.shape.value}",
        f"e0 = {_fmt(p.e0)}",
        f"omega = {_fmt(p.omega)}",
        f"cep = {_fmt(p.cep)}",
        f"duration = {_fmt(p.duration)}",
        f"sigma = {_fmt(p.sigma)}",
        f"t_start = {_fmt(p.t_start)}",
        f"t_end = {_fmt(p.t_end)}",
        "",
        "[basis]",
        f"r_max = {_fmt(b.r_max)}",
        f"order = {b.order}",
        f"n_breakpoints = {b.n_breakpoints}",
        f"knot_law = {b.knot_law.value}",
        f"match_radius = {_fmt(b.match_radius)}",
        f"l_max = {b.l_max}",
        f"m_max = {b.m_max}",
        f"e_cut = {_fmt(b.e_cut)}",
        f"symmetry = {b.symmetry.value}",
        "",
        "[propagator]",
        f"dt = {_fmt(pr.resolve_dt(p.cycle_time))}",
        f"krylov_dim_max = {pr.krylov_dim_max}",
        f"krylov_tol = {_fmt(pr.krylov_tol)}",
        f"renormalize = {_fmt(pr.renormalize)}",
    ]
    if pr.mask is not None:
        lines += [f"mask_r_on = {_fmt(pr.mask.r_on)}",
                  f"mask_exponent = {_fmt(pr.mask.exponent)}"]
    lines += [
        "",
        "[outputs]",
        f"observables = {', '.join(o.observables)}",
        f"probe_stride = {o.probe_stride}",
        f"out_dir = {o.out_dir}",
        f"plot = {_fmt(o.plot)}",
        f"n_energy = {o.n_energy}",
        f"save_checkpoint = {_fmt(o.save_checkpoint)}",
        f"checkpoint_stride = {o.checkpoint_stride}",
    ]
    if o.e_max is not None:
        lines.append(f"e_max = {_fmt(o.e_max)}")
    if o.n_theta is not None:
        lines.append(f"n_theta = {o.n_theta}")
    if o.n_phi is not None:
        lines.append(f"n_phi = {o.n_phi}")
    if cfg.sweep is not None and (cfg.sweep.parameter or cfg.sweep.models):
        lines += ["", "[sweep]"]
        if cfg.sweep.parameter:
            lines.append(f"parameter = {cfg.sweep.parameter}")
            lines.append("values = " + ", ".join(repr(v) for v in cfg.sweep.values))
        if cfg.sweep.models:
            lines.append("models = " + ", ".join(cfg.sweep.models))
    return "\n".join(lines) + "\n"
