"""Laser pulse model: envelope shapes, vector potential and coupling scalars.

All quantities are in Hartree atomic units. The vector potential is separated
into a carrier and an envelope,

    A(t) = (E0 / omega) * f(t) * sin(omega * t + cep),

with the envelope ``f`` one of three families: a sine-squared arch supported
on [0, T], a Gaussian of FWHM T centered at t = 0, or a smoothed flat-top
(Fermi-Dirac window) of duration parameter T and steepness sigma, symmetric
about t = 0.
"""

from __future__ import annotations

import enum
import hashlib
import math
import struct
from dataclasses import dataclass, field

import numpy as np
from scipy.special import expit


class EnvelopeShape(enum.Enum):
    SIN_SQUARED = "sin2"
    GAUSSIAN = "gaussian"
    FERMI_DIRAC = "fermi_dirac"


@dataclass(frozen=True)
class Pulse:
    """Immutable description of one linearly polarized laser pulse.

    Parameters
    ----------
    shape : EnvelopeShape
        Envelope family.
    e0 : float
        Peak electric field strength (a.u.).
    omega : float
        Central angular frequency (a.u., > 0).
    cep : float
        Carrier-envelope phase (radians).
    duration : float
        Envelope duration parameter T: total length for SIN_SQUARED,
        FWHM for GAUSSIAN, plateau duration for FERMI_DIRAC.
    sigma : float
        Turn-on/off steepness (1/a.u.), FERMI_DIRAC only.
    t_start, t_end : float
        Simulated time window. Defaults: [0, T] for SIN_SQUARED,
        [-3T, 3T] for GAUSSIAN, [-T/2 - 10/sigma, T/2 + 10/sigma]
        for FERMI_DIRAC.
    n_cycles : float, optional
        Convenience input; when given, duration = n_cycles * 2*pi/omega.
    """

    shape: EnvelopeShape
    e0: float
    omega: float
    duration: float = 0.0
    cep: float = 0.0
    sigma: float = 0.0
    n_cycles: float | None = None
    t_start: float = field(default=math.nan)
    t_end: float = field(default=math.nan)

    def __post_init__(self):
        if self.omega <= 0:
            raise ValueError("omega must be positive")
        if self.e0 < 0:
            raise ValueError("e0 must be nonnegative")
        if self.n_cycles is not None:
            object.__setattr__(self, "duration",
                               self.n_cycles * 2.0 * math.pi / self.omega)
        if self.duration <= 0:
            raise ValueError("duration must be positive (set duration or n_cycles)")
        if self.shape is EnvelopeShape.FERMI_DIRAC and self.sigma <= 0:
            raise ValueError("fermi_dirac envelope requires sigma > 0")
        T = self.duration
        if math.isnan(self.t_start) or math.isnan(self.t_end):
            if self.shape is EnvelopeShape.SIN_SQUARED:
                lo, hi = 0.0, T
            elif self.shape is EnvelopeShape.GAUSSIAN:
                lo, hi = -3.0 * T, 3.0 * T
            else:
                pad = 10.0 / self.sigma
                lo, hi = -T / 2.0 - pad, T / 2.0 + pad
            if math.isnan(self.t_start):
                object.__setattr__(self, "t_start", lo)
            if math.isnan(self.t_end):
                object.__setattr__(self, "t_end", hi)
        if not self.t_start < self.t_end:
            raise ValueError("t_start must be < t_end")

    @property
    def cycle_time(self) -> float:
        return 2.0 * math.pi / self.omega

    @property
    def a0(self) -> float:
        """Peak vector-potential amplitude E0/omega."""
        return self.e0 / self.omega

    def content_hash(self) -> bytes:
        """SHA-256 over the defining fields, for checkpoint validation."""
        payload = struct.pack(
            "<16sddddddd", self.shape.value.encode().ljust(16, b"\0"),
            self.e0, self.omega, self.duration, self.cep, self.sigma,
            self.t_start, self.t_end)
        return hashlib.sha256(payload).digest()


def envelope(pulse: Pulse, t):
    """Envelope f(t), dimensionless in [0, 1]."""
    t_arr = np.asarray(t, dtype=float)
    T = pulse.duration
    if pulse.shape is EnvelopeShape.SIN_SQUARED:
        # strict interior: the endpoints are exact zeros of sin^2(pi t / T)
        inside = (t_arr > 0.0) & (t_arr < T)
        f = np.where(inside, np.sin(np.pi * np.clip(t_arr, 0.0, T) / T) ** 2, 0.0)
    elif pulse.shape is EnvelopeShape.GAUSSIAN:
        f = np.exp(-4.0 * math.log(2.0) * (t_arr / T) ** 2)
    else:
        f = np.exp(_log_fermi_dirac(t_arr, T, pulse.sigma))
    return f if f.ndim else float(f)


def envelope_deriv(pulse: Pulse, t):
    """Analytic derivative f'(t) of the envelope (1/a.u. of time)."""
    t_arr = np.asarray(t, dtype=float)
    T = pulse.duration
    if pulse.shape is EnvelopeShape.SIN_SQUARED:
        inside = (t_arr > 0.0) & (t_arr < T)
        df = np.where(inside, (np.pi / T) * np.sin(2.0 * np.pi * np.clip(t_arr, 0.0, T) / T), 0.0)
    elif pulse.shape is EnvelopeShape.GAUSSIAN:
        f = np.exp(-4.0 * math.log(2.0) * (t_arr / T) ** 2)
        df = f * (-8.0 * math.log(2.0) * t_arr / T ** 2)
    else:
        s = pulse.sigma
        f = np.exp(_log_fermi_dirac(t_arr, T, s))
        # d/dt log f = sigma * [logistic(sigma(-t - T/2)) - logistic(sigma(t - T/2))]
        df = f * s * (expit(s * (-t_arr - T / 2.0)) - expit(s * (t_arr - T / 2.0)))
    return df if df.ndim else float(df)


def _log_fermi_dirac(t, T, sigma):
    # log of (e^{-sT/2}+1)^2 / [(e^{s(t-T/2)}+1)(e^{s(-t-T/2)}+1)], overflow-safe
    log_num = 2.0 * np.logaddexp(0.0, -sigma * T / 2.0)
    log_den = (np.logaddexp(0.0, sigma * (t - T / 2.0))
               + np.logaddexp(0.0, sigma * (-t - T / 2.0)))
    return log_num - log_den


def vector_potential(pulse: Pulse, t):
    """A(t) = (E0/omega) f(t) sin(omega t + cep)."""
    t_arr = np.asarray(t, dtype=float)
    a = pulse.a0 * envelope(pulse, t_arr) * np.sin(pulse.omega * t_arr + pulse.cep)
    return a if np.ndim(t) else float(a)


@dataclass(frozen=True)
class CouplingScalars:
    """Time-dependent scalars multiplying the interaction operators.

    a       : A(t)
    a_aprime: A(t) A'(t)
    f2      : f(t)^2
    f_fprime: f(t) f'(t)
    f2_cos2 : f(t)^2 cos(2 omega t + 2 cep)
    """

    a: float
    a_aprime: float
    f2: float
    f_fprime: float
    f2_cos2: float


def coupling_scalars(pulse: Pulse, t: float) -> CouplingScalars:
    """Evaluate all five coupling scalars from one envelope/carrier evaluation."""
    f = envelope(pulse, t)
    df = envelope_deriv(pulse, t)
    w, phi = pulse.omega, pulse.cep
    s, c = np.sin(w * t + phi), np.cos(w * t + phi)
    a = pulse.a0 * f * s
    aprime = pulse.a0 * (df * s + w * f * c)
    return CouplingScalars(
        a=float(a),
        a_aprime=float(a * aprime),
        f2=float(f * f),
        f_fprime=float(f * df),
        f2_cos2=float(f * f * np.cos(2.0 * (w * t + phi))),
    )
