"""Physical constants in Hartree atomic units (hbar = m_e = e = 1)."""

# Speed of light in atomic units (inverse fine-structure constant).
C_AU = 137.035999084

# Peak intensity (W/cm^2) of a field with E0 = 1 a.u.:
# I = eps0*c*E0^2/2 evaluated with CODATA values.
INTENSITY_AU_WCM2 = 3.50944758e16


def field_strength_from_intensity(intensity_wcm2: float) -> float:
    """Convert a peak intensity in W/cm^2 to a field strength E0 in a.u."""
    if intensity_wcm2 < 0:
        raise ValueError("intensity must be nonnegative")
    return (intensity_wcm2 / INTENSITY_AU_WCM2) ** 0.5
