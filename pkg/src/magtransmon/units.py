"""Physical constants and the single unit-conversion layer.

Every public function in the package works in a fixed set of units:

* energies and frequencies as ordinary frequencies E/h in GHz
* magnetic fields in tesla (the vortex slope ``p`` is the one exception, in
  1/us per mT, because that is how it is always quoted)
* times in microseconds, rates in 1/us
* temperatures in kelvin, lengths in meters

Angular factors live here and nowhere else.  A rate written as a frequency
``f`` in GHz corresponds to ``2*pi*f`` radians per nanosecond; the helpers
below make every such step explicit.
"""

from __future__ import annotations

import numpy as np

H_PLANCK = 6.62607015e-34  # J s
HBAR = H_PLANCK / (2.0 * np.pi)
K_B = 1.380649e-23  # J / K
E_CHARGE = 1.602176634e-19  # C
PHI0 = 2.067833848e-15  # Wb, h / 2e

TWO_PI = 2.0 * np.pi
GHZ = 1e9
BCS_GAP_RATIO = 1.764


def kelvin_to_ghz(temperature):
    """Thermal energy k_B T expressed as a frequency in GHz."""
    return K_B * np.asarray(temperature, dtype=float) / H_PLANCK / GHZ


def ghz_to_kelvin(freq):
    return np.asarray(freq, dtype=float) * GHZ * H_PLANCK / K_B


def bcs_gap_ghz(t_crit):
    """Zero-temperature BCS gap 1.764 k_B T_c as a frequency in GHz."""
    return BCS_GAP_RATIO * kelvin_to_ghz(t_crit)


def bose_einstein(freq_ghz, temperature):
    """Thermal occupation of a mode at ``freq_ghz``.  Exactly zero at T = 0."""
    with np.errstate(divide="ignore", over="ignore"):
        n = 1.0 / np.expm1(np.asarray(freq_ghz, dtype=float) / kelvin_to_ghz(temperature))
    return _scalar(n)


def angular(freq_ghz):
    """Ordinary frequency (GHz) to angular rate (rad/ns)."""
    return TWO_PI * np.asarray(freq_ghz, dtype=float)


def per_ns_to_per_us(rate):
    return 1e3 * np.asarray(rate, dtype=float)


def ns_to_us(t):
    return 1e-3 * np.asarray(t, dtype=float)


def tesla_to_mt(b):
    return 1e3 * np.asarray(b, dtype=float)


def mt_to_tesla(b):
    return 1e-3 * np.asarray(b, dtype=float)


def _scalar(x):
    x = np.asarray(x)
    return float(x) if x.ndim == 0 else x
