"""Magnetic-field dependence of junction and film parameters.

Fields in tesla, energies in GHz, lengths in meters.  Negative fields are
accepted everywhere; the models depend on |B| (or on the SQUID flux phase).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple, Optional

import numpy as np
from scipy.optimize import brentq

from .units import PHI0, bcs_gap_ghz


class GapClosedError(ValueError):
    """Field at or beyond the critical field: the superconducting gap is closed."""


@dataclass(frozen=True)
class JunctionFieldParams:
    ej0: float
    b_crit_par: float
    b_phi0: float
    finger_width_l2: Optional[float] = None

    def __post_init__(self):
        if not (self.ej0 > 0 and self.b_crit_par > 0 and self.b_phi0 > 0):
            raise ValueError("ej0, b_crit_par and b_phi0 must all be positive")
        if self.finger_width_l2 is not None:
            h = self.barrier_height
            if not 1e-9 < h < 100e-9:
                raise ValueError(f"implied barrier height {h * 1e9:.3g} nm outside (1, 100) nm")

    @property
    def barrier_height(self) -> Optional[float]:
        if self.finger_width_l2 is None:
            return None
        return barrier_height(self.b_phi0, self.finger_width_l2)


@dataclass(frozen=True)
class SquidParams:
    ej_sum: float
    asymmetry_alpha: float
    b_phi0_squid: float
    b_perp_offset: float = 0.0

    def __post_init__(self):
        if self.ej_sum <= 0 or self.b_phi0_squid <= 0:
            raise ValueError("ej_sum and b_phi0_squid must be positive")
        if not 0.0 <= self.asymmetry_alpha <= 1.0:
            raise ValueError(f"asymmetry_alpha must lie in [0, 1], got {self.asymmetry_alpha}")

    @classmethod
    def from_junctions(cls, ej1, ej2, b_phi0_squid, b_perp_offset=0.0):
        total = ej1 + ej2
        return cls(total, abs(ej1 - ej2) / total, b_phi0_squid, b_perp_offset)

    @property
    def ej_large(self) -> float:
        return 0.5 * self.ej_sum * (1.0 + self.asymmetry_alpha)

    @property
    def ej_small(self) -> float:
        return 0.5 * self.ej_sum * (1.0 - self.asymmetry_alpha)


@dataclass(frozen=True)
class FilmParams:
    thickness_d: float
    bc_thermo: float
    lambda_london: float
    xi0: float
    mean_free_path: float
    delta0: Optional[float] = None
    t_crit: Optional[float] = None

    def __post_init__(self):
        for name in ("thickness_d", "bc_thermo", "lambda_london", "xi0", "mean_free_path"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if self.delta0 is not None and self.t_crit is not None:
            expected = bcs_gap_ghz(self.t_crit)
            if abs(self.delta0 - expected) > 1e-6 * expected:
                raise ValueError(
                    f"delta0={self.delta0} GHz inconsistent with t_crit={self.t_crit} K "
                    f"(BCS gives {expected:.6g} GHz)"
                )

    @property
    def gap(self) -> Optional[float]:
        """Zero-field gap in GHz, from delta0 or else from t_crit."""
        if self.delta0 is not None:
            return self.delta0
        if self.t_crit is not None:
            return float(bcs_gap_ghz(self.t_crit))
        return None


def _out(x):
    return float(x) if np.ndim(x) == 0 else x


def _gl_factor(b, b_crit, what):
    b = np.abs(np.asarray(b, dtype=float))
    if np.any(b >= b_crit):
        raise GapClosedError(f"|{what}| = {np.max(b):.6g} T reaches the critical field {b_crit:.6g} T")
    return np.sqrt(1.0 - (b / b_crit) ** 2)


def gl_gap(delta0, b, b_crit):
    """Ginzburg-Landau gap suppression delta0 * sqrt(1 - (B / B_crit)^2)."""
    return _out(delta0 * _gl_factor(b, b_crit, "B"))


def ej_inplane(params: JunctionFieldParams, b_par):
    """In-plane E_J: GL gap suppression times a Fraunhofer |sinc| factor.

    sinc is the normalised one, sin(pi x) / (pi x), so the first zero sits at
    b_par = b_phi0.
    """
    gl = _gl_factor(b_par, params.b_crit_par, "B_par")
    return _out(params.ej0 * gl * np.abs(np.sinc(np.asarray(b_par, dtype=float) / params.b_phi0)))


def ej_inplane_jacobian(params: JunctionFieldParams, b_par):
    """d E_J / d(ej0, b_phi0, b_crit_par), shape (n, 3).  Used by the field fits."""
    b = np.atleast_1d(np.asarray(b_par, dtype=float))
    bc, bp = params.b_crit_par, params.b_phi0
    gl = _gl_factor(b, bc, "B_par")
    x = b / bp
    s = np.sinc(x)
    sign = np.sign(s)
    # d sinc(x)/dx = (cos(pi x) - sinc(x)) / x, -> 0 at x = 0
    with np.errstate(invalid="ignore", divide="ignore"):
        ds = np.where(x == 0, 0.0, (np.cos(np.pi * x) - s) / x)
    d_ej0 = gl * np.abs(s)
    d_bphi0 = params.ej0 * gl * sign * ds * (-b / bp**2)
    d_bc = params.ej0 * np.abs(s) * (b**2 / bc**3) / gl
    return np.column_stack([d_ej0, d_bphi0, d_bc])


def critical_field_at_angle(b_perp_crit, b_par_crit, theta, perp_law="linear"):
    """Thin-film critical field for a field at angle ``theta`` to the film plane.

    ``perp_law="linear"`` solves |B sin(theta) / Bperp| + (B cos(theta) / Bpar)^2 = 1
    (vortex-type perpendicular term) by a bracketed root search; ``"square"`` uses the
    squared perpendicular term, which has a closed form.
    """
    if not (b_perp_crit > 0 and b_par_crit > 0):
        raise ValueError("critical fields must be positive")
    s, c = abs(math.sin(theta)), abs(math.cos(theta))
    if perp_law == "square":
        return 1.0 / math.hypot(s / b_perp_crit, c / b_par_crit)
    if perp_law != "linear":
        raise ValueError(f"unknown perp_law {perp_law!r}")

    def g(b):
        return b * s / b_perp_crit + (b * c / b_par_crit) ** 2 - 1.0

    hi = max(b_perp_crit, b_par_crit)
    if g(hi) == 0.0:
        return hi
    return brentq(g, 0.0, hi, xtol=1e-12 * hi, rtol=4 * np.finfo(float).eps, maxiter=500)


def effective_perp_critical_field(b_perp_crit, b_par_crit, b_par, perp_law="linear"):
    """Perpendicular component at which the gap closes for a fixed in-plane field.

    Follows from the angle condition written in field components.
    """
    x2 = (np.asarray(b_par, dtype=float) / b_par_crit) ** 2
    if np.any(x2 >= 1.0):
        raise GapClosedError("in-plane field at or above the parallel critical field")
    out = b_perp_crit * (1.0 - x2) if perp_law == "linear" else b_perp_crit * np.sqrt(1.0 - x2)
    return _out(out)


def ej_perp_suppression(ej_at_zero_perp, b_perp, b_perp_crit_effective):
    """GL suppression of E_J by the perpendicular field component."""
    return _out(ej_at_zero_perp * _gl_factor(b_perp, b_perp_crit_effective, "B_perp"))


def _squid_phase(params: SquidParams, b_perp):
    return np.pi * (np.asarray(b_perp, dtype=float) - params.b_perp_offset) / params.b_phi0_squid


def ej_squid(params: SquidParams, b_perp):
    """Effective E_J of an asymmetric SQUID versus perpendicular field."""
    a2 = params.asymmetry_alpha**2
    c = np.cos(_squid_phase(params, b_perp))
    return _out(params.ej_sum * np.sqrt(a2 + (1.0 - a2) * c * c))


def ej_squid_slope(params: SquidParams, b_perp):
    """Analytic d E_J / d B_perp (GHz per tesla)."""
    a2 = params.asymmetry_alpha**2
    phase = _squid_phase(params, b_perp)
    c, s = np.cos(phase), np.sin(phase)
    root = np.sqrt(a2 + (1.0 - a2) * c * c)
    return _out(-params.ej_sum * (1.0 - a2) * c * s * (np.pi / params.b_phi0_squid) / root)


def effective_penetration_depth(film: FilmParams) -> float:
    """Dirty-limit penetration depth lambda_L * sqrt(xi0 / l)."""
    return film.lambda_london * math.sqrt(film.xi0 / film.mean_free_path)


def thin_film_bcrit(film: FilmParams) -> float:
    """Parallel critical field of a thin film, B_c * sqrt(24) * lambda / d."""
    return film.bc_thermo * math.sqrt(24.0) * effective_penetration_depth(film) / film.thickness_d


class VortexScales(NamedTuple):
    xi: float
    b_entry: float
    b_c2: float


def dirty_coherence_length(xi0, mean_free_path) -> float:
    return 0.85 * math.sqrt(xi0 * mean_free_path)


def upper_critical_field(xi) -> float:
    """B_c2 = Phi0 / (2 pi xi^2)."""
    return PHI0 / (2.0 * math.pi * xi**2)


def vortex_entry_field(width) -> float:
    """Order-of-magnitude vortex entry field Phi0 / w^2 of a strip of width w."""
    return PHI0 / width**2


def vortex_scales(film: FilmParams, lead_width_w: float) -> VortexScales:
    if lead_width_w <= 0:
        raise ValueError("lead_width_w must be positive")
    xi = dirty_coherence_length(film.xi0, film.mean_free_path)
    return VortexScales(xi, vortex_entry_field(lead_width_w), upper_critical_field(xi))


def barrier_height(b_phi0, finger_width_l2):
    """Height of the in-plane junction cross-section threaded by one flux quantum."""
    return PHI0 / (np.asarray(b_phi0) * np.asarray(finger_width_l2))
