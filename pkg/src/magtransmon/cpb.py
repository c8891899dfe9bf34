"""Cooper-pair box / transmon spectrum in the charge basis.

The Hamiltonian on charge states n = -k..k is tridiagonal: 4 E_C (n - n_g)^2
on the diagonal and -E_J/2 coupling neighbouring charge states.  All
energies are frequencies in GHz.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from ._tridiag import cpb_levels_general, cpb_levels_symmetric

DEFAULT_TRUNCATION = 20
CONVERGENCE_TOL = 1e-8  # GHz drift of f01 when k -> k + 5


class TruncationError(ValueError):
    """The charge-basis truncation is too small for the requested accuracy."""


@dataclass(frozen=True)
class CpbParams:
    ej: float
    ec: float
    ng: float = 0.0
    k: int = DEFAULT_TRUNCATION

    def __post_init__(self):
        for name in ("ej", "ec", "ng"):
            if not math.isfinite(getattr(self, name)):
                raise ValueError(f"{name} must be finite, got {getattr(self, name)!r}")
        if self.ej < 0:
            raise ValueError(f"ej must be >= 0, got {self.ej}")
        if self.ec <= 0:
            raise ValueError(f"ec must be > 0, got {self.ec}")
        if int(self.k) != self.k or self.k < 1:
            raise ValueError(f"k must be a positive integer, got {self.k!r}")


@dataclass(frozen=True)
class TransmonSpectrum:
    """Level energies relative to the ground state, ascending (GHz)."""

    eigenfrequencies: np.ndarray

    @property
    def f01(self) -> float:
        return float(self.eigenfrequencies[1])

    @property
    def f02_half(self) -> float:
        return float(self.eigenfrequencies[2]) / 2.0

    @property
    def anharmonicity(self) -> float:
        """f12 - f01, negative in the transmon regime."""
        e = self.eigenfrequencies
        return float(e[2] - 2.0 * e[1])


def reduce_offset_charge(ng):
    """Map any offset charge onto [0, 0.5] using period 1 and n_g -> -n_g."""
    r = np.mod(np.asarray(ng, dtype=float), 1.0)
    r = np.where(r > 0.5, 1.0 - r, r)
    return float(r) if r.ndim == 0 else r


def cpb_levels(ej, ec, ng=0.0, k=DEFAULT_TRUNCATION, n_levels=3):
    """Lowest ``n_levels`` absolute eigenvalues for broadcast arrays of inputs.

    Returns an array of shape ``broadcast_shape + (n_levels,)``.  This is the
    fast path used inside fits; no validation beyond shapes.
    """
    ej, ec, ng = np.broadcast_arrays(
        np.asarray(ej, dtype=float), np.asarray(ec, dtype=float), reduce_offset_charge(ng)
    )
    shape = ej.shape
    if n_levels > 2 * k + 1:
        raise ValueError(f"n_levels={n_levels} exceeds basis size {2 * k + 1}")
    ej_f = np.ascontiguousarray(ej.ravel())
    ec_f = np.ascontiguousarray(ec.ravel())
    ng_f = np.ascontiguousarray(ng.ravel())
    if np.all(ng_f == 0.0):
        out = cpb_levels_symmetric(ej_f, ec_f, int(k), int(n_levels))
    else:
        out = cpb_levels_general(ej_f, ec_f, ng_f, int(k), int(n_levels))
    return out.reshape(shape + (n_levels,))


def transmon_transitions(ej, ec, ng=0.0, k=DEFAULT_TRUNCATION):
    """Vectorised (f01, f02/2) for broadcast arrays of (ej, ec, ng)."""
    lev = cpb_levels(ej, ec, ng, k, 3)
    f01 = lev[..., 1] - lev[..., 0]
    f02_half = 0.5 * (lev[..., 2] - lev[..., 0])
    if f01.ndim == 0:
        return float(f01), float(f02_half)
    return f01, f02_half


@lru_cache(maxsize=4096)
def _cached_levels(ej, ec, ng_reduced, k, n_levels):
    lev = cpb_levels(ej, ec, ng_reduced, k, n_levels)
    lev = lev - lev[0]
    lev.setflags(write=False)
    return lev


def truncation_drift(params: CpbParams) -> float:
    """|f01(k) - f01(k+5)| in GHz."""
    ng = reduce_offset_charge(params.ng)
    a = _cached_levels(params.ej, params.ec, ng, params.k, 2)
    b = _cached_levels(params.ej, params.ec, ng, params.k + 5, 2)
    return abs(float(a[1] - b[1]))


def solve_cpb(params: CpbParams, n_levels: int = 8, check_truncation: bool = True,
              tol: float = CONVERGENCE_TOL) -> TransmonSpectrum:
    """Diagonalise the charge-basis Hamiltonian.

    With ``check_truncation`` the problem is re-solved at k + 5 and a
    :class:`TruncationError` is raised when f01 moves by more than ``tol``.
    """
    n_levels = min(max(n_levels, 3), 2 * params.k + 1)
    ng = reduce_offset_charge(params.ng)
    lev = _cached_levels(params.ej, params.ec, ng, params.k, n_levels)
    if check_truncation:
        drift = truncation_drift(params)
        if drift > tol:
            raise TruncationError(
                f"f01 drifts by {drift:.3g} GHz between k={params.k} and k={params.k + 5}; "
                "increase the truncation"
            )
    return TransmonSpectrum(eigenfrequencies=lev)


def f01_asymptotic(ej, ec):
    """Leading transmon asymptote sqrt(8 E_J E_C) - E_C."""
    return np.sqrt(8.0 * np.asarray(ej) * np.asarray(ec)) - np.asarray(ec)


def charge_dispersion(ej, ec, k=DEFAULT_TRUNCATION):
    """f01(n_g = 0) - f01(n_g = 0.5); positive in the transmon regime."""
    if not (ej > 0 and ec > 0):
        raise ValueError("charge_dispersion needs ej > 0 and ec > 0")
    even = solve_cpb(CpbParams(ej, ec, 0.0, k)).f01
    odd = solve_cpb(CpbParams(ej, ec, 0.5, k)).f01
    return even - odd


def parity_split_spectrum(ej, ec, k=DEFAULT_TRUNCATION):
    """f01 of the two charge-parity branches, (n_g = 0, n_g = 0.5).

    Every other offset charge gives an f01 between the two.
    """
    if not (ej > 0 and ec > 0):
        raise ValueError("parity_split_spectrum needs ej > 0 and ec > 0")
    return (solve_cpb(CpbParams(ej, ec, 0.0, k)).f01,
            solve_cpb(CpbParams(ej, ec, 0.5, k)).f01)
