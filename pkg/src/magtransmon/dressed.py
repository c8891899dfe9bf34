"""Two qutrits coupled to one cavity mode, solved without the dispersive approximation.

Each qutrit is described by its level energies 0, f01 and f02 = 2 * f02_half.
The exchange coupling g (|0><1| + sqrt2 |1><2|) a^dag + h.c. conserves the
total excitation number a + b + n, so the Hamiltonian splits into small
blocks.  The direct qutrit-qutrit interaction is neglected (measured below
1 MHz), which is recorded as ``QQ_COUPLING_BOUND``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .lsq import FitError, FitResult, lsq_minimize

DEFAULT_PHOTONS = 5
QQ_COUPLING_BOUND = 1e-3  # GHz, neglected direct qutrit-qutrit coupling
POLE_GUARD = 1e-9  # GHz^2


class LabelingError(RuntimeError):
    """Dressed eigenstates cannot be assigned to bare states unambiguously."""


@dataclass(frozen=True)
class CavityParams:
    f_cavity_bare: float
    q_total: float
    coupling_g1: float = 0.0
    coupling_g2: float = 0.0
    photon_truncation: int = DEFAULT_PHOTONS

    def __post_init__(self):
        if not (self.f_cavity_bare > 0 and self.q_total > 0):
            raise ValueError("f_cavity_bare and q_total must be positive")
        if self.coupling_g1 < 0 or self.coupling_g2 < 0:
            raise ValueError("couplings must be non-negative")
        if self.photon_truncation < 2:
            raise ValueError("photon_truncation must be >= 2 to hold every labelled state")

    @property
    def linewidth(self) -> float:
        """f_c / Q_tot in GHz (ordinary frequency)."""
        return self.f_cavity_bare / self.q_total

    @property
    def kappa_angular(self) -> float:
        """2 pi f_c / Q_tot in rad/ns."""
        return 2.0 * math.pi * self.linewidth


@dataclass(frozen=True)
class QutritLevels:
    f01: float
    f02_half: float

    @property
    def f02(self) -> float:
        return 2.0 * self.f02_half


@dataclass(frozen=True)
class DressedTransitions:
    f_cavity_dressed: float
    q1: QutritLevels
    q2: QutritLevels
    chi1: float = 0.0  # half the cavity pull when qutrit 1 is excited
    chi2: float = 0.0


def _basis(n_photons, total=None):
    states = [(a, b, n) for a in range(3) for b in range(3) for n in range(n_photons + 1)]
    if total is not None:
        states = [s for s in states if sum(s) == total]
    return states


def _hamiltonian(states, q1: QutritLevels, q2: QutritLevels, fc, g1, g2):
    lev1 = (0.0, q1.f01, q1.f02)
    lev2 = (0.0, q2.f01, q2.f02)
    index = {s: i for i, s in enumerate(states)}
    H = np.zeros((len(states), len(states)))
    for i, (a, b, n) in enumerate(states):
        H[i, i] = lev1[a] + lev2[b] + fc * n
        # lower a qutrit (matrix element sqrt(level)) and create a photon
        for which, g in ((0, g1), (1, g2)):
            lvl = (a, b)[which]
            if lvl == 0 or g == 0.0:
                continue
            tgt = (a - 1, b, n + 1) if which == 0 else (a, b - 1, n + 1)
            j = index.get(tgt)
            if j is not None:
                v = g * math.sqrt(lvl) * math.sqrt(n + 1)
                H[i, j] = H[j, i] = v
    return H


def jc_hamiltonian(q1: QutritLevels, q2: QutritLevels, cav: CavityParams):
    """Dense Hamiltonian on the full 3 x 3 x (N + 1) product basis and the basis labels."""
    states = _basis(cav.photon_truncation)
    return _hamiltonian(states, q1, q2, cav.f_cavity_bare, cav.coupling_g1, cav.coupling_g2), states


def excitation_blocks(q1: QutritLevels, q2: QutritLevels, cav: CavityParams):
    """{excitation number: (block Hamiltonian, block basis)}."""
    full = _basis(cav.photon_truncation)
    out = {}
    for m in sorted({sum(s) for s in full}):
        states = [s for s in full if sum(s) == m]
        out[m] = (_hamiltonian(states, q1, q2, cav.f_cavity_bare, cav.coupling_g1, cav.coupling_g2), states)
    return out


_LABELLED = ((0, 0, 0), (0, 0, 1), (1, 0, 0), (2, 0, 0), (0, 1, 0), (0, 2, 0), (1, 0, 1), (0, 1, 1))


def dressed_energies(q1: QutritLevels, q2: QutritLevels, cav: CavityParams, tie_tol=1e-3):
    """Energies of the dressed states adiabatically connected to the labelled bare states.

    Each dressed eigenvector is labelled by the bare product state it
    overlaps most; if two eigenvectors compete for one bare state within
    ``tie_tol`` in squared overlap, a :class:`LabelingError` is raised.
    """
    blocks = {}
    out = {}
    for s in _LABELLED:
        m = sum(s)
        if m not in blocks:
            states = [t for t in _basis(cav.photon_truncation, m)]
            H = _hamiltonian(states, q1, q2, cav.f_cavity_bare, cav.coupling_g1, cav.coupling_g2)
            blocks[m] = (np.linalg.eigh(H), states)
        (w, v), states = blocks[m]
        j = states.index(s)
        ov = v[j, :] ** 2
        order = np.argsort(ov)[::-1]
        best = order[0]
        if ov.size > 1 and ov[best] - ov[order[1]] < tie_tol:
            raise LabelingError(f"state {s} is near an exact degeneracy; labels are ambiguous")
        # the chosen eigenvector must itself be dominated by this bare state
        if int(np.argmax(v[:, best] ** 2)) != j:
            raise LabelingError(f"no dressed state is dominated by bare state {s}")
        out[s] = float(w[best])
    return out


def build_and_solve_jc(q1: QutritLevels, q2: QutritLevels, cav: CavityParams,
                       check_truncation=True, tol=1e-4) -> DressedTransitions:
    """Dressed cavity and qutrit transitions of the two-qutrit one-cavity model."""
    tr = _transitions(dressed_energies(q1, q2, cav))
    if check_truncation:
        bigger = CavityParams(cav.f_cavity_bare, cav.q_total, cav.coupling_g1, cav.coupling_g2,
                              cav.photon_truncation + 2)
        tr2 = _transitions(dressed_energies(q1, q2, bigger))
        drift = max(abs(a - b) for a, b in zip(_flat(tr), _flat(tr2)))
        if drift > tol:
            raise ValueError(f"photon truncation too small: transitions drift by {drift:.3g} GHz")
    return tr


def _transitions(E):
    g = E[(0, 0, 0)]
    fc = E[(0, 0, 1)] - g
    q1 = QutritLevels(E[(1, 0, 0)] - g, 0.5 * (E[(2, 0, 0)] - g))
    q2 = QutritLevels(E[(0, 1, 0)] - g, 0.5 * (E[(0, 2, 0)] - g))
    chi1 = 0.5 * ((E[(1, 0, 1)] - E[(1, 0, 0)]) - fc)
    chi2 = 0.5 * ((E[(0, 1, 1)] - E[(0, 1, 0)]) - fc)
    return DressedTransitions(fc, q1, q2, chi1, chi2)


def _flat(t: DressedTransitions):
    return (t.f_cavity_dressed, t.q1.f01, t.q1.f02_half, t.q2.f01, t.q2.f02_half)


def dispersive_chi(f01, anharm, g, f_cavity, rotating_wave_only=False):
    """Transmon dispersive shift chi in GHz.

    g^2 alpha [1/(delta (delta + alpha)) - 1/((delta - 2 f01)(delta - alpha - 2 f01))]
    with delta = f01 - f_cavity.  The second bracket term comes from the
    counter-rotating coupling; ``rotating_wave_only`` drops it, which is the
    quantity the excitation-conserving model above reproduces.
    """
    if g == 0 or anharm == 0:
        return 0.0
    delta = f01 - f_cavity
    d1 = delta * (delta + anharm)
    d2 = (delta - 2.0 * f01) * (delta - anharm - 2.0 * f01)
    if abs(delta) < POLE_GUARD ** 0.5:
        raise ValueError("dispersive shift undefined: qubit resonant with the cavity")
    if abs(d1) < POLE_GUARD:
        raise ValueError("dispersive shift undefined: 1-2 transition resonant with the cavity")
    if abs(d2) < POLE_GUARD:
        raise ValueError("dispersive shift undefined: counter-rotating resonance")
    bracket = 1.0 / d1 if rotating_wave_only else 1.0 / d1 - 1.0 / d2
    return g * g * anharm * bracket


def coupling_law(f01, intercept=0.057, slope=0.01):
    """Qubit-cavity coupling g(f01) = intercept + slope * f01 in GHz."""
    return intercept + slope * np.asarray(f01, dtype=float)


def dress_with_law(bare1: QutritLevels, bare2: QutritLevels, f_cavity, intercept, slope,
                   q_total=1e4, photons=DEFAULT_PHOTONS) -> DressedTransitions:
    g1 = max(float(coupling_law(bare1.f01, intercept, slope)), 0.0)
    g2 = max(float(coupling_law(bare2.f01, intercept, slope)), 0.0)
    cav = CavityParams(f_cavity, q_total, g1, g2, photons)
    return build_and_solve_jc(bare1, bare2, cav, check_truncation=False)


def ej_dressing_correction(ej, ec, f_cavity=8.107, intercept=0.057, slope=0.01, q_total=5800.0,
                           partner=QutritLevels(2.0, 1.9), k=20):
    """Relative error (E_J,dressed - E_J) / E_J made by inverting dressed instead of bare levels.

    The qutrit with bare (``ej``, ``ec``) is dressed by the cavity together
    with a far-detuned ``partner``, using the linear coupling law; its dressed
    (f01, f02/2) are then inverted as if they were bare.  A positive value
    means the bare E_J is lower, i.e. the correction is downward.
    """
    from .cpb import transmon_transitions
    from .fits import fit_ej_ec_from_pair

    f1, f2 = transmon_transitions(float(ej), float(ec), 0.0, k)
    t = dress_with_law(QutritLevels(f1, f2), partner, f_cavity, intercept, slope, q_total)
    ej_d, _ = fit_ej_ec_from_pair(t.q1.f01, t.q1.f02_half, k)
    return (ej_d - ej) / ej


@dataclass
class BareEstimate:
    bare: list  # [(QutritLevels, QutritLevels)] per record
    intercept: float
    slope: float
    fit: FitResult

    @property
    def rms(self) -> float:
        return self.fit.rms


def bare_from_dressed(measured: Sequence[DressedTransitions], f_cavity_fixed: float,
                      initial_law=(0.05, 0.01), photons=DEFAULT_PHOTONS) -> BareEstimate:
    """Fit bare qutrit levels per record and a shared linear coupling law.

    All five dressed transitions of every record enter the residual; the
    bare cavity frequency is held at ``f_cavity_fixed``.
    """
    measured = list(measured)
    n_rec = len(measured)
    if n_rec < 4:
        raise FitError("need at least 4 dressed records to fit the coupling law")
    y = np.array([_flat(t) for t in measured])
    x0 = np.concatenate([y[:, 1:].ravel(), np.asarray(initial_law, dtype=float)])

    def unpack(p):
        lv = p[:-2].reshape(n_rec, 4)
        return lv, p[-2], p[-1]

    def residual(p):
        lv, c0, c1 = unpack(p)
        out = np.empty_like(y)
        for i in range(n_rec):
            try:
                t = dress_with_law(QutritLevels(lv[i, 0], lv[i, 1]), QutritLevels(lv[i, 2], lv[i, 3]),
                                   f_cavity_fixed, c0, c1, photons=photons)
            except LabelingError:
                return np.full(y.size, np.nan)
            out[i] = _flat(t)
        return (out - y).ravel()

    names = [f"{q}_{w}[{i}]" for i in range(n_rec) for q in ("q1", "q2") for w in ("f01", "f02_half")]
    names += ["coupling_intercept", "coupling_slope"]
    # the cavity pull fixes the coupling scale from every record simultaneously
    fit = lsq_minimize(residual, x0, names=names, max_iter=300)
    lv, c0, c1 = unpack(fit.params)
    bare = [(QutritLevels(r[0], r[1]), QutritLevels(r[2], r[3])) for r in lv]
    return BareEstimate(bare, float(c0), float(c1), fit)
