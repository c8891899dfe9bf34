"""Relaxation and dephasing rate models.

Conventions (see :mod:`magtransmon.units`): frequencies in GHz, times in
us, rates in 1/us.  A cavity linewidth ``kappa`` is the ordinary-frequency
full width f_c / Q_tot in GHz; the energy decay rate that enters the
formulas is ``2 pi kappa`` in 1/ns.  The dispersive shift ``chi`` is half of
the per-photon qubit frequency shift, also in GHz.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Callable, NamedTuple, Optional

import numpy as np

from .cpb import DEFAULT_TRUNCATION, charge_dispersion, transmon_transitions
from .fields import SquidParams, ej_squid, ej_squid_slope, gl_gap
from .units import angular, bcs_gap_ghz, bose_einstein, kelvin_to_ghz, per_ns_to_per_us, tesla_to_mt


@dataclass(frozen=True)
class VortexParams:
    p0: float = 5.0  # 1/us per mT, slope at zero in-plane field
    q: float = 1.3  # 1/us
    f_depin: float = 4.0  # GHz
    creep_epsilon: float = 0.15
    b0_offset: float = 0.0  # T

    def __post_init__(self):
        if not (self.p0 > 0 and self.q > 0):
            raise ValueError("p0 and q must be positive")
        if not 0.0 <= self.creep_epsilon <= 1.0:
            raise ValueError("creep_epsilon must lie in [0, 1]")


@dataclass(frozen=True)
class QuasiparticleParams:
    t_quasiparticle_bath: float  # K
    gap_now: float  # GHz

    def __post_init__(self):
        if not (self.t_quasiparticle_bath > 0 and self.gap_now > 0):
            raise ValueError("bath temperature and gap must be positive")


@dataclass(frozen=True)
class ShotNoiseParams:
    chi: float  # GHz
    kappa: float  # GHz, f_c / Q_tot
    t_cavity: float  # K
    f_cavity: float  # GHz

    def __post_init__(self):
        if self.kappa <= 0 or self.t_cavity < 0:
            raise ValueError("kappa must be positive and t_cavity non-negative")


def cavity_linewidth(f_cavity, q_total):
    """Ordinary-frequency linewidth f_c / Q_tot in GHz."""
    return f_cavity / q_total


# --- relaxation --------------------------------------------------------------

def purcell_t1(delta, g, kappa):
    """Purcell limit delta^2 / (g^2 kappa) in us; ``inf`` for g = 0."""
    if delta == 0:
        raise ValueError("Purcell limit undefined at zero qubit-cavity detuning")
    if kappa <= 0:
        raise ValueError("kappa must be positive")
    if g == 0:
        return math.inf
    t_ns = (delta / g) ** 2 / float(angular(kappa))
    return 1e-3 * t_ns


def dielectric_background_t1(f01, q_background):
    """Background-loss limit Q_b / (2 pi f01) in us."""
    if not (f01 > 0 and q_background > 0):
        raise ValueError("f01 and q_background must be positive")
    return 1e-3 * q_background / float(angular(f01))


def quasiparticle_density(gap, temperature):
    """Thermal-equilibrium normalised quasiparticle density x_qp."""
    r = gap / kelvin_to_ghz(temperature)
    return math.sqrt(2.0 * math.pi / r) * math.exp(-r)


def quasiparticle_rate(ej, ec, f01, qp: QuasiparticleParams):
    """Quasiparticle-tunnelling relaxation rate in 1/us."""
    x = quasiparticle_density(qp.gap_now, qp.t_quasiparticle_bath)
    rate_per_ns = 2.0 * (8.0 * ej * ec * x / f01) * math.sqrt(2.0 * qp.gap_now / f01)
    return float(per_ns_to_per_us(rate_per_ns))


def creep_function(x, eps):
    """F(x, eps) = (eps + x^2) / (1 + x^2)."""
    x2 = np.asarray(x, dtype=float) ** 2
    out = (eps + x2) / (1.0 + x2)
    return float(out) if out.ndim == 0 else out


def vortex_slope(b_par, vp: VortexParams, f01_of_bpar, f01_zero, b_crit_par):
    """Asymptotic slope p(B_par) of the vortex loss, in 1/us per mT."""
    gl = gl_gap(1.0, b_par, b_crit_par)
    return vp.p0 / gl * (creep_function(f01_of_bpar / vp.f_depin, vp.creep_epsilon)
                         / creep_function(f01_zero / vp.f_depin, vp.creep_epsilon))


def vortex_rate(b_perp, b_par, vp: VortexParams, f01_of_bpar, f01_zero, b_crit_par):
    """Hyperbolic vortex loss sqrt(p^2 B~^2 + q^2) - q in 1/us, B~ = B_perp - B0."""
    p = vortex_slope(b_par, vp, f01_of_bpar, f01_zero, b_crit_par)
    bt = tesla_to_mt(np.asarray(b_perp, dtype=float) - vp.b0_offset)
    # written to avoid cancellation near B~ = 0
    pb2 = (p * bt) ** 2
    out = pb2 / (np.sqrt(pb2 + vp.q**2) + vp.q)
    return float(out) if np.ndim(out) == 0 else out


def vortex_threshold_field(vp: VortexParams):
    """B_th ~ q / p0, in tesla (meaningful at zero in-plane field only)."""
    return 1e-3 * vp.q / vp.p0


# --- dephasing ---------------------------------------------------------------

def photon_shotnoise_rate(sp: ShotNoiseParams):
    """Dephasing from thermal photon-number fluctuations, 1/us."""
    if sp.chi == 0:
        return 0.0
    n_th = bose_einstein(sp.f_cavity, sp.t_cavity)
    if n_th == 0:
        return 0.0
    x = sp.chi / sp.kappa
    # root - 1 written as (root^2 - 1) / (root + 1) to avoid cancellation at small chi/kappa
    radicand_minus_one = 4j * x * (1.0 + 2.0 * n_th) - 4.0 * x * x
    root = np.sqrt(1.0 + radicand_minus_one)
    rate_per_ns = 0.5 * float(angular(sp.kappa)) * (radicand_minus_one / (root + 1.0)).real
    return float(per_ns_to_per_us(rate_per_ns))


def photon_shotnoise_rate_small_chi(sp: ShotNoiseParams):
    """Leading-order limit 4 chi^2 n (n + 1) / kappa, 1/us."""
    n_th = bose_einstein(sp.f_cavity, sp.t_cavity)
    chi, kappa = float(angular(sp.chi)), float(angular(sp.kappa))
    return float(per_ns_to_per_us(4.0 * chi**2 * n_th * (n_th + 1.0) / kappa))


class Dephasing(NamedTuple):
    rate: float
    below_zero: bool  # measurement noise pushed 1/T2 below 1/(2 T1)


def pure_dephasing(t2, t1):
    """Gamma_phi = 1/T2 - 1/(2 T1) in 1/us.  Negative values are kept and flagged."""
    if not (t2 > 0 and t1 > 0):
        raise ValueError("t2 and t1 must be positive")
    rate = 1.0 / t2 - 0.5 / t1
    return Dephasing(rate, rate < 0)


def _f01_of_ej(ej, ec_relation, k, ng):
    ej = np.asarray(ej, dtype=float)
    return transmon_transitions(ej, ec_relation(ej), ng, k)[0]


def df01_dej(ej, ec_relation, k=DEFAULT_TRUNCATION, ng=0.0, rel_step=1e-4, rtol=1e-6):
    """d f01 / d E_J along the E_C(E_J) relation, central differences + Richardson."""
    ej = np.atleast_1d(np.asarray(ej, dtype=float))
    h = rel_step * ej
    pts = np.concatenate([ej + h, ej - h, ej + h / 2, ej - h / 2])
    f = _f01_of_ej(pts, ec_relation, k, ng).reshape(4, -1)
    d1 = (f[0] - f[1]) / (2 * h)
    d2 = (f[2] - f[3]) / h
    rich = (4.0 * d2 - d1) / 3.0
    if np.any(np.abs(rich - d2) > rtol * np.abs(rich) + 1e-12):
        warnings.warn("df01/dEJ not stable under step halving", RuntimeWarning, stacklevel=2)
    return rich


def sensitivity(squid: SquidParams, ec_relation: Callable, b_perp, k=DEFAULT_TRUNCATION, ng=0.0):
    """|d f01 / d B_perp| in GHz per tesla through the SQUID arch and the eigensolver."""
    b = np.atleast_1d(np.asarray(b_perp, dtype=float))
    ej = np.atleast_1d(ej_squid(squid, b))
    out = np.abs(df01_dej(ej, ec_relation, k, ng) * np.atleast_1d(ej_squid_slope(squid, b)))
    return float(out[0]) if np.ndim(b_perp) == 0 else out


class LinearTrend(NamedTuple):
    a: float
    b: float
    residuals: np.ndarray
    a_err: float
    b_err: float


def sensitivity_regression(points):
    """Ordinary least squares Gamma_phi = a |df01/dB_perp| + b.

    ``a`` measures slow field noise, ``b`` the field-independent floor.
    """
    pts = np.asarray(points, dtype=float)
    if pts.ndim != 2 or pts.shape[0] < 3 or pts.shape[1] != 2:
        raise ValueError("need at least 3 (sensitivity, gamma_phi) points")
    x, y = pts[:, 0], pts[:, 1]
    if np.ptp(x) == 0:
        raise ValueError("degenerate regression: all sensitivities are equal")
    A = np.column_stack([x, np.ones_like(x)])
    coef, *_ = np.linalg.lstsq(A, y, rcond=None)
    resid = y - A @ coef
    dof = len(x) - 2
    s2 = resid @ resid / dof if dof > 0 else np.nan
    cov = s2 * np.linalg.inv(A.T @ A)
    return LinearTrend(float(coef[0]), float(coef[1]), resid,
                       float(np.sqrt(cov[0, 0])), float(np.sqrt(cov[1, 1])))


# --- budget ------------------------------------------------------------------

def coupling_law(f01, intercept=0.057, slope=0.01):
    """Qubit-cavity coupling g(f01) = intercept + slope * f01, GHz."""
    return intercept + slope * np.asarray(f01, dtype=float)


@dataclass(frozen=True)
class CoherenceEnvironment:
    f_cavity: float = 8.107
    q_total: float = 5800.0
    coupling_intercept: float = 0.057
    coupling_slope: float = 0.01
    q_background: float = 3.5e6
    t_cavity: float = 0.076
    t_quasiparticle: float = 0.05
    delta0: float = float(bcs_gap_ghz(1.2))
    b_crit_par: float = 1.03
    vortex: VortexParams = field(default_factory=VortexParams)
    # Ramsey slow-noise coefficient a(B_par) = a0 + a1 * B_par, in (1/us) / (GHz/mT)
    slow_noise_a0: float = 0.0
    slow_noise_a1: float = 0.0
    ramsey_floor: float = 0.0  # 1/us
    echo_floor: float = 0.0  # 1/us

    @property
    def kappa(self) -> float:
        return cavity_linewidth(self.f_cavity, self.q_total)

    def coupling(self, f01):
        return coupling_law(f01, self.coupling_intercept, self.coupling_slope)


RELAXATION_CHANNELS = ("purcell", "dielectric", "quasiparticle", "vortex")
DEPHASING_CHANNELS = ("photon_shot_noise", "slow_field_noise", "floor")


@dataclass
class RateBudget:
    """Per-channel rates (1/us) at one operating point; totals over enabled channels."""

    relaxation: dict
    dephasing_echo: dict
    dephasing_ramsey: dict
    charge_dispersion: Optional[float] = None  # GHz, reported as a bound proxy only
    enabled: frozenset = frozenset(RELAXATION_CHANNELS + DEPHASING_CHANNELS)

    def _sum(self, d):
        return float(sum(v for k, v in d.items() if k in self.enabled))

    @property
    def gamma1(self) -> float:
        return self._sum(self.relaxation)

    @property
    def t1(self) -> float:
        g = self.gamma1
        return math.inf if g == 0 else 1.0 / g

    @property
    def gamma_phi_echo(self) -> float:
        return self._sum(self.dephasing_echo)

    @property
    def gamma_phi_ramsey(self) -> float:
        return self._sum(self.dephasing_ramsey)

    @property
    def t2_echo(self) -> float:
        return 1.0 / (self.gamma_phi_echo + 0.5 * self.gamma1)

    @property
    def t2_ramsey(self) -> float:
        return 1.0 / (self.gamma_phi_ramsey + 0.5 * self.gamma1)


def coherence_budget(env: CoherenceEnvironment, *, ej, ec, f01, anharmonicity, b_par, b_perp,
                     f01_zero, sensitivity_ghz_per_mt=0.0, with_charge_dispersion=False,
                     enabled=None) -> RateBudget:
    """Decompose relaxation and dephasing at one field point into channels."""
    g = float(env.coupling(f01))
    delta = f01 - env.f_cavity
    t1_p = purcell_t1(delta, g, env.kappa)
    gap = gl_gap(env.delta0, b_par, env.b_crit_par)
    relax = {
        "purcell": 0.0 if math.isinf(t1_p) else 1.0 / t1_p,
        "dielectric": 1.0 / dielectric_background_t1(f01, env.q_background),
        "quasiparticle": quasiparticle_rate(ej, ec, f01, QuasiparticleParams(env.t_quasiparticle, gap)),
        "vortex": vortex_rate(b_perp, b_par, env.vortex, f01, f01_zero, env.b_crit_par),
    }
    chi = dispersive_chi_safe(f01, anharmonicity, g, env.f_cavity)
    shot = photon_shotnoise_rate(ShotNoiseParams(chi, env.kappa, env.t_cavity, env.f_cavity))
    a = env.slow_noise_a0 + env.slow_noise_a1 * b_par
    echo = {"photon_shot_noise": shot, "slow_field_noise": 0.0, "floor": env.echo_floor}
    ramsey = {"photon_shot_noise": shot, "slow_field_noise": a * abs(sensitivity_ghz_per_mt),
              "floor": env.ramsey_floor}
    cd = charge_dispersion(ej, ec) if with_charge_dispersion else None
    budget = RateBudget(relax, echo, ramsey, cd)
    if enabled is not None:
        budget.enabled = frozenset(enabled)
    return budget


def dispersive_chi_safe(f01, anharmonicity, g, f_cavity):
    # local import keeps coherence importable without the dressed-state module cycle
    from .dressed import dispersive_chi

    return dispersive_chi(f01, anharmonicity, g, f_cavity)
