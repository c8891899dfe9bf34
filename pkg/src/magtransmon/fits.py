"""Parameter-extraction pipelines built on :func:`magtransmon.lsq.lsq_minimize`.

Fields are passed in tesla.  Arch fits work internally in mT so that all
free parameters are of order one.
"""

from __future__ import annotations

import math
from functools import lru_cache
from dataclasses import dataclass
from typing import Mapping, NamedTuple, Optional

import numpy as np
from numba import njit
from numpy.polynomial import chebyshev as C
from scipy.optimize import brentq
from scipy.stats import siegelslopes

from .coherence import VortexParams
from .cpb import DEFAULT_TRUNCATION, parity_split_spectrum, transmon_transitions
from .fields import JunctionFieldParams, SquidParams, effective_perp_critical_field
from .lsq import ConvergenceError, FitError, FitResult, lsq_minimize, nelder_mead_minimize

RELATION_BAND = 0.010  # GHz, inlier band around the E_C-E_J line
MIN_INLIER_FRACTION = 0.5


# --- E_J, E_C from one transition pair ---------------------------------------

def _pair_guess(f01, f02_half):
    ec = 2.0 * (f01 - f02_half)
    ej = (f01 + ec) ** 2 / (8.0 * ec)
    return ej, ec


def fit_ej_ec_pairs(f01, f02_half, k=DEFAULT_TRUNCATION, tol=1e-11, max_iter=60, strict=True):
    """Vectorised inversion of (f01, f02/2) at n_g = 0 into (E_J, E_C).

    Damped Newton on the 2 x 2 system with a finite-difference Jacobian and
    per-pair step halving; starts from the asymptotic transmon formulas
    ec = 2 (f01 - f02/2), ej = (f01 + ec)^2 / (8 ec).  With ``strict=False``
    pairs without a physical solution come back as NaN instead of raising.
    """
    f01 = np.atleast_1d(np.asarray(f01, dtype=float))
    f2 = np.atleast_1d(np.asarray(f02_half, dtype=float))
    bad = ~((f2 > 0) & (f2 < f01))
    if np.any(bad) and strict:
        i = int(np.flatnonzero(bad)[0])
        raise FitError(f"pair {i}: need 0 < f02/2 < f01 for a transmon at n_g = 0 "
                       f"(got f01={f01[i]}, f02/2={f2[i]})")
    if np.any(bad):
        ej = np.full(f01.size, np.nan)
        ec = np.full(f01.size, np.nan)
        good = ~bad
        if np.any(good):
            ej[good], ec[good] = fit_ej_ec_pairs(f01[good], f2[good], k, tol, max_iter, strict=False)
        return ej, ec
    ej, ec = _pair_guess(f01, f2)
    target = np.stack([f01, f2], axis=-1)

    def resid(a, b, rows=slice(None)):
        return np.stack(transmon_transitions(a, b, 0.0, k), axis=-1) - target[rows]

    r = resid(ej, ec)
    for _ in range(max_iter):
        norm = np.max(np.abs(r), axis=-1)
        active = norm > tol
        if not np.any(active):
            break
        idx = np.flatnonzero(active)
        a, b, ra = ej[idx], ec[idx], r[idx]
        ha, hb = 1e-6 * a, 1e-6 * b
        pa = np.stack(transmon_transitions(np.concatenate([a + ha, a - ha]),
                                           np.concatenate([b, b]), 0.0, k), axis=-1)
        pb = np.stack(transmon_transitions(np.concatenate([a, a]),
                                           np.concatenate([b + hb, b - hb]), 0.0, k), axis=-1)
        n = idx.size
        ja = (pa[:n] - pa[n:]) / (2 * ha)[:, None]
        jb = (pb[:n] - pb[n:]) / (2 * hb)[:, None]
        J = np.stack([ja, jb], axis=-1)  # (n, 2 residuals, 2 params)
        step = -np.linalg.solve(J, ra[..., None])[..., 0]
        t = np.ones(n)
        new_norm = norm[idx]
        for _ in range(30):
            na = a + t * step[:, 0]
            nb = b + t * step[:, 1]
            ok = (na > 0) & (nb > 0)
            rn = np.where(ok[:, None], resid(np.where(ok, na, a), np.where(ok, nb, b), idx), np.inf)
            improved = np.max(np.abs(rn), axis=-1) < new_norm
            if np.all(improved):
                break
            t = np.where(improved, t, 0.5 * t)
        upd = improved
        ej[idx[upd]] = na[upd]
        ec[idx[upd]] = nb[upd]
        r[idx[upd]] = rn[upd]
        if not np.any(upd):
            break
    norm = np.max(np.abs(r), axis=-1)
    if not strict:
        failed = ~(norm <= 1e-6)
        ej[failed] = np.nan
        ec[failed] = np.nan
        return ej, ec
    if np.any(norm > 1e-6):
        i = int(np.argmax(norm))
        raise FitError(f"pair {i}: no (E_J, E_C) reproduces f01={f01[i]}, f02/2={f2[i]} "
                       f"(residual {norm[i]:.3g} GHz)")
    return ej, ec


def fit_ej_ec_from_pair(f01, f02_half, k=DEFAULT_TRUNCATION):
    """(E_J, E_C) in GHz reproducing one measured (f01, f02/2) pair at n_g = 0."""
    ej, ec = fit_ej_ec_pairs([f01], [f02_half], k)
    return float(ej[0]), float(ec[0])


# --- E_C(E_J) relation -------------------------------------------------------

@dataclass(frozen=True)
class EcEjRelation:
    slope: float
    intercept: float
    inlier_fraction: float = 1.0
    reliable: bool = True
    ej_min: float = 0.0
    ej_max: float = 200.0

    def __post_init__(self):
        lo = self.intercept + self.slope * self.ej_min
        hi = self.intercept + self.slope * self.ej_max
        if min(lo, hi) <= 0:
            raise ValueError(f"relation gives ec <= 0 on [{self.ej_min}, {self.ej_max}] GHz")

    def __call__(self, ej):
        return self.intercept + self.slope * np.asarray(ej, dtype=float)

    def derivative(self):
        return self.slope

    def to_dict(self):
        return {"slope": self.slope, "intercept_ghz": self.intercept,
                "inlier_fraction": self.inlier_fraction, "reliable": self.reliable,
                "ej_min_ghz": self.ej_min, "ej_max_ghz": self.ej_max}

    @classmethod
    def from_dict(cls, d):
        return cls(float(d["slope"]), float(d["intercept_ghz"]), float(d.get("inlier_fraction", 1.0)),
                   bool(d.get("reliable", True)), float(d.get("ej_min_ghz", 0.0)),
                   float(d.get("ej_max_ghz", 200.0)))


DEFAULT_RELATION = EcEjRelation(slope=0.002, intercept=0.2)


def fit_ec_ej_correlation(pairs, band=RELATION_BAND, clip_sigma=3.0, max_iter=50,
                          min_inlier_fraction=MIN_INLIER_FRACTION) -> EcEjRelation:
    """Robust straight line E_C = intercept + slope * E_J.

    Start from a repeated-median line, then alternate: keep points within
    ``band`` of the line, refit by least squares, sigma-clip at
    ``clip_sigma``; stop when the inlier set no longer changes.
    """
    p = np.asarray(pairs, dtype=float)
    if p.ndim != 2 or p.shape[1] != 2 or p.shape[0] < 5:
        raise FitError("need at least 5 (ej, ec) pairs")
    ej, ec = p[:, 0], p[:, 1]
    if np.ptp(ej) == 0:
        raise FitError("all E_J values are equal; the slope is undefined")
    if np.ptp(ec) == 0:
        slope, intercept = 0.0, float(ec[0])
        inl = np.ones(ej.size, dtype=bool)
    else:
        slope, intercept = siegelslopes(ec, ej)
        inl = None
        for _ in range(max_iter):
            res = ec - (intercept + slope * ej)
            new = np.abs(res) <= band
            if new.sum() >= 2:
                A = np.column_stack([ej[new], np.ones(new.sum())])
                (slope, intercept), *_ = np.linalg.lstsq(A, ec[new], rcond=None)
                res = ec - (intercept + slope * ej)
                s = np.std(res[new], ddof=2) if new.sum() > 2 else 0.0
                if s > 0:
                    new &= np.abs(res) <= clip_sigma * s
                    A = np.column_stack([ej[new], np.ones(new.sum())])
                    (slope, intercept), *_ = np.linalg.lstsq(A, ec[new], rcond=None)
            if inl is not None and np.array_equal(new, inl):
                break
            inl = new
    frac = float(inl.mean())
    return EcEjRelation(float(slope), float(intercept), frac, frac >= min_inlier_fraction,
                        float(ej.min()), float(ej.max()))


@njit(cache=True)
def _clenshaw(x, c):
    out = np.empty(x.size)
    n = c.size
    for i in range(x.size):
        t2 = 2.0 * x[i]
        b1 = 0.0
        b2 = 0.0
        for j in range(n - 1, 0, -1):
            b1, b2 = c[j] + t2 * b1 - b2, b1
        out[i] = c[0] + x[i] * b1 - b2
    return out


class RelationSpectrum:
    """f01 and f02/2 along E_C = relation(E_J) as Chebyshev series in log E_J.

    Sweep fits evaluate the transitions of one relation-constrained family
    thousands of times; the series reproduces the direct eigensolver to its
    own rounding level (checked at the interleaved nodes when built) and
    gives exact derivatives.  Outside ``[lo, hi]`` the direct solver is used.
    """

    CHECK_TOL = 1e-10  # GHz

    def __init__(self, relation, k=DEFAULT_TRUNCATION, lo=1.0, hi=64.0):
        self.relation, self.k = relation, k
        self.lo, self.hi = float(lo), float(hi)
        self._a, self._b = math.log(self.lo), math.log(self.hi)
        self.coef = None
        for deg in (64, 128):
            x = np.cos(np.pi * (np.arange(deg + 1) + 0.5) / (deg + 1))
            f1, f2 = self._direct(self._ej(x))
            coef = (C.chebfit(x, f1, deg), C.chebfit(x, f2, deg))
            xc = np.cos(np.pi * np.arange(1, deg + 1) / (deg + 1))
            c1, c2 = self._direct(self._ej(xc))
            err = max(np.abs(C.chebval(xc, coef[0]) - c1).max(), np.abs(C.chebval(xc, coef[1]) - c2).max())
            if err <= self.CHECK_TOL:
                self.coef = coef
                self.dcoef = (C.chebder(coef[0]), C.chebder(coef[1]))
                break

    def _ej(self, x):
        return np.exp(self._a + 0.5 * (x + 1.0) * (self._b - self._a))

    def _x(self, ej):
        return 2.0 * (np.log(ej) - self._a) / (self._b - self._a) - 1.0

    def _direct(self, ej):
        return transmon_transitions(ej, self.relation(ej), 0.0, self.k)

    def _inside(self, ej):
        return self.coef is not None and ej.size > 0 and ej.min() >= self.lo and ej.max() <= self.hi

    def __call__(self, ej):
        ej = np.atleast_1d(np.asarray(ej, dtype=float))
        if not self._inside(ej):
            return self._direct(ej)
        x = self._x(ej)
        return _clenshaw(x, self.coef[0]), _clenshaw(x, self.coef[1])

    def derivative(self, ej):
        ej = np.atleast_1d(np.asarray(ej, dtype=float))
        if not self._inside(ej):
            h = 1e-6 * ej
            f1, f2 = self._direct(np.concatenate([ej + h, ej - h]))
            n = ej.size
            return (f1[:n] - f1[n:]) / (2 * h), (f2[:n] - f2[n:]) / (2 * h)
        x = self._x(ej)
        dx = 2.0 / ((self._b - self._a) * ej)
        return _clenshaw(x, self.dcoef[0]) * dx, _clenshaw(x, self.dcoef[1]) * dx


@lru_cache(maxsize=64)
def _relation_spectrum(slope, intercept, k, lo, hi):
    return RelationSpectrum(EcEjRelation(slope, intercept), k, lo, hi)


def relation_spectrum(relation, k=DEFAULT_TRUNCATION, ej_lo=1.0, ej_hi=64.0) -> RelationSpectrum:
    """Cached :class:`RelationSpectrum` covering [ej_lo, ej_hi], bounds rounded out to powers of two."""
    lo = 2.0 ** math.floor(math.log2(max(ej_lo, 1e-3)))
    hi = 2.0 ** math.ceil(math.log2(max(ej_hi, 2 * lo)))
    if isinstance(relation, EcEjRelation):
        return _relation_spectrum(relation.slope, relation.intercept, k, lo, hi)
    return RelationSpectrum(relation, k, lo, hi)


def ej_from_f01(f01, relation, k=DEFAULT_TRUNCATION, ng=0.0):
    """Invert f01(E_J, relation(E_J)) for E_J; f01 grows monotonically with E_J."""
    f01 = np.atleast_1d(np.asarray(f01, dtype=float))
    out = np.empty_like(f01)
    for i, f in enumerate(f01):
        def g(ej):
            return transmon_transitions(ej, relation(ej), ng, k)[0] - f

        hi = max(4.0, (f + 1.0) ** 2 / 4.0)
        while g(hi) < 0:
            hi *= 2
        out[i] = brentq(g, 1e-6, hi, xtol=1e-13, rtol=1e-14)
    return out


def _ej_from_f01_fast(f01, spectrum: RelationSpectrum):
    # Newton on the series from the asymptotic guess, bracketed by the series range
    f01 = np.asarray(f01, dtype=float)
    ec = spectrum.relation(spectrum.lo)
    ej = np.clip((f01 + ec) ** 2 / (8 * ec), spectrum.lo, spectrum.hi)
    for _ in range(50):
        f, _ = spectrum(ej)
        d, _ = spectrum.derivative(ej)
        step = (f - f01) / d
        ej = np.clip(ej - step, spectrum.lo, spectrum.hi)
        if np.all(np.abs(step) <= 1e-13 * ej):
            break
    f, _ = spectrum(ej)
    if np.any(np.abs(f - f01) > 1e-9):
        return ej_from_f01(f01, spectrum.relation, spectrum.k)
    return ej


# --- out-of-plane sweeps -----------------------------------------------------

class _SweepData(NamedTuple):
    b_mt: np.ndarray
    f01: np.ndarray
    f02_half: Optional[np.ndarray]
    weight: Optional[np.ndarray] = None  # 1/sigma for the stacked residual

    def stack(self):
        if self.f02_half is None:
            return self.f01
        return np.concatenate([self.f01, self.f02_half])


def _weights(sigma, n, order, with_f2):
    """Stacked 1/sigma from per-point (n,) or per-transition (n, 2) uncertainties."""
    if sigma is None:
        return None
    s = np.asarray(sigma, dtype=float)
    s = np.column_stack([s, s]) if s.ndim == 1 else s
    if s.shape != (n, 2):
        raise FitError(f"sigma must have shape ({n},) or ({n}, 2)")
    s = s[order]
    s = s[:, :2] if with_f2 else s[:, :1]
    ok = np.isfinite(s)
    if not np.any(ok):
        return None
    if np.any(s[ok] <= 0):
        raise FitError("uncertainties must be positive")
    # points without an uncertainty get the typical one
    s = np.where(ok, s, np.median(s[ok]))
    return 1.0 / s.T.ravel()


def _record_ghz_rms(fit: FitResult, residual, data: _SweepData, rejected=None):
    """Store the rms of the unweighted residuals (GHz) in ``fit.flags["rms_ghz"]``."""
    if data.weight is None:
        fit.flags["rms_ghz"] = fit.rms
        return
    r = residual(fit.params) / data.weight
    n = data.f01.size
    keep = np.ones(n, dtype=bool)
    if rejected is not None and rejected.size:
        keep[rejected] = False
    r = r.reshape(-1, n)[:, keep]
    fit.flags["rms_ghz"] = float(np.sqrt(np.mean(r * r)))


def _sweep(points, sigma=None):
    p = np.asarray(points, dtype=float)
    if p.ndim != 2 or p.shape[1] not in (2, 3):
        raise FitError("points must be rows of (b_perp, f01[, f02_half])")
    order = np.argsort(p[:, 0], kind="stable")
    f2 = p[order, 2] if p.shape[1] == 3 else None
    if f2 is not None and np.any(~np.isfinite(f2)):
        f2 = None
    w = _weights(sigma, p.shape[0], order, f2 is not None)
    p = p[order]
    return _SweepData(1e3 * p[:, 0], p[:, 1], f2, w), order


def _spectrum_for(f01, relation, k):
    # E_J range of the sweep, padded so that LM excursions stay on the series
    lo, hi = ej_from_f01([np.min(f01), np.max(f01)], relation, k)
    return relation_spectrum(relation, k, 0.25 * lo, 2.0 * hi)


def _arch_ej(theta, b_mt):
    ej_sum, alpha, period, offset = theta
    c = np.cos(np.pi * (b_mt - offset) / period)
    a2 = alpha * alpha
    root = np.sqrt(a2 + (1 - a2) * c * c)
    ej = ej_sum * root
    s = np.sin(np.pi * (b_mt - offset) / period)
    d_sum = root
    d_alpha = ej_sum * alpha * (1 - c * c) / root
    dphase = -ej_sum * (1 - a2) * c * s / root  # d ej / d phase
    d_period = dphase * (-np.pi * (b_mt - offset) / period**2)
    d_offset = dphase * (-np.pi / period)
    return ej, np.column_stack([d_sum, d_alpha, d_period, d_offset])


def _ej_residual_and_jac(ej_fun, data: _SweepData, spectrum: RelationSpectrum):
    w = data.weight

    def residual(theta):
        ej, _ = ej_fun(theta, data.b_mt)
        f1, f2 = spectrum(ej)
        r = f1 - data.f01
        if data.f02_half is not None:
            r = np.concatenate([r, f2 - data.f02_half])
        return r if w is None else r * w

    def jac(theta):
        ej, dej = ej_fun(theta, data.b_mt)
        d1, d2 = spectrum.derivative(ej)
        J = d1[:, None] * dej
        if data.f02_half is not None:
            J = np.vstack([J, d2[:, None] * dej])
        return J if w is None else J * w[:, None]

    return residual, jac


def period_guess(b, y):
    """Dominant period of y(b) from a zero-padded FFT, refined parabolically."""
    b = np.asarray(b, dtype=float)
    y = np.asarray(y, dtype=float)
    grid = np.linspace(b.min(), b.max(), max(64, 4 * b.size))
    yi = np.interp(grid, b, y)
    yi = (yi - yi.mean()) * np.hanning(yi.size)
    n = 16 * grid.size
    spec = np.abs(np.fft.rfft(yi, n))
    freqs = np.fft.rfftfreq(n, grid[1] - grid[0])
    spec[0] = 0.0
    i = int(np.argmax(spec[1:-1])) + 1
    a, c0, c = spec[i - 1], spec[i], spec[i + 1]
    den = a - 2 * c0 + c
    shift = 0.5 * (a - c) / den if den != 0 else 0.0
    f = freqs[i] + shift * (freqs[1] - freqs[0])
    return 1.0 / f if f > 0 else np.inf


@dataclass
class ArchFit:
    squid: SquidParams
    fit: FitResult

    @property
    def ej_large(self):
        return self.squid.ej_large

    @property
    def ej_small(self):
        return self.squid.ej_small


def _wrap_offset(offset, period):
    return (offset + 0.5 * period) % period - 0.5 * period


def fit_squid_arch(points, relation: EcEjRelation, k=DEFAULT_TRUNCATION, period_hint=None,
                   clip_sigma: Optional[float] = None, sigma=None) -> ArchFit:
    """SQUID arch fit: (E_J,sum, alpha, period, offset) with E_C tied to E_J.

    Gap suppression by the perpendicular field is neglected (the SQUID period
    is far below the perpendicular critical field).  ``period_hint`` (T)
    replaces the FFT initialiser.  ``sigma`` (GHz, per point or per point and
    transition) weights the residuals; without it all points count equally.
    """
    data, order = _sweep(points, sigma)
    span = np.ptp(data.b_mt)
    spectrum = _spectrum_for(data.f01, relation, k)
    ej_obs = _ej_from_f01_fast(data.f01, spectrum)
    top, bottom = ej_obs.max(), ej_obs.min()
    if period_hint is not None:
        p0 = 1e3 * period_hint
    else:
        p0 = period_guess(data.b_mt, data.f01)
        if not np.isfinite(p0) or p0 > 4 * span:
            p0 = 2 * span
    if span < 0.5 * p0 * (1 - 1e-9):
        raise FitError(f"sweep spans {span:.3g} mT, less than half of the ~{p0:.3g} mT period; "
                       "the period is unidentifiable")
    residual, jac = _ej_residual_and_jac(_arch_ej, data, spectrum)
    best = None
    i_top = int(np.argmax(data.f01))
    starts = []
    for pf in (1.0, 0.9, 1.1):
        for alpha in (max(min(bottom / top, 0.99), 0.01), 0.5):
            starts.append((top, alpha, p0 * pf, data.b_mt[i_top]))
    bounds = ([1e-6, 0.0, 0.05 * p0, -np.inf], [np.inf, 1.0, 20 * p0, np.inf])
    agree = 0
    for x0 in starts:
        res = lsq_minimize(residual, x0, jac=jac, bounds=bounds,
                           names=("ej_sum", "asymmetry_alpha", "period_mt", "offset_mt"))
        if best is not None and res.converged and abs(res.cost - best.cost) <= 1e-8 * best.cost + 1e-30:
            agree += 1
        if best is None or res.cost < best.cost - 1e-15:
            best = res
        # an exact fit, or two starts landing in the same minimum, ends the search
        if best.rms < 1e-9 or agree:
            break
    rejected = np.zeros(0, dtype=int)
    if clip_sigma is not None:
        best, rejected = _clip_refit(best, residual, jac, bounds, data, clip_sigma)
    _record_ghz_rms(best, residual, data, rejected)
    ej_sum, alpha, period, offset = best.params
    offset = _wrap_offset(offset, period)
    best.params = np.array([ej_sum, alpha, period, offset])
    best.rejected = order[rejected] if rejected.size else rejected
    squid = SquidParams(float(ej_sum), float(np.clip(alpha, 0, 1)), 1e-3 * float(period), 1e-3 * float(offset))
    return ArchFit(squid, best)


def _clip_refit(best, residual, jac, bounds, data, clip_sigma):
    n = data.f01.size
    res = best.residuals
    per_point = np.abs(res[:n]) if res.size == n else np.maximum(np.abs(res[:n]), np.abs(res[n:]))
    sigma = 1.4826 * np.median(np.abs(res - np.median(res)))
    if sigma == 0:
        return best, np.zeros(0, dtype=int)
    bad = per_point > clip_sigma * sigma
    if not np.any(bad):
        return best, np.zeros(0, dtype=int)
    keep = np.concatenate([~bad, ~bad]) if res.size == 2 * n else ~bad

    def r2(t):
        return residual(t)[keep]

    def j2(t):
        return jac(t)[keep]

    refit = lsq_minimize(r2, best.params, jac=j2, bounds=bounds, names=best.names)
    return refit, np.flatnonzero(bad)


@dataclass
class SingleSweepFit:
    ej_max: float
    offset: float  # T
    ec: float
    fit: FitResult


def fit_single_sweep(points, relation: Optional[EcEjRelation], b_perp_crit_eff,
                     k=DEFAULT_TRUNCATION, sigma=None) -> SingleSweepFit:
    """Single-junction perpendicular sweep: E_J,max sqrt(1 - ((B - B_off)/B_c,eff)^2).

    ``b_perp_crit_eff`` (T) is the effective perpendicular critical field at
    the sweep's in-plane field.  With ``relation=None`` E_C is a free
    constant and f02/2 data are required.  ``sigma`` weights as in
    :func:`fit_squid_arch`.
    """
    data, _ = _sweep(points, sigma)
    bc = 1e3 * b_perp_crit_eff
    if np.max(np.abs(data.b_mt)) >= bc:
        raise FitError("sweep reaches the effective perpendicular critical field")
    i_top = int(np.argmax(data.f01))

    def ej_fun(theta, b):
        ej_max, off = theta[0], theta[1]
        x = (b - off) / bc
        root = np.sqrt(1 - x * x)
        return ej_max * root, np.column_stack([root, ej_max * x / (bc * root)])

    if relation is not None:
        spectrum = _spectrum_for(data.f01, relation, k)
        ej0 = float(_ej_from_f01_fast(data.f01[i_top:i_top + 1], spectrum)[0])
        residual, jac = _ej_residual_and_jac(ej_fun, data, spectrum)
        fit = lsq_minimize(residual, [ej0, data.b_mt[i_top]], jac=jac,
                           bounds=([1e-6, -bc], [np.inf, bc]), names=("ej_max", "offset_mt"))
        _record_ghz_rms(fit, residual, data)
        ec = float(relation(fit.params[0]))
    else:
        if data.f02_half is None:
            raise FitError("free E_C needs f02/2 data")
        ej0, ec0 = fit_ej_ec_from_pair(data.f01[i_top], data.f02_half[i_top], k)

        def residual(theta):
            ej, _ = ej_fun(theta, data.b_mt)
            f1, f2 = transmon_transitions(ej, np.full_like(ej, theta[2]), 0.0, k)
            r = np.concatenate([f1 - data.f01, f2 - data.f02_half])
            return r if data.weight is None else r * data.weight

        fit = lsq_minimize(residual, [ej0, data.b_mt[i_top], ec0],
                           bounds=([1e-6, -bc, 1e-6], [np.inf, bc, np.inf]),
                           names=("ej_max", "offset_mt", "ec"))
        _record_ghz_rms(fit, residual, data)
        ec = float(fit.params[2])
    return SingleSweepFit(float(fit.params[0]), 1e-3 * float(fit.params[1]), ec, fit)


# --- E_J(B_par) --------------------------------------------------------------

@dataclass
class FieldCurveFit:
    junctions: dict  # name -> JunctionFieldParams
    b_crit_par: float
    fit: FitResult


def _field_guess(b, ej, bc):
    # small-field expansion ej ~ ej0 (1 - b^2/(2 bc^2) - pi^2 b^2 u^2 / 6), u = 1/b_phi0
    i0 = int(np.argmin(np.abs(b)))
    return ej[i0]


def fit_ej_field_curve(points, b_crit_shared=None, b_crit_guess=1.0) -> FieldCurveFit:
    """Fit the gap-suppression times |sinc| model to E_J(B_par).

    ``points`` is either an (n, 2) array of (b_par, ej) for one junction or
    a mapping ``{name: (n, 2) array}`` for a joint fit.  ``b_crit_shared``
    holds the critical field fixed (T); ``None`` fits one shared value.
    Internally 1/b_phi0 is fitted, so a pure gap-suppression curve drives it
    to zero instead of to infinity.
    """
    sets = dict(points) if isinstance(points, Mapping) else {"junction": points}
    names, blocks = [], []
    for name, arr in sets.items():
        a = np.asarray(arr, dtype=float)
        if a.ndim != 2 or a.shape[1] != 2 or a.shape[0] < (4 if b_crit_shared is None else 3):
            raise FitError(f"{name}: need at least 4 (b_par, ej) points")
        names.append(name)
        blocks.append(a)
    b_all = np.concatenate([blk[:, 0] for blk in blocks])
    ej_all = np.concatenate([blk[:, 1] for blk in blocks])
    bmax = np.max(np.abs(b_all))
    for name, blk in zip(names, blocks):
        if np.ptp(blk[:, 1]) <= 1e-4 * np.max(np.abs(blk[:, 1])):
            raise FitError(f"{name}: E_J does not vary over the sweep; all points are far below "
                           "both field scales")
    n_j = len(blocks)
    seg = np.repeat(np.arange(n_j), [blk.shape[0] for blk in blocks])
    fit_bc = b_crit_shared is None
    bc_fixed = None if fit_bc else float(b_crit_shared)
    if not fit_bc and bmax >= bc_fixed:
        raise FitError("data reach the fixed critical field")

    def unpack(theta):
        ej0 = theta[0:2 * n_j:2]
        u = theta[1:2 * n_j:2]
        bc = theta[2 * n_j] if fit_bc else bc_fixed
        return ej0, u, bc

    def model(theta):
        ej0, u, bc = unpack(theta)
        gl = np.sqrt(np.clip(1 - (b_all / bc) ** 2, 0, None))
        return ej0[seg] * gl * np.abs(np.sinc(b_all * u[seg]))

    def residual(theta):
        return model(theta) - ej_all

    def jac(theta):
        ej0, u, bc = unpack(theta)
        J = np.zeros((b_all.size, theta.size))
        gl = np.sqrt(np.clip(1 - (b_all / bc) ** 2, 1e-300, None))
        x = b_all * u[seg]
        s = np.sinc(x)
        with np.errstate(invalid="ignore", divide="ignore"):
            ds = np.where(x == 0, 0.0, (np.cos(np.pi * x) - s) / x)
        rows = np.arange(b_all.size)
        J[rows, 2 * seg] = gl * np.abs(s)
        J[rows, 2 * seg + 1] = ej0[seg] * gl * np.sign(s) * ds * b_all
        if fit_bc:
            J[:, 2 * n_j] = ej0[seg] * np.abs(s) * (b_all**2 / bc**3) / gl
        return J

    lo = [0.0, 0.0] * n_j + ([bmax * (1 + 1e-9)] if fit_bc else [])
    hi = [np.inf, np.inf] * n_j + ([np.inf] if fit_bc else [])
    best = None
    for u0 in (0.0, 0.5, 1.0, 1.5, 2.0):
        for bc0 in ((b_crit_guess, 1.5 * b_crit_guess) if fit_bc else (None,)):
            x0 = []
            for blk in blocks:
                x0 += [_field_guess(blk[:, 0], blk[:, 1], bc0), u0]
            if fit_bc:
                x0.append(max(bc0, 1.05 * bmax))
            pnames = [f"{p}[{n}]" for n in names for p in ("ej0", "inv_b_phi0")]
            if fit_bc:
                pnames.append("b_crit_par")
            res = lsq_minimize(residual, x0, jac=jac, bounds=(lo, hi), names=pnames)
            if best is None or res.cost < best.cost - 1e-18:
                best = res
    ej0, u, bc = unpack(best.params)
    out = {}
    for i, name in enumerate(names):
        out[name] = JunctionFieldParams(float(ej0[i]), float(bc), float(1.0 / u[i]) if u[i] > 0 else math.inf)
    return FieldCurveFit(out, float(bc), best)


# --- alignment ---------------------------------------------------------------

@dataclass
class AlignmentFit:
    angle: float  # rad
    correction_slope: float  # B_x to add per unit B_y
    slope: float
    intercept: float
    excluded: np.ndarray
    jumps_detected: bool


def fit_alignment(grid, period=None, jump_threshold=0.25, max_iter=20) -> AlignmentFit:
    """Straight-line fit of arch offset versus B_y; angle = arctan(slope).

    Rows are (b_x, b_y, arch_offset) in tesla.  With a known SQUID
    ``period`` residuals are wrapped into one period and rows whose wrapped
    residual exceeds ``jump_threshold`` periods are treated as flux jumps and
    excluded.
    """
    g = np.asarray(grid, dtype=float)
    if g.ndim != 2 or g.shape[1] != 3:
        raise FitError("alignment rows must be (b_x, b_y, arch_offset)")
    by, off = g[:, 1], g[:, 2]
    if np.unique(by).size < 3:
        raise FitError("need at least 3 distinct b_y values")
    slope, intercept = siegelslopes(off, by)
    keep = np.ones(by.size, dtype=bool)
    for _ in range(max_iter):
        res = off - (intercept + slope * by)
        if period is not None:
            res = _wrap_offset(res, period)
            new = np.abs(res) <= jump_threshold * period
        else:
            mad = 1.4826 * np.median(np.abs(res - np.median(res)))
            new = np.abs(res) <= max(3.0 * mad, 1e-15)
        if new.sum() < 2:
            raise FitError("too few rows survive flux-jump rejection")
        # fit the unwrapped offsets of surviving rows
        y = intercept + slope * by[new] + res[new]
        A = np.column_stack([by[new], np.ones(new.sum())])
        (slope, intercept), *_ = np.linalg.lstsq(A, y, rcond=None)
        if np.array_equal(new, keep):
            break
        keep = new
    excluded = np.flatnonzero(~keep)
    return AlignmentFit(float(math.atan(slope)), float(-slope), float(slope), float(intercept),
                        excluded, bool(excluded.size))


# --- B0 offset ---------------------------------------------------------------

@dataclass
class B0Fit:
    b0: float  # T
    gamma0: float  # 1/us
    p: float  # 1/us per mT
    reliable: bool
    fit: FitResult


def fit_b0_offset(points, vp_prior: VortexParams) -> B0Fit:
    """Fit 1/T1 = Gamma0 + sqrt(p^2 (B - B0)^2 + q^2) - q with q held at the prior."""
    p_ = np.asarray(points, dtype=float)
    if p_.ndim != 2 or p_.shape[1] != 2 or p_.shape[0] < 4:
        raise FitError("need at least 4 (b_perp, t1) points")
    p_ = p_[np.argsort(p_[:, 0], kind="stable")]
    b_mt = 1e3 * p_[:, 0]
    gamma = 1.0 / p_[:, 1]
    q = vp_prior.q
    i = int(np.argmin(gamma))
    reliable = 0 < i < b_mt.size - 1

    def residual(theta):
        g0, p, b0 = theta
        d = b_mt - b0
        pb2 = (p * d) ** 2
        return g0 + pb2 / (np.sqrt(pb2 + q * q) + q) - gamma

    def jac(theta):
        g0, p, b0 = theta
        d = b_mt - b0
        root = np.sqrt((p * d) ** 2 + q * q)
        return np.column_stack([np.ones_like(d), p * d * d / root, -p * p * d / root])

    x0 = [gamma[i], vp_prior.p0, b_mt[i]]
    fit = lsq_minimize(residual, x0, jac=jac, bounds=([-np.inf, 1e-9, -np.inf], [np.inf, np.inf, np.inf]),
                       names=("gamma0", "p", "b0_mt"))
    b0 = float(fit.params[2])
    if not (b_mt[0] < b0 < b_mt[-1]):
        reliable = False
    fit.flags["peak_at_boundary"] = not reliable
    return B0Fit(1e-3 * b0, float(fit.params[0]), float(fit.params[1]), reliable, fit)


def fit_b0_trend(b_par, b0):
    """Angle (rad) of the line B0(B_par); slope from least squares."""
    b_par = np.asarray(b_par, dtype=float)
    b0 = np.asarray(b0, dtype=float)
    if np.unique(b_par).size < 2:
        raise FitError("need at least two in-plane fields")
    slope, _ = np.polyfit(b_par, b0, 1)
    return float(math.atan(slope))


# --- charge-parity envelope --------------------------------------------------

@dataclass
class ParitySplitFit:
    ej: float
    ec: float
    f01_even: float
    f01_odd: float
    underconstrained: bool
    method: str


def fit_parity_split(peaks, relation: Optional[EcEjRelation] = None, k=DEFAULT_TRUNCATION,
                     resolution=1e-3, f02_half=None) -> ParitySplitFit:
    """(E_J, E_C) whose n_g = 0 and n_g = 1/2 branches bound every measured peak.

    With a relation, E_J is the largest value whose lower branch still lies
    at or below the lowest peak, subject to the upper branch reaching the
    highest peak.  Without one, both extremal peaks are matched by the two
    branches.  Peaks spread less than ``resolution`` (GHz) only show one
    branch; the result is then flagged as under-constrained and falls back
    to a pair inversion (if ``f02_half`` is given) or the relation.
    """
    pk = np.asarray(peaks, dtype=float)
    f = pk[:, 1] if pk.ndim == 2 else pk
    if f.size < 1:
        raise FitError("no peaks")
    lo, hi = float(f.min()), float(f.max())
    if hi - lo < resolution:
        mean = float(f.mean())
        if f02_half is not None:
            ej, ec = fit_ej_ec_from_pair(mean, f02_half, k)
            method = "pair"
        elif relation is not None:
            ej = float(ej_from_f01([mean], relation, k)[0])
            ec = float(relation(ej))
            method = "relation"
        else:
            raise FitError("single-branch peaks need f02_half or a relation")
        e, o = parity_split_spectrum(ej, ec, k)
        return ParitySplitFit(ej, ec, e, o, True, method)

    if relation is not None:
        def branches(ej):
            return transmon_transitions(np.array([ej, ej]), relation(np.array([ej, ej])),
                                        np.array([0.0, 0.5]), k)[0]

        def lower_gap(ej):
            return branches(ej)[1] - lo

        hi_ej = 4.0
        while lower_gap(hi_ej) < 0:
            hi_ej *= 2
        ej = brentq(lower_gap, 1e-6, hi_ej, xtol=1e-13, rtol=1e-14)
        e, o = branches(ej)
        if e < hi - 1e-9:
            raise FitError("peaks outside any achievable envelope: upper branch cannot reach the "
                           f"highest peak ({e:.6g} < {hi:.6g} GHz)")
        return ParitySplitFit(float(ej), float(relation(ej)), float(e), float(o), False, "envelope")

    target = np.array([hi, lo])

    def residual(theta):
        ej, ec = theta
        return transmon_transitions(np.array([ej, ej]), np.array([ec, ec]), np.array([0.0, 0.5]), k)[0] - target

    # start from the mean frequency with a typical charging energy
    ec0 = 0.3
    ej0 = (0.5 * (lo + hi) + ec0) ** 2 / (8 * ec0)
    res = lsq_minimize(residual, [ej0, ec0], bounds=([1e-6, 1e-6], [np.inf, np.inf]), names=("ej", "ec"))
    method = "envelope"
    if not res.converged or res.rms > 1e-9:
        res = nelder_mead_minimize(lambda t: float(np.sum(residual(t) ** 2)), res.params,
                                   bounds=([1e-6, 1e-6], [np.inf, np.inf]), names=("ej", "ec"))
        method = "envelope-simplex"
        if res.rms > 1e-6:
            raise FitError("peaks outside any achievable envelope")
    ej, ec = map(float, res.params)
    e, o = parity_split_spectrum(ej, ec, k)
    return ParitySplitFit(ej, ec, e, o, False, method)


__all__ = [
    "ArchFit", "AlignmentFit", "B0Fit", "ConvergenceError", "DEFAULT_RELATION", "EcEjRelation",
    "FieldCurveFit", "FitError", "ParitySplitFit", "RelationSpectrum", "SingleSweepFit", "effective_perp_critical_field",
    "ej_from_f01", "fit_alignment", "fit_b0_offset", "fit_b0_trend", "fit_ec_ej_correlation",
    "fit_ej_ec_from_pair", "fit_ej_ec_pairs", "fit_ej_field_curve", "fit_parity_split",
    "fit_single_sweep", "fit_squid_arch", "period_guess", "relation_spectrum",
]
