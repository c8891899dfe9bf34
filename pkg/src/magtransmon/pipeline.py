"""Dataset-level stages chained by the command line: spectrum, arches, field curves, alignment, budgets."""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace
from typing import Dict, List, Optional

import numpy as np

from . import dataset as ds
from .coherence import CoherenceEnvironment, coherence_budget, sensitivity, sensitivity_regression, pure_dephasing
from .cpb import DEFAULT_TRUNCATION, transmon_transitions
from .fields import effective_perp_critical_field, ej_inplane
from .fits import (EcEjRelation, FitError, fit_alignment, fit_ec_ej_correlation, fit_ej_ec_pairs,
                   fit_ej_field_curve, fit_single_sweep, fit_squid_arch)
from .synth import SINGLE, SQUID, ScenarioConfig, single_ej, squid_ej, _squid_at

JUNCTIONS = ("single", "squid_jj1", "squid_jj2")


@dataclass(frozen=True)
class Tolerances:
    pair_tol: float = 1e-11  # GHz, pair inversion residual
    relation_band: float = 0.010  # GHz
    clip_sigma: float = 3.0
    arch_clip_sigma: Optional[float] = None
    max_rms: float = 0.05  # GHz; arch fits above this are reported as non-convergent


TOLERANCE_PROFILES = {
    "strict": Tolerances(pair_tol=1e-12, max_rms=0.01),
    "default": Tolerances(),
    "robust": Tolerances(arch_clip_sigma=4.0, max_rms=0.2),
}


def _pairs_by_point(spec: ds.Table, labels=("f01", "f02_half")):
    """{(device, sweep_id, b_par, b_perp): {label: frequency}} for the requested labels."""
    out: Dict[tuple, dict] = {}
    for dev, sid, bpar, bperp, lab, f, unc, *_ in spec.rows():
        if lab in labels:
            d = out.setdefault((dev, int(sid), float(bpar), float(bperp)), {})
            d[lab] = float(f)
            d["sigma_" + lab] = float(unc)
    return out


def fit_spectrum(spec: ds.Table, k=DEFAULT_TRUNCATION, tol: Tolerances = Tolerances()):
    """Invert every (f01, f02/2) pair and fit the E_C(E_J) relation through all of them."""
    pts = _pairs_by_point(spec)
    keys = [key for key, v in pts.items() if "f01" in v and "f02_half" in v]
    if not keys:
        raise FitError("dataset holds no complete (f01, f02_half) pairs")
    f1 = np.array([pts[key]["f01"] for key in keys])
    f2 = np.array([pts[key]["f02_half"] for key in keys])
    ej, ec = fit_ej_ec_pairs(f1, f2, k, tol=tol.pair_tol, strict=False)
    ok = np.isfinite(ej)
    relation = fit_ec_ej_correlation(np.column_stack([ej[ok], ec[ok]]), band=tol.relation_band,
                                     clip_sigma=tol.clip_sigma)
    pairs = {
        "device": [key[0] for key in keys], "sweep_id": [key[1] for key in keys],
        "b_par_t": [key[2] for key in keys], "b_perp_t": [key[3] for key in keys],
        "ej_ghz": ej, "ec_ghz": ec,
    }
    return pairs, relation


def _sweeps(spec: ds.Table):
    """{sweep_id: (device, b_par, (n, 3) array of b_perp, f01, f02_half, (n, 2) sigma or None)}."""
    pts = _pairs_by_point(spec)
    groups: Dict[int, list] = {}
    meta = {}
    for (dev, sid, bpar, bperp), v in pts.items():
        if "f01" not in v:
            continue
        groups.setdefault(sid, []).append((bperp, v["f01"], v.get("f02_half", math.nan),
                                           v["sigma_f01"], v.get("sigma_f02_half", math.nan)))
        meta[sid] = (dev, bpar)
    out = {}
    for sid in sorted(groups):
        arr = np.array(sorted(groups[sid]))
        sigma = arr[:, 3:] if np.any(np.isfinite(arr[:, 3:])) else None
        out[sid] = (meta[sid][0], meta[sid][1], arr[:, :3], sigma)
    return out


def _fit_one_sweep(args):
    sid, dev, bpar, arr, sigma, relation, b_perp_crit, b_crit_prior, period_hint, k, tol, perp_law = args
    try:
        if dev == SQUID:
            res = fit_squid_arch(arr, relation, k, period_hint=period_hint, clip_sigma=tol.arch_clip_sigma,
                                 sigma=sigma)
            ok = res.fit.converged and res.fit.flags["rms_ghz"] <= tol.max_rms
            return [dict(sweep_id=sid, device=dev, b_par_t=bpar, junction="squid_jj1", ej_ghz=res.ej_large,
                         period_t=res.squid.b_phi0_squid, offset_t=res.squid.b_perp_offset,
                         rms_ghz=res.fit.flags["rms_ghz"], converged=ok),
                    dict(sweep_id=sid, device=dev, b_par_t=bpar, junction="squid_jj2", ej_ghz=res.ej_small,
                         period_t=res.squid.b_phi0_squid, offset_t=res.squid.b_perp_offset,
                         rms_ghz=res.fit.flags["rms_ghz"], converged=ok)]
        bc = effective_perp_critical_field(b_perp_crit, b_crit_prior, bpar, perp_law)
        res = fit_single_sweep(arr, relation, bc, k, sigma=sigma)
        ok = res.fit.converged and res.fit.flags["rms_ghz"] <= tol.max_rms
        return [dict(sweep_id=sid, device=dev, b_par_t=bpar, junction="single", ej_ghz=res.ej_max,
                     period_t=math.nan, offset_t=res.offset, rms_ghz=res.fit.flags["rms_ghz"], converged=ok)]
    except FitError as exc:
        return [dict(sweep_id=sid, device=dev, b_par_t=bpar, junction="single" if dev == SINGLE else "squid",
                     ej_ghz=math.nan, period_t=math.nan, offset_t=math.nan, rms_ghz=math.nan,
                     converged=False, error=str(exc))]


def fit_arches(spec: ds.Table, relation: EcEjRelation, *, b_perp_crit=0.033, b_crit_prior=1.03,
               period_hint=None, k=DEFAULT_TRUNCATION, tol: Tolerances = Tolerances(), jobs=1,
               perp_law="linear") -> List[dict]:
    """E_J per junction and in-plane field from every perpendicular sweep."""
    tasks = [(sid, dev, bpar, arr, sigma, relation, b_perp_crit, b_crit_prior, period_hint, k, tol, perp_law)
             for sid, (dev, bpar, arr, sigma) in _sweeps(spec).items()]
    if jobs > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_fit_one_sweep, tasks))
    else:
        results = [_fit_one_sweep(t) for t in tasks]
    rows = [row for rows in results for row in rows]
    label_squid_junctions(rows)
    return rows


def _squid_pairs(rows):
    """{sweep_id: (jj1 row, jj2 row)} for SQUID sweeps with both values finite, ordered by b_par."""
    by_sid: Dict[int, dict] = {}
    for r in rows:
        if r["junction"] in ("squid_jj1", "squid_jj2") and np.isfinite(r["ej_ghz"]):
            by_sid.setdefault(r["sweep_id"], {})[r["junction"]] = r
    pairs = {sid: (d["squid_jj1"], d["squid_jj2"]) for sid, d in by_sid.items() if len(d) == 2}
    return dict(sorted(pairs.items(), key=lambda kv: kv[1][0]["b_par_t"]))


def _swap(r1, r2):
    r1["ej_ghz"], r2["ej_ghz"] = r2["ej_ghz"], r1["ej_ghz"]
    for r in (r1, r2):
        r["labels_swapped"] = not r.get("labels_swapped", False)


def label_squid_junctions(rows):
    """Assign the two SQUID junction energies to jj1/jj2 by continuity in b_par (in place).

    An arch only determines the larger and the smaller E_J; once Fraunhofer
    suppression makes the zero-field-larger junction the smaller one the
    labels would swap.  Each field point takes the assignment closest to a
    linear extrapolation of the two preceding ones.
    """
    hist = {"squid_jj1": [], "squid_jj2": []}
    for r1, r2 in _squid_pairs(rows).values():
        b = r1["b_par_t"]
        if len(hist["squid_jj1"]) >= 1:
            pred = []
            for name in ("squid_jj1", "squid_jj2"):
                h = hist[name]
                if len(h) >= 2 and h[-1][0] != h[-2][0]:
                    (b0, e0), (b1, e1) = h[-2], h[-1]
                    pred.append(e1 + (e1 - e0) * (b - b1) / (b1 - b0))
                else:
                    pred.append(h[-1][1])
            keep = abs(r1["ej_ghz"] - pred[0]) + abs(r2["ej_ghz"] - pred[1])
            swap = abs(r2["ej_ghz"] - pred[0]) + abs(r1["ej_ghz"] - pred[1])
            if swap < keep:
                _swap(r1, r2)
        hist["squid_jj1"].append((b, r1["ej_ghz"]))
        hist["squid_jj2"].append((b, r2["ej_ghz"]))
    return rows


def _field_sets(rows):
    sets = {}
    for name in JUNCTIONS:
        pts = [(r["b_par_t"], r["ej_ghz"]) for r in rows
               if r["junction"] == name and r["converged"] and np.isfinite(r["ej_ghz"])]
        if pts:
            sets[name] = np.array(sorted(pts))
    if not sets:
        raise FitError("no converged E_J values to fit")
    return sets


def fit_field(rows: List[dict], b_crit_shared=None, b_crit_guess=1.0, max_relabel=5):
    """Joint fit of the in-plane model over every junction in ``rows``.

    SQUID field points whose jj1/jj2 assignment the fitted model contradicts
    are relabelled in ``rows`` and the fit is repeated.
    """
    fit = fit_ej_field_curve(_field_sets(rows), b_crit_shared=b_crit_shared, b_crit_guess=b_crit_guess)
    if not {"squid_jj1", "squid_jj2"} <= set(fit.junctions):
        return fit
    for _ in range(max_relabel):
        p1, p2 = fit.junctions["squid_jj1"], fit.junctions["squid_jj2"]
        changed = False
        for r1, r2 in _squid_pairs(rows).values():
            b = r1["b_par_t"]
            if abs(b) >= fit.b_crit_par:
                continue
            m1, m2 = float(ej_inplane(p1, b)), float(ej_inplane(p2, b))
            if (r2["ej_ghz"] - m1) ** 2 + (r1["ej_ghz"] - m2) ** 2 < (r1["ej_ghz"] - m1) ** 2 + (r2["ej_ghz"] - m2) ** 2:
                _swap(r1, r2)
                changed = True
        if not changed:
            break
        fit = fit_ej_field_curve(_field_sets(rows), b_crit_shared=b_crit_shared, b_crit_guess=b_crit_guess)
    return fit


def run_chain(spec: ds.Table, *, b_crit_shared=None, tol: Tolerances = Tolerances(), k=DEFAULT_TRUNCATION,
              b_perp_crit=0.033, b_crit_prior=1.03, period_hint=None):
    """fit-spectrum, fit-arch and fit-field in sequence; returns (relation, arch rows, field fit)."""
    _, relation = fit_spectrum(spec, k, tol)
    rows = fit_arches(spec, relation, b_perp_crit=b_perp_crit, b_crit_prior=b_crit_prior,
                      period_hint=period_hint, k=k, tol=tol)
    return relation, rows, fit_field(rows, b_crit_shared)


def align(table: ds.Table, period=None):
    if period is None and "squid_period_t" in table.meta:
        period = float(table.meta["squid_period_t"])
    grid = np.column_stack([table["b_x_t"], table["b_y_t"], table["arch_offset_t"]])
    return fit_alignment(grid, period=period)


# --- budgets -----------------------------------------------------------------

def device_point(cfg: ScenarioConfig, device, b_par, b_perp):
    """(ej, ec, f01, anharmonicity, |df01/dB_perp| in GHz/mT) from the scenario's device models."""
    if device == SQUID:
        ej = float(squid_ej(cfg, b_par, b_perp))
        sens = float(sensitivity(_squid_at(cfg, b_par), cfg.relation, b_perp, cfg.k)) * 1e-3
    else:
        ej = float(single_ej(cfg, b_par, b_perp))
        h = 1e-6
        fp = transmon_transitions(float(single_ej(cfg, b_par, b_perp + h)),
                                  float(cfg.relation(single_ej(cfg, b_par, b_perp + h))), 0.0, cfg.k)[0]
        fm = transmon_transitions(float(single_ej(cfg, b_par, b_perp - h)),
                                  float(cfg.relation(single_ej(cfg, b_par, b_perp - h))), 0.0, cfg.k)[0]
        sens = abs(fp - fm) / (2 * h) * 1e-3
    ec = float(cfg.relation(ej))
    f01, f2h = transmon_transitions(ej, ec, 0.0, cfg.k)
    return ej, ec, f01, 2 * (f2h - f01), sens


def budget_rows(cfg: ScenarioConfig, points, env: Optional[CoherenceEnvironment] = None,
                with_charge_dispersion=True) -> List[dict]:
    """Channel-resolved rates at each (device, b_par, b_perp) point."""
    env = env or cfg.coherence
    zero = {d: device_point(cfg, d, 0.0, cfg.squid_offset if d == SQUID else 0.0)[2] for d in (SINGLE, SQUID)}
    out = []
    for device, b_par, b_perp in points:
        ej, ec, f01, anh, sens = device_point(cfg, device, b_par, b_perp)
        # the vortex-loss minimum moves along the B0 axis with the in-plane field
        e = replace(env, vortex=replace(env.vortex, b0_offset=vortex_free_field(cfg, b_par)))
        bud = coherence_budget(e, ej=ej, ec=ec, f01=f01, anharmonicity=anh, b_par=b_par, b_perp=b_perp,
                               f01_zero=zero[device], sensitivity_ghz_per_mt=sens,
                               with_charge_dispersion=with_charge_dispersion)
        row = dict(device=device, b_par_t=b_par, b_perp_t=b_perp, f01_ghz=f01, ej_ghz=ej, ec_ghz=ec,
                   sensitivity_ghz_per_mt=sens)
        row.update({f"gamma_{k}_per_us": v for k, v in bud.relaxation.items()})
        row["gamma_photon_shot_noise_per_us"] = bud.dephasing_echo["photon_shot_noise"]
        row["gamma_slow_field_noise_per_us"] = bud.dephasing_ramsey["slow_field_noise"]
        row.update(t1_us=bud.t1, t2_echo_us=bud.t2_echo, t2_star_us=bud.t2_ramsey,
                   charge_dispersion_ghz=bud.charge_dispersion)
        out.append(row)
    return out


def vortex_free_field(cfg: ScenarioConfig, b_par):
    """B0: the perpendicular field of maximal T1, drifting along the vortex axis with ``b_par``."""
    return math.tan(cfg.b0_angle) * b_par + 0.0  # no signed zero at b_par = 0


def sweetspots(cfg: ScenarioConfig, b_par, near=None):
    """(top, bottom) sweet-spot perpendicular fields of the SQUID at ``b_par``.

    With ``near`` the pair is shifted by whole periods to the top sweetspot
    closest to that field.
    """
    top = cfg.squid_offset
    if near is not None:
        top += cfg.squid_period * round((near - top) / cfg.squid_period)
    return top, top + 0.5 * cfg.squid_period


def operating_points(cfg: ScenarioConfig, b_pars):
    """(device, b_par, b_perp) at which coherence is quoted: B0 for the single junction,
    the SQUID sweetspots nearest B0."""
    pts = []
    for b in b_pars:
        b0 = vortex_free_field(cfg, b)
        top, bottom = sweetspots(cfg, b, near=b0)
        pts += [(SQUID, b, top), (SQUID, b, bottom), (SINGLE, b, b0)]
    return pts


def dephasing_regression(coh: ds.Table, cfg: ScenarioConfig):
    """Per in-plane field: Ramsey Gamma_phi versus |df01/dB_perp| for the SQUID."""
    out = []
    sel = coh.select(coh["device"] == SQUID)
    for b_par in sorted(set(sel["b_par_t"].tolist())):
        s = sel.select(sel["b_par_t"] == b_par)
        good = np.isfinite(s["t1_us"]) & np.isfinite(s["t2_star_us"])
        if good.sum() < 3:
            continue
        sq = _squid_at(cfg, b_par)
        sens = np.asarray(sensitivity(sq, cfg.relation, s["b_perp_t"][good], cfg.k)) * 1e-3
        gphi = np.array([pure_dephasing(t2, t1).rate for t2, t1 in zip(s["t2_star_us"][good], s["t1_us"][good])])
        try:
            tr = sensitivity_regression(np.column_stack([sens, gphi]))
        except ValueError:
            continue
        out.append(dict(b_par_t=b_par, a=tr.a, a_err=tr.a_err, b=tr.b, b_err=tr.b_err,
                        sensitivity=sens, gamma_phi=gphi))
    return out


__all__ = ["TOLERANCE_PROFILES", "Tolerances", "align", "budget_rows", "dephasing_regression",
           "device_point", "fit_arches", "fit_field", "fit_spectrum", "label_squid_junctions", "operating_points", "run_chain",
           "sweetspots", "vortex_free_field"]
