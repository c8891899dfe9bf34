"""Synthetic spectroscopy, coherence and alignment data from ground-truth models.

Every random draw comes from a generator spawned from one
:class:`numpy.random.SeedSequence`, one child per sweep, so a seed fixes the
output bit for bit and sweeps can be generated independently.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Optional, Tuple

import numpy as np

from . import dataset as ds
from .coherence import CoherenceEnvironment, VortexParams, coherence_budget, sensitivity
from .cpb import DEFAULT_TRUNCATION, charge_dispersion, transmon_transitions
from .dressed import CavityParams, QutritLevels, build_and_solve_jc
from .fields import (JunctionFieldParams, SquidParams, effective_perp_critical_field,
                     ej_inplane, ej_perp_suppression, ej_squid)
from .fits import DEFAULT_RELATION, EcEjRelation

SINGLE, SQUID = "single", "squid"


@dataclass(frozen=True)
class NoiseConfig:
    freq_jitter: float = 0.0  # GHz, Gaussian sigma
    t1_lognormal_sigma: float = 0.0
    t2_lognormal_sigma: float = 0.0
    outlier_fraction: float = 0.0
    outlier_span: float = 0.1  # GHz, half-width of the uniform substitution
    flux_jump_probability: float = 0.0  # per SQUID sweep point
    alignment_jitter: float = 0.0  # T
    alignment_jump_fraction: float = 0.0

    def __post_init__(self):
        for k, v in self.__dict__.items():
            if v < 0:
                raise ValueError(f"noise level {k} must be non-negative")
        if self.outlier_fraction > 1 or self.alignment_jump_fraction > 1:
            raise ValueError("fractions must not exceed 1")


@dataclass(frozen=True)
class ScenarioConfig:
    single: JunctionFieldParams = JunctionFieldParams(24.7, 1.03, 0.83, 231e-9)
    squid_jj1: JunctionFieldParams = JunctionFieldParams(23.5, 1.03, 0.90, 206e-9)
    squid_jj2: JunctionFieldParams = JunctionFieldParams(6.0, 1.03, 1.65, 122e-9)
    squid_period: float = 0.43e-3  # T
    squid_offset: float = 0.0  # T
    relation: EcEjRelation = DEFAULT_RELATION
    b_perp_crit: float = 0.033  # T, zero in-plane field
    perp_law: str = "linear"
    b_par_grid: Tuple[float, ...] = (0.0, 0.08, 0.17, 0.25, 0.34, 0.52, 0.58, 0.65)
    single_b_perp_grid: Tuple[float, ...] = tuple(np.linspace(-2e-3, 2e-3, 31))
    squid_b_perp_grid: Tuple[float, ...] = tuple(np.linspace(-0.35e-3, 0.35e-3, 41))
    unstable_band: Optional[Tuple[float, float]] = (0.40, 0.50)  # T, SQUID data blanked
    cavity: Optional[CavityParams] = None  # dress transitions when set
    coupling_intercept: float = 0.057
    coupling_slope: float = 0.01
    coherence: CoherenceEnvironment = field(default_factory=lambda: CoherenceEnvironment(
        slow_noise_a0=0.02, slow_noise_a1=0.05, ramsey_floor=0.05, echo_floor=0.02))
    b0_angle: float = math.radians(-0.15)  # B0 of the vortex loss follows this axis
    include_coherence: bool = True
    parity_visibility: float = 1e-3  # GHz, dispersion above which both branches are emitted
    misalignment: float = math.radians(-0.61)
    alignment_b_y_grid: Tuple[float, ...] = tuple(np.linspace(-0.05, 0.05, 41))
    k: int = DEFAULT_TRUNCATION
    noise: NoiseConfig = NoiseConfig()
    seed: int = 0

    def __post_init__(self):
        bmax = max(abs(b) for b in self.b_par_grid)
        for jj in (self.single, self.squid_jj1, self.squid_jj2):
            if bmax >= jj.b_crit_par:
                raise ValueError(f"b_par grid reaches the critical field {jj.b_crit_par} T")
        bpc = effective_perp_critical_field(self.b_perp_crit, self.single.b_crit_par, bmax, self.perp_law)
        if max(abs(b) for b in self.single_b_perp_grid) >= bpc:
            raise ValueError("single-junction B_perp grid reaches the effective perpendicular critical field")


def _squid_at(cfg: ScenarioConfig, b_par) -> SquidParams:
    e1 = ej_inplane(cfg.squid_jj1, b_par)
    e2 = ej_inplane(cfg.squid_jj2, b_par)
    return SquidParams.from_junctions(e1, e2, cfg.squid_period, cfg.squid_offset)


def single_ej(cfg: ScenarioConfig, b_par, b_perp):
    """Single-junction E_J at (B_par, B_perp): in-plane model times perpendicular GL factor."""
    bc = effective_perp_critical_field(cfg.b_perp_crit, cfg.single.b_crit_par, b_par, cfg.perp_law)
    return ej_perp_suppression(ej_inplane(cfg.single, b_par), b_perp, bc)


def squid_ej(cfg: ScenarioConfig, b_par, b_perp, offset_shift=0.0):
    sq = _squid_at(cfg, b_par)
    return ej_squid(replace(sq, b_perp_offset=sq.b_perp_offset + offset_shift), b_perp)


@dataclass
class SyntheticData:
    spectroscopy: ds.Table
    coherence: Optional[ds.Table]
    alignment: ds.Table
    truth: dict


def truth_table(cfg: ScenarioConfig) -> dict:
    return {
        "relation": {"slope": cfg.relation.slope, "intercept_ghz": cfg.relation.intercept},
        "junctions": {
            name: {"ej0_ghz": jj.ej0, "b_phi0_t": jj.b_phi0, "b_crit_par_t": jj.b_crit_par}
            for name, jj in (("single", cfg.single), ("squid_jj1", cfg.squid_jj1),
                             ("squid_jj2", cfg.squid_jj2))
        },
        "squid_period_t": cfg.squid_period,
        "squid_offset_t": cfg.squid_offset,
        "misalignment_rad": cfg.misalignment,
        "b0_angle_rad": cfg.b0_angle,
    }


def _in_band(cfg, b_par):
    return cfg.unstable_band is not None and cfg.unstable_band[0] <= abs(b_par) <= cfg.unstable_band[1]


def _levels(cfg, ej):
    ej = np.asarray(ej, dtype=float)
    return transmon_transitions(ej, cfg.relation(ej), 0.0, cfg.k)


def _dress(cfg, f_single, f_squid):
    """Dressed (f01, f02/2) of both qubits at one field point."""
    cav = cfg.cavity
    g1 = cfg.coupling_intercept + cfg.coupling_slope * f_single[0]
    g2 = cfg.coupling_intercept + cfg.coupling_slope * f_squid[0]
    c = CavityParams(cav.f_cavity_bare, cav.q_total, max(g1, 0.0), max(g2, 0.0), cav.photon_truncation)
    t = build_and_solve_jc(QutritLevels(*f_single), QutritLevels(*f_squid), c, check_truncation=False)
    return (t.q1.f01, t.q1.f02_half), (t.q2.f01, t.q2.f02_half), t.f_cavity_dressed


def _noisy(rng, f, noise: NoiseConfig):
    f = np.array(f, dtype=float)
    if noise.freq_jitter > 0:
        f = f + rng.normal(0.0, noise.freq_jitter, f.shape)
    if noise.outlier_fraction > 0:
        hit = rng.random(f.shape) < noise.outlier_fraction
        f = np.where(hit, f + rng.uniform(-noise.outlier_span, noise.outlier_span, f.shape), f)
    return f


def _sweep_points(cfg, device, b_par, b_perp, rng):
    """Bare model at every point of one sweep; returns ej, (f01, f02_half) and offset shifts."""
    n = b_perp.size
    shifts = np.zeros(n)
    if device == SQUID and cfg.noise.flux_jump_probability > 0:
        jumps = rng.random(n) < cfg.noise.flux_jump_probability
        signs = np.where(rng.random(n) < 0.5, -1.0, 1.0)
        shifts = np.cumsum(np.where(jumps, signs * 0.5 * cfg.squid_period, 0.0))
    if device == SINGLE:
        ej = np.atleast_1d(single_ej(cfg, b_par, b_perp))
    else:
        ej = np.array([squid_ej(cfg, b_par, b, s) for b, s in zip(b_perp, shifts)])
    return ej, shifts


def generate_dataset(cfg: ScenarioConfig) -> SyntheticData:
    root = np.random.SeedSequence(cfg.seed)
    n_sweeps = 2 * len(cfg.b_par_grid)
    children = root.spawn(n_sweeps + 2)
    spec_tables, coh_tables = [], []
    sweep_id = 0
    f01_zero = {SINGLE: None, SQUID: None}
    for i_b, b_par in enumerate(cfg.b_par_grid):
        for i_d, device in enumerate((SINGLE, SQUID)):
            rng = np.random.default_rng(children[2 * i_b + i_d])
            sweep_id += 1
            if device == SQUID and _in_band(cfg, b_par):
                continue
            grid = np.asarray(cfg.single_b_perp_grid if device == SINGLE else cfg.squid_b_perp_grid)
            ej, shifts = _sweep_points(cfg, device, b_par, grid, rng)
            f1, f2 = _levels(cfg, ej)
            f1, f2 = np.atleast_1d(f1), np.atleast_1d(f2)
            if cfg.cavity is not None:
                other = SQUID if device == SINGLE else SINGLE
                d1, d2 = np.empty_like(f1), np.empty_like(f2)
                for j, b in enumerate(grid):
                    ej_o = single_ej(cfg, b_par, b) if other == SINGLE else squid_ej(cfg, b_par, b)
                    fo = _levels(cfg, ej_o)
                    pair = (f1[j], f2[j])
                    a, bq, _ = _dress(cfg, pair, fo) if device == SINGLE else _dress(cfg, fo, pair)
                    d1[j], d2[j] = a if device == SINGLE else bq
                f1, f2 = d1, d2
            recs = [ds.spectroscopy(device, sweep_id, b_par, grid, "f01", _noisy(rng, f1, cfg.noise)),
                    ds.spectroscopy(device, sweep_id, b_par, grid, "f02_half", _noisy(rng, f2, cfg.noise))]
            # charge-parity branches where the dispersion is resolvable
            ec = cfg.relation(ej)
            disp = np.array([charge_dispersion(float(e), float(c), cfg.k) for e, c in zip(ej, ec)])
            vis = disp > cfg.parity_visibility
            if np.any(vis):
                odd = transmon_transitions(ej[vis], ec[vis], 0.5, cfg.k)[0]
                recs.append(ds.spectroscopy(device, sweep_id, b_par, grid[vis], "f01_even",
                                            _noisy(rng, np.atleast_1d(f1)[vis], cfg.noise)))
                recs.append(ds.spectroscopy(device, sweep_id, b_par, grid[vis], "f01_odd",
                                            _noisy(rng, np.atleast_1d(odd), cfg.noise)))
            spec_tables.append(ds.concat(recs))
            if cfg.include_coherence:
                if f01_zero[device] is None:
                    # zero-field maximum frequency enters the depinning factor
                    ej0 = single_ej(cfg, 0.0, 0.0) if device == SINGLE else squid_ej(cfg, 0.0, cfg.squid_offset)
                    f01_zero[device] = float(_levels(cfg, ej0)[0])
                coh_tables.append(_coherence_sweep(cfg, device, sweep_id, b_par, grid, ej, shifts,
                                                   f01_zero[device], rng))
    meta = {"generator": "magtransmon.synth", "seed": str(cfg.seed),
            "alignment_angle_rad": repr(0.0), "current_source": "synthetic"}
    spec = ds.concat(spec_tables) if spec_tables else ds.empty("spectroscopy")
    spec.meta.update(meta)
    coh = None
    if coh_tables:
        coh = ds.concat(coh_tables)
        coh.meta.update(meta)
    align = generate_alignment(cfg, np.random.default_rng(children[-1]))
    return SyntheticData(spec, coh, align, truth_table(cfg))


def _coherence_sweep(cfg, device, sweep_id, b_par, grid, ej, shifts, f01_zero, rng):
    env = cfg.coherence
    ec = cfg.relation(ej)
    lev = np.atleast_1d(_levels(cfg, ej)[0])
    lev2 = np.atleast_1d(_levels(cfg, ej)[1])
    b0 = math.tan(cfg.b0_angle) * b_par  # vortex-free perpendicular field
    vp = VortexParams(env.vortex.p0, env.vortex.q, env.vortex.f_depin, env.vortex.creep_epsilon, b0)
    env_b = replace(env, vortex=vp)
    if device == SQUID:
        sq = _squid_at(cfg, b_par)
        sens = np.array([sensitivity(replace(sq, b_perp_offset=sq.b_perp_offset + s), cfg.relation, b, cfg.k)
                         for b, s in zip(grid, shifts)]) * 1e-3  # GHz / mT
    else:
        h = 1e-6
        fp = np.atleast_1d(_levels(cfg, single_ej(cfg, b_par, grid + h))[0])
        fm = np.atleast_1d(_levels(cfg, single_ej(cfg, b_par, grid - h))[0])
        sens = np.abs(fp - fm) / (2 * h) * 1e-3
    t1, t2s, t2e = (np.empty(grid.size) for _ in range(3))
    for j in range(grid.size):
        bud = coherence_budget(env_b, ej=float(ej[j]), ec=float(ec[j]), f01=float(lev[j]),
                               anharmonicity=float(2 * lev2[j] - 2 * lev[j]), b_par=b_par,
                               b_perp=float(grid[j]), f01_zero=f01_zero, sensitivity_ghz_per_mt=float(sens[j]))
        t1[j], t2s[j], t2e[j] = bud.t1, bud.t2_ramsey, bud.t2_echo
    nz = cfg.noise
    if nz.t1_lognormal_sigma > 0:
        t1 = t1 * rng.lognormal(0.0, nz.t1_lognormal_sigma, t1.shape)
    if nz.t2_lognormal_sigma > 0:
        t2s = t2s * rng.lognormal(0.0, nz.t2_lognormal_sigma, t2s.shape)
        t2e = t2e * rng.lognormal(0.0, nz.t2_lognormal_sigma, t2e.shape)
    n = grid.size
    return ds.Table("coherence", {
        "device": np.full(n, device, dtype=object), "sweep_id": np.full(n, sweep_id),
        "b_par_t": np.full(n, float(b_par)), "b_perp_t": grid.astype(float), "f01_ghz": lev,
        "t1_us": t1, "t2_star_us": t2s, "t2_echo_us": t2e,
    })


def generate_alignment(cfg: ScenarioConfig, rng=None) -> ds.Table:
    """Rows (b_x, b_y, arch offset): offset drifts as tan(misalignment) * b_y.

    Flux jumps displace isolated rows by half a SQUID period.
    """
    if rng is None:
        rng = np.random.default_rng(np.random.SeedSequence(cfg.seed).spawn(2 * len(cfg.b_par_grid) + 2)[-1])
    by = np.asarray(cfg.alignment_b_y_grid, dtype=float)
    off = cfg.squid_offset + math.tan(cfg.misalignment) * by
    nz = cfg.noise
    if nz.alignment_jitter > 0:
        off = off + rng.normal(0.0, nz.alignment_jitter, by.shape)
    if nz.alignment_jump_fraction > 0:
        n_jump = int(round(nz.alignment_jump_fraction * by.size))
        rows = rng.choice(by.size, size=n_jump, replace=False)
        signs = np.where(rng.random(n_jump) < 0.5, -1.0, 1.0)
        off[rows] += signs * 0.5 * cfg.squid_period
    return ds.Table("alignment", {"b_x_t": np.zeros(by.size), "b_y_t": by, "arch_offset_t": off},
                    {"squid_period_t": repr(cfg.squid_period)})


def three_junction_scenario(**overrides) -> ScenarioConfig:
    """The three-junction scenario built from the published junction table."""
    return replace(ScenarioConfig(), **overrides)
